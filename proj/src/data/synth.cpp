#include "data/synth.hpp"

#include "io/image_io.hpp"
#include "rganet/engine/init.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace rganet {
namespace data {

namespace {

struct ObjectShape {
    bool ellipse;
    Index cy, cx;    // center
    Index ry, rx;    // half extents
    float color[3];
};

bool inside(const ObjectShape& o, Index y, Index x) {
    if (o.ellipse) {
        const double dy = double(y - o.cy) / double(o.ry);
        const double dx = double(x - o.cx) / double(o.rx);
        return dy * dy + dx * dx <= 1.0;
    }
    return std::abs(y - o.cy) <= o.ry && std::abs(x - o.cx) <= o.rx;
}

SegSample render_one(const io::SynthSpec& spec, Rng& rng) {
    const Index h = spec.h, w = spec.w;
    SegSample s;
    s.mask = SegMask(h, w);
    s.image = Tensor<float>(Shape4{1, 3, h, w});

    // textured background: muted base color with per-pixel noise
    float base[3];
    for (int c = 0; c < 3; ++c) base[c] = float(rng.uniform(0.10, 0.45));
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index c = 0; c < 3; ++c)
                s.image.raw()(s.image.offset(0, c, y, x)) =
                    std::clamp(base[c] + float(rng.uniform(-0.08, 0.08)), 0.0f, 1.0f);

    const double target = rng.uniform(spec.frac_lo + 0.01, spec.frac_hi - 0.01);
    const double total = double(h * w);
    int objects = 0;
    auto frac = [&]() {
        Index n = 0;
        for (auto v : s.mask.v) n += (v == 2);
        return double(n) / total;
    };

    while (objects < spec.max_objects && (objects < spec.min_objects || frac() < target)) {
        const double remaining = std::max(0.02, target - frac());
        double area = remaining * total;
        if (objects + 1 < spec.max_objects) area *= rng.uniform(0.45, 0.85);
        const double aspect = rng.uniform(0.6, 1.7);
        Index ry = Index(std::sqrt(area * aspect) / 2.0);
        Index rx = Index(std::sqrt(area / aspect) / 2.0);
        ry = std::clamp<Index>(ry, 3, h / 2 - 2);
        rx = std::clamp<Index>(rx, 3, w / 2 - 2);

        ObjectShape o;
        o.ellipse = rng.uniform() < 0.5;
        o.ry = ry;
        o.rx = rx;
        o.cy = Index(rng.integer(std::uint64_t(h - 2 * ry - 2))) + ry + 1;
        o.cx = Index(rng.integer(std::uint64_t(w - 2 * rx - 2))) + rx + 1;
        for (int c = 0; c < 3; ++c) o.color[c] = float(rng.uniform(0.45, 1.0));

        for (Index y = o.cy - ry; y <= o.cy + ry; ++y)
            for (Index x = o.cx - rx; x <= o.cx + rx; ++x)
                if (inside(o, y, x)) {
                    s.mask.at(y, x) = 2;
                    for (Index c = 0; c < 3; ++c)
                        s.image.raw()(s.image.offset(0, c, y, x)) =
                            std::clamp(o.color[c] + float(rng.uniform(-0.06, 0.06)), 0.0f, 1.0f);
                }
        ++objects;
    }

    // object rims become class 1 (negative samples), drawn darker
    SegMask rim = s.mask;
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (s.mask.at(y, x) != 2) continue;
            const bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                              s.mask.at(y - 1, x) != 2 || s.mask.at(y + 1, x) != 2 ||
                              s.mask.at(y, x - 1) != 2 || s.mask.at(y, x + 1) != 2;
            if (edge) {
                rim.at(y, x) = 1;
                for (Index c = 0; c < 3; ++c)
                    s.image.raw()(s.image.offset(0, c, y, x)) *= 0.45f;
            }
        }
    s.mask = rim;
    return s;
}

} // namespace

std::vector<SegSample> synth_dataset(const io::SynthSpec& spec, std::uint64_t seed) {
    check(spec.count >= 1, "synth: count must be >= 1");
    check(spec.h >= 16 && spec.w >= 16, "synth: size must be at least 16x16");
    check(spec.frac_lo > 0.0 && spec.frac_hi < 0.9 && spec.frac_lo < spec.frac_hi,
          "synth: need 0 < frac_lo < frac_hi < 0.9");
    check(spec.min_objects >= 1 && spec.max_objects >= spec.min_objects,
          "synth: bad object count range");
    std::vector<SegSample> out;
    Rng rng(seed);
    for (int i = 0; i < spec.count; ++i) out.push_back(render_one(spec, rng));
    return out;
}

void write_synth_dataset(const io::SynthSpec& spec, std::uint64_t seed,
                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    auto samples = synth_dataset(spec, seed);
    for (size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%03zu.png", i);
        io::write_rgb((fs::path(out_dir) / "images" / name).string(),
                      io::tensor_to_image(samples[i].image, 0));
        io::write_mask((fs::path(out_dir) / "masks" / name).string(), samples[i].mask);
    }
}

} // namespace data
} // namespace rganet

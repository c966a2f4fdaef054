#include "data/dataset.hpp"

#include "io/image_io.hpp"

#include <algorithm>
#include <filesystem>

namespace rganet {
namespace data {

namespace fs = std::filesystem;

Dataset load_dataset_dir(const std::string& dir, const std::string& label_map_spec) {
    const fs::path images = fs::path(dir) / "images";
    const fs::path masks = fs::path(dir) / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks))
        throw IoError("dataset dir must contain images/ and masks/: " + dir);
    std::map<int, int> label_map;
    if (!label_map_spec.empty()) label_map = io::parse_label_map(label_map_spec);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(images))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw IoError("no images found under " + images.string());

    Dataset ds;
    for (const auto& name : names) {
        const fs::path mask_path = masks / name;
        if (!fs::exists(mask_path)) throw IoError("missing mask for " + name + " in " + masks.string());
        SegSample s;
        s.image = io::image_to_tensor(io::read_image((images / name).string()));
        s.mask = io::read_mask(mask_path.string(), label_map);
        check(s.mask.h == s.image.shape().h && s.mask.w == s.image.shape().w,
              "dataset: mask extents differ from image for " + name);
        ds.samples.push_back(std::move(s));
        ds.names.push_back(name);
    }
    return ds;
}

namespace {

SegSample hflip(const SegSample& in) {
    const Shape4& s = in.image.shape();
    SegSample out;
    out.image = Tensor<float>(s);
    out.mask = SegMask(s.h, s.w);
    for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) {
            const Index sx = s.w - 1 - x;
            out.mask.at(y, x) = in.mask.at(y, sx);
            for (Index c = 0; c < 3; ++c)
                out.image.raw()(out.image.offset(0, c, y, x)) = in.image(0, c, y, sx);
        }
    return out;
}

SegSample shift(const SegSample& in, Index dy, Index dx) {
    const Shape4& s = in.image.shape();
    SegSample out;
    out.image = Tensor<float>(s); // zeros
    out.mask = SegMask(s.h, s.w); // class 0
    for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) {
            const Index sy = y - dy, sx = x - dx;
            if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) continue;
            out.mask.at(y, x) = in.mask.at(sy, sx);
            for (Index c = 0; c < 3; ++c)
                out.image.raw()(out.image.offset(0, c, y, x)) = in.image(0, c, sy, sx);
        }
    return out;
}

SegSample rotate90(const SegSample& in, int quarter_turns) {
    SegSample out = in;
    for (int t = 0; t < quarter_turns; ++t) {
        const Shape4& s = out.image.shape();
        check(s.h == s.w, "rotate90 requires square extents");
        SegSample next;
        next.image = Tensor<float>(s);
        next.mask = SegMask(s.h, s.w);
        for (Index y = 0; y < s.h; ++y)
            for (Index x = 0; x < s.w; ++x) {
                // (y, x) <- (h-1-x, y): clockwise quarter turn
                const Index sy = s.h - 1 - x, sx = y;
                next.mask.at(y, x) = out.mask.at(sy, sx);
                for (Index c = 0; c < 3; ++c)
                    next.image.raw()(next.image.offset(0, c, y, x)) = out.image(0, c, sy, sx);
            }
        out = std::move(next);
    }
    return out;
}

} // namespace

SegSample augment_sample(const SegSample& in, const AugmentFlags& flags, Rng& rng) {
    SegSample out = in;
    if (flags.hflip && rng.uniform() < 0.5) out = hflip(out);
    if (flags.shift) {
        const Index max_dy = std::max<Index>(1, in.mask.h / 10);
        const Index max_dx = std::max<Index>(1, in.mask.w / 10);
        const Index dy = Index(rng.integer(2 * max_dy + 1)) - max_dy;
        const Index dx = Index(rng.integer(2 * max_dx + 1)) - max_dx;
        if (dy != 0 || dx != 0) out = shift(out, dy, dx);
    }
    if (flags.rotate90) {
        const int turns = int(rng.integer(4));
        if (turns) out = rotate90(out, turns);
    }
    return out;
}

Batch make_batch(const std::vector<SegSample>& samples, const std::vector<size_t>& indices,
                 const AugmentFlags& flags, Rng& rng) {
    check(!indices.empty(), "make_batch: empty index list");
    const Shape4& s0 = samples[indices[0]].image.shape();
    Batch b;
    b.images = Tensor<float>(Shape4{static_cast<Index>(indices.size()), 3, s0.h, s0.w});
    for (size_t i = 0; i < indices.size(); ++i) {
        SegSample s = augment_sample(samples[indices[i]], flags, rng);
        std::copy_n(s.image.array().data(), s.image.numel(),
                    b.images.raw().data() + Index(i) * s.image.numel());
        b.targets.push_back(std::move(s.mask));
    }
    return b;
}

} // namespace data
} // namespace rganet

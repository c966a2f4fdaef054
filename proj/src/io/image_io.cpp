#include "io/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rganet {
namespace io {

namespace {

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

ImageU8 read_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open image: " + path);
    FileCloser closer{f};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported channel count " + std::to_string(ch) + " in " + path);
    }

    ImageU8 img;
    img.h = static_cast<Index>(h);
    img.w = static_cast<Index>(w);
    img.channels = ch;
    img.data.resize(static_cast<size_t>(h) * w * ch);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.data.data() + size_t(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    FileCloser closer{f};

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (Index y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.data.data() + size_t(y) * img.w * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageU8 read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P6") throw IoError("unsupported PNM type in " + path);
    auto next_int = [&f, &path]() {
        int v;
        while (true) {
            f >> std::ws;
            if (f.peek() == '#') {
                std::string line;
                std::getline(f, line);
                continue;
            }
            if (!(f >> v)) throw IoError("malformed PNM header: " + path);
            return v;
        }
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path);
    f.get(); // single whitespace after the header
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.channels = magic == "P5" ? 1 : 3;
    img.data.resize(static_cast<size_t>(h) * w * img.channels);
    f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!f) throw IoError("truncated PNM: " + path);
    return img;
}

void write_pnm(const std::string& path, const ImageU8& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (!f) throw IoError("write failed: " + path);
}

bool has_pnm_extension(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot == std::string::npos) return false;
    const std::string ext = path.substr(dot);
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

} // namespace

ImageU8 read_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open image: " + path);
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm(path);
    return read_png(path);
}

void write_gray(const std::string& path, const ImageU8& img) {
    check(img.channels == 1, "write_gray: image has " + std::to_string(img.channels) + " channels");
    has_pnm_extension(path) ? write_pnm(path, img) : write_png(path, img);
}

void write_rgb(const std::string& path, const ImageU8& img) {
    check(img.channels == 3, "write_rgb: image has " + std::to_string(img.channels) + " channels");
    has_pnm_extension(path) ? write_pnm(path, img) : write_png(path, img);
}

std::map<int, int> parse_label_map(const std::string& spec) {
    std::map<int, int> out;
    std::istringstream is(spec);
    std::string item;
    while (std::getline(is, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw IoError("bad label map entry '" + item + "' (want level:class)");
        out[std::stoi(item.substr(0, colon))] = std::stoi(item.substr(colon + 1));
    }
    return out;
}

SegMask read_mask(const std::string& path, const std::map<int, int>& label_map) {
    ImageU8 img = read_image(path);
    if (img.channels != 1) throw IoError("mask is not single-channel: " + path);
    SegMask m(img.h, img.w);
    for (size_t i = 0; i < img.data.size(); ++i) {
        int v = img.data[i];
        if (!label_map.empty()) {
            auto it = label_map.find(v);
            if (it == label_map.end())
                throw IoError("mask level " + std::to_string(v) + " not in label map: " + path);
            v = it->second;
        }
        if (v < 0 || v > 2)
            throw IoError("mask class " + std::to_string(v) + " outside {0,1,2}: " + path);
        m.v[i] = static_cast<std::uint8_t>(v);
    }
    return m;
}

void write_mask(const std::string& path, const SegMask& mask) {
    ImageU8 img;
    img.h = mask.h;
    img.w = mask.w;
    img.channels = 1;
    img.data = mask.v;
    write_gray(path, img);
}

Tensor<float> image_to_tensor(const ImageU8& img) {
    check(img.channels == 3, "image_to_tensor: expected RGB");
    Tensor<float> t(Shape4{1, 3, img.h, img.w});
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            for (Index c = 0; c < 3; ++c)
                t.raw()(t.offset(0, c, y, x)) = float(img.at(y, x, c)) / 255.0f;
    return t;
}

ImageU8 tensor_to_image(const Tensor<float>& t, Index item) {
    const Shape4& s = t.shape();
    check(s.c == 3, "tensor_to_image: expected 3 channels");
    ImageU8 img;
    img.h = s.h;
    img.w = s.w;
    img.channels = 3;
    img.data.resize(static_cast<size_t>(s.h * s.w * 3));
    for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x)
            for (Index c = 0; c < 3; ++c) {
                float v = t(item, c, y, x);
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                img.data[static_cast<size_t>((y * s.w + x) * 3 + c)] =
                    static_cast<std::uint8_t>(v * 255.0f + 0.5f);
            }
    return img;
}

} // namespace io
} // namespace rganet

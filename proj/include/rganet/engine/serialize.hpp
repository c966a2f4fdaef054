#pragma once

#include "rganet/engine/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rganet {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat binary parameter container.
/// Layout: magic "RGAN", u32 version, u32 entry count, then per entry:
/// u32 name length, UTF-8 name, u32 rank, rank x u32 extents, and the
/// payload as raw little-endian 32-bit floats.
class ParamContainer {
public:
    struct Entry {
        std::vector<std::uint32_t> extents;
        std::vector<float> data;
    };

    static constexpr std::uint32_t kVersion = 1;

    void put(const std::string& name, std::vector<std::uint32_t> extents, std::vector<float> data) {
        std::uint64_t n = 1;
        for (auto e : extents) n *= e;
        if (n != data.size()) throw IoError("container entry '" + name + "': extents/data mismatch");
        entries_[name] = Entry{std::move(extents), std::move(data)};
    }

    template <typename Scalar>
    void put_tensor(const std::string& name, const Tensor<Scalar>& t) {
        const Shape4& s = t.shape();
        std::vector<float> d(static_cast<size_t>(t.numel()));
        for (Index i = 0; i < t.numel(); ++i) d[static_cast<size_t>(i)] = static_cast<float>(t.array()(i));
        put(name,
            {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
             static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
            std::move(d));
    }

    template <typename Scalar>
    void put_vector(const std::string& name, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& v) {
        std::vector<float> d(static_cast<size_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) d[static_cast<size_t>(i)] = static_cast<float>(v(i));
        put(name, {static_cast<std::uint32_t>(v.size())}, std::move(d));
    }

    /// Config text rides along as one byte per float under this entry name.
    void put_text(const std::string& name, const std::string& text) {
        std::vector<float> d(text.size());
        for (size_t i = 0; i < text.size(); ++i)
            d[i] = static_cast<float>(static_cast<unsigned char>(text[i]));
        put(name, {static_cast<std::uint32_t>(text.size())}, std::move(d));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const Entry& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw IoError("container has no entry '" + name + "'");
        return it->second;
    }

    template <typename Scalar>
    Tensor<Scalar> get_tensor(const std::string& name) const {
        const Entry& e = get(name);
        if (e.extents.size() != 4) throw IoError("entry '" + name + "' is not rank 4");
        Shape4 s{static_cast<Index>(e.extents[0]), static_cast<Index>(e.extents[1]),
                 static_cast<Index>(e.extents[2]), static_cast<Index>(e.extents[3])};
        Tensor<Scalar> t(s);
        for (size_t i = 0; i < e.data.size(); ++i)
            t.raw()(static_cast<Index>(i)) = static_cast<Scalar>(e.data[i]);
        return t;
    }

    template <typename Scalar>
    Eigen::Array<Scalar, Eigen::Dynamic, 1> get_vector(const std::string& name) const {
        const Entry& e = get(name);
        Eigen::Array<Scalar, Eigen::Dynamic, 1> v(static_cast<Eigen::Index>(e.data.size()));
        for (size_t i = 0; i < e.data.size(); ++i)
            v(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(e.data[i]);
        return v;
    }

    std::string get_text(const std::string& name) const {
        const Entry& e = get(name);
        std::string s;
        s.reserve(e.data.size());
        for (float f : e.data) s.push_back(static_cast<char>(static_cast<unsigned char>(f)));
        return s;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open for writing: " + path);
        f.write("RGAN", 4);
        write_u32(f, kVersion);
        write_u32(f, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [name, e] : entries_) {
            write_u32(f, static_cast<std::uint32_t>(name.size()));
            f.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(f, static_cast<std::uint32_t>(e.extents.size()));
            for (auto x : e.extents) write_u32(f, x);
            for (float v : e.data) write_f32(f, v);
        }
        if (!f) throw IoError("write failed: " + path);
    }

    static ParamContainer load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open: " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, "RGAN", 4) != 0)
            throw IoError("not a parameter container (bad magic): " + path);
        const std::uint32_t version = read_u32(f, path);
        if (version != kVersion)
            throw IoError("unsupported container version " + std::to_string(version) + ": " + path);
        const std::uint32_t count = read_u32(f, path);
        ParamContainer c;
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t name_len = read_u32(f, path);
            std::string name(name_len, '\0');
            f.read(name.data(), name_len);
            const std::uint32_t rank = read_u32(f, path);
            Entry e;
            std::uint64_t n = 1;
            for (std::uint32_t r = 0; r < rank; ++r) {
                e.extents.push_back(read_u32(f, path));
                n *= e.extents.back();
            }
            e.data.resize(n);
            for (std::uint64_t j = 0; j < n; ++j) e.data[j] = read_f32(f, path);
            if (!f) throw IoError("truncated container: " + path);
            c.entries_[name] = std::move(e);
        }
        return c;
    }

private:
    static void write_u32(std::ofstream& f, std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        f.write(reinterpret_cast<const char*>(b), 4);
    }

    static void write_f32(std::ofstream& f, float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        write_u32(f, u);
    }

    static std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        if (!f) throw IoError("truncated container: " + path);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    static float read_f32(std::ifstream& f, const std::string& path) {
        const std::uint32_t u = read_u32(f, path);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }

    std::map<std::string, Entry> entries_;
};

} // namespace rganet

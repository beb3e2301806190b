#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vac/errors.hpp"
#include "vac/tensor.hpp"

namespace vac {

// Binary tensor container. Layout, no padding anywhere:
//   magic   4 bytes "VACB"
//   version u32 (currently 1)
//   count   u32
//   then per tensor:
//     name_len u16, name bytes (UTF-8)
//     rank     u8
//     extents  rank x u64
//     payload  product(extents) x f64
// All integers and floats little-endian.
namespace ckpt {

constexpr char kMagic[4] = {'V', 'A', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint: truncated while reading " + what);
    return v;
}

} // namespace ckpt

// Tensors keyed by name; map keeps serialization order stable and lookups dull.
template <class S>
using TensorMap = std::map<std::string, Tensor<S>>;

template <class S>
void save_tensors(std::ostream& os, const TensorMap<S>& tensors) {
    os.write(ckpt::kMagic, 4);
    ckpt::put(os, ckpt::kVersion);
    ckpt::put(os, std::uint32_t(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw IoError("checkpoint: tensor name too long: " + name);
        ckpt::put(os, std::uint16_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        ckpt::put(os, std::uint8_t(t.rank()));
        for (std::size_t e : t.shape) ckpt::put(os, std::uint64_t(e));
        if constexpr (std::is_same_v<S, double>) {
            os.write(reinterpret_cast<const char*>(t.ptr()),
                     std::streamsize(t.size() * sizeof(double)));
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) ckpt::put(os, double(t[i]));
        }
    }
    if (!os) throw IoError("checkpoint: write failed");
}

template <class S>
TensorMap<S> load_tensors(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic (not a VACB file)");
    const auto version = ckpt::get<std::uint32_t>(is, "version");
    if (version != ckpt::kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = ckpt::get<std::uint32_t>(is, "tensor count");
    TensorMap<S> out;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = ckpt::get<std::uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("checkpoint: truncated while reading tensor name");
        const auto rank = ckpt::get<std::uint8_t>(is, "rank of '" + name + "'");
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape)
            e = std::size_t(ckpt::get<std::uint64_t>(is, "extent of '" + name + "'"));
        Tensor<S> ten(shape);
        if constexpr (std::is_same_v<S, double>) {
            is.read(reinterpret_cast<char*>(ten.ptr()),
                    std::streamsize(ten.size() * sizeof(double)));
            if (!is) throw IoError("checkpoint: truncated payload in '" + name + "'");
        } else {
            for (std::size_t i = 0; i < ten.size(); ++i)
                ten[i] = S(ckpt::get<double>(is, "payload of '" + name + "'"));
        }
        if (out.count(name)) throw IoError("checkpoint: duplicate tensor '" + name + "'");
        out.emplace(name, std::move(ten));
    }
    return out;
}

template <class S>
void save_tensors_file(const std::string& path, const TensorMap<S>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    save_tensors(os, tensors);
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

template <class S>
TensorMap<S> load_tensors_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return load_tensors<S>(is);
}

} // namespace vac

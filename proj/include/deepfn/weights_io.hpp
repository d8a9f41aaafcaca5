#pragma once

// Binary weights container shared by the normalizer ("DFN1") and the
// classifier ("DFC1"):
//
//   magic            4 bytes
//   version          u32 (= 1)
//   descriptor_count u32, then per entry: name (u32 length + bytes), value i64
//   blob_count       u32, then per blob: name (u32 length + bytes),
//                    rank u32, dims u32 x rank, data f32 x prod(dims)
//
// All integers and floats are little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deepfn/network.hpp"

namespace deepfn {

class WeightsFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct WeightsContainer {
    std::string magic;
    std::vector<std::pair<std::string, std::int64_t>> descriptor;
    std::vector<NamedTensor> blobs;

    std::int64_t descriptor_value(const std::string& key) const {
        for (const auto& [k, v] : descriptor)
            if (k == key) return v;
        throw WeightsFormatError("weights descriptor has no key '" + key + "'");
    }
};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw WeightsFormatError("truncated weights file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint32_t>(out, std::uint32_t(s.size()));
    out.write(s.data(), std::streamsize(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto n = get_le<std::uint32_t>(in);
    if (n > (1u << 20)) throw WeightsFormatError("implausible string length in weights file");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw WeightsFormatError("truncated weights file");
    return s;
}

}  // namespace detail

inline void write_weights(std::ostream& out, const WeightsContainer& c) {
    require(c.magic.size() == 4, "weights magic must be 4 bytes");
    out.write(c.magic.data(), 4);
    detail::put_le<std::uint32_t>(out, 1);
    detail::put_le<std::uint32_t>(out, std::uint32_t(c.descriptor.size()));
    for (const auto& [k, v] : c.descriptor) {
        detail::put_string(out, k);
        detail::put_le<std::int64_t>(out, v);
    }
    detail::put_le<std::uint32_t>(out, std::uint32_t(c.blobs.size()));
    for (const auto& blob : c.blobs) {
        detail::put_string(out, blob.name);
        detail::put_le<std::uint32_t>(out, std::uint32_t(blob.value.rank()));
        for (auto d : blob.value.shape()) detail::put_le<std::uint32_t>(out, std::uint32_t(d));
        for (float v : blob.value.data()) detail::put_le<float>(out, v);
    }
}

inline WeightsContainer read_weights(std::istream& in) {
    WeightsContainer c;
    c.magic.assign(4, '\0');
    if (!in.read(c.magic.data(), 4)) throw WeightsFormatError("weights file too short for magic");
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != 1) throw WeightsFormatError("unsupported weights version " + std::to_string(version));
    const auto nd = detail::get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < nd; ++i) {
        std::string k = detail::get_string(in);
        c.descriptor.emplace_back(std::move(k), detail::get_le<std::int64_t>(in));
    }
    const auto nb = detail::get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < nb; ++i) {
        NamedTensor blob;
        blob.name = detail::get_string(in);
        const auto rank = detail::get_le<std::uint32_t>(in);
        if (rank == 0 || rank > 8) throw WeightsFormatError("bad rank for blob " + blob.name);
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_le<std::uint32_t>(in);
        std::vector<float> data(numel(shape));
        for (auto& v : data) v = detail::get_le<float>(in);
        blob.value = Tensor<float>(std::move(shape), std::move(data));
        c.blobs.push_back(std::move(blob));
    }
    return c;
}

inline void save_weights(const std::filesystem::path& path, const WeightsContainer& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write weights file " + path.string());
    write_weights(out, c);
}

inline WeightsContainer load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights file " + path.string());
    return read_weights(in);
}

/// Appends a network's parameters as blobs (deep copies).
inline void append_blobs(WeightsContainer& c, const Sequential& net) {
    for (const auto& p : net.named_parameters()) c.blobs.push_back({p.name, p.value.clone()});
}

/// Copies blob values into a network's parameters by name; every parameter must be present.
inline void assign_blobs(const WeightsContainer& c, Sequential& net) {
    for (auto& p : net.named_parameters()) {
        const NamedTensor* found = nullptr;
        for (const auto& b : c.blobs)
            if (b.name == p.name) found = &b;
        if (!found) throw WeightsFormatError("weights file lacks parameter " + p.name);
        if (found->value.shape() != p.value.shape())
            throw WeightsFormatError("parameter " + p.name + " has shape " + to_string(found->value.shape()) +
                                     ", expected " + to_string(p.value.shape()));
        std::copy(found->value.data().begin(), found->value.data().end(), p.value.mutable_data().begin());
    }
}

}  // namespace deepfn

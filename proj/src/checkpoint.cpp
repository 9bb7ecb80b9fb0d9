#include "roattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace roattn::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
void put(std::string& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
    }
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(const std::string& data, std::size_t& pos) {
    if (pos + sizeof(T) > data.size()) {
        throw std::runtime_error("checkpoint truncated");
    }
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
    }
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void save(const sim::SimParams& params, const std::string& path) {
    auto& mutable_params = const_cast<sim::SimParams&>(params);
    const std::vector<sim::ParamView> views = sim::param_views(mutable_params);

    std::string manifest;
    std::string payload;
    for (const sim::ParamView& v : views) {
        put<std::uint32_t>(manifest, static_cast<std::uint32_t>(v.name.size()));
        manifest.append(v.name);
        put<std::uint32_t>(manifest, static_cast<std::uint32_t>(v.shape.size()));
        for (std::size_t dim : v.shape) {
            put<std::uint64_t>(manifest, static_cast<std::uint64_t>(dim));
        }
        put<std::uint64_t>(manifest, static_cast<std::uint64_t>(payload.size()));
        for (std::size_t i = 0; i < v.size; ++i) {
            put<double>(payload, v.data[i]);
        }
    }

    std::string header;
    header.append(kMagic, sizeof kMagic);
    put<std::uint32_t>(header, kVersion);
    put<std::uint64_t>(header, static_cast<std::uint64_t>(views.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    }
    out << header << manifest << payload;
    if (!out) {
        throw std::runtime_error("checkpoint write failed: " + path);
    }
}

void load(sim::SimParams& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    if (data.size() < sizeof kMagic ||
        std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("bad checkpoint magic: " + path);
    }
    pos += sizeof kMagic;
    const auto version = get<std::uint32_t>(data, pos);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto entries = get<std::uint64_t>(data, pos);

    struct Entry {
        std::string name;
        std::vector<std::uint64_t> shape;
        std::uint64_t offset;
    };
    std::vector<Entry> manifest;
    manifest.reserve(entries);
    for (std::uint64_t e = 0; e < entries; ++e) {
        Entry entry;
        const auto name_len = get<std::uint32_t>(data, pos);
        if (pos + name_len > data.size()) {
            throw std::runtime_error("checkpoint truncated");
        }
        entry.name.assign(data.data() + pos, name_len);
        pos += name_len;
        const auto ndim = get<std::uint32_t>(data, pos);
        for (std::uint32_t i = 0; i < ndim; ++i) {
            entry.shape.push_back(get<std::uint64_t>(data, pos));
        }
        entry.offset = get<std::uint64_t>(data, pos);
        manifest.push_back(std::move(entry));
    }
    const std::size_t payload_base = pos;

    std::vector<sim::ParamView> views = sim::param_views(params);
    if (views.size() != manifest.size()) {
        throw std::runtime_error("checkpoint entry count mismatch");
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        sim::ParamView& v = views[i];
        const Entry& entry = manifest[i];
        if (entry.name != v.name) {
            throw std::runtime_error("checkpoint entry name mismatch: " + entry.name +
                                     " vs " + v.name);
        }
        if (entry.shape.size() != v.shape.size()) {
            throw std::runtime_error("checkpoint shape mismatch for " + v.name);
        }
        std::size_t count = 1;
        for (std::size_t dmi = 0; dmi < entry.shape.size(); ++dmi) {
            if (entry.shape[dmi] != v.shape[dmi]) {
                throw std::runtime_error("checkpoint shape mismatch for " + v.name);
            }
            count *= entry.shape[dmi];
        }
        std::size_t rpos = payload_base + entry.offset;
        for (std::size_t k = 0; k < count; ++k) {
            v.data[k] = get<double>(data, rpos);
        }
    }
}

}  // namespace roattn::ckpt

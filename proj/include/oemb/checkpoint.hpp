#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "oemb/data.hpp"
#include "oemb/error.hpp"
#include "oemb/params.hpp"

namespace oemb {

// OEMB: "OEMB" | u32 version | u32 count | count x tensor
// tensor: u16 name_len | name | u8 rank | rank x u32 dim | f32 payload
// All integers and floats little-endian.

inline constexpr std::array<char, 4> kCheckpointMagic{'O', 'E', 'M', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ValidationError(source + ": truncated checkpoint");
    }
    return v;
}

/// Writes to a sibling temp file, then renames over `path`.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        writer(out);
        out.flush();
        if (!out) {
            throw Error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Sidecar metadata path for a checkpoint: `model.oemb` -> `model.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    return p.replace_extension(".json");
}

template <typename Scalar>
nlohmann::json checkpoint_metadata(const ModelParams<Scalar>& p) {
    return {{"arch", std::string(to_string(p.arch))},
            {"d_w", p.dims.word},
            {"d_v", p.dims.video},
            {"d_e", p.dims.embed},
            {"d_h", p.dims.embed},
            {"d_a", p.dims.match}};
}

template <typename Scalar>
void write_tensors(std::ostream& out, const ModelParams<Scalar>& p) {
    const auto tensors = p.tensors();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) {
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        std::vector<float> raw(t.values.begin(), t.values.end());
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    }
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<Scalar>& p) {
    detail::write_atomically(path, [&](std::ostream& out) { write_tensors(out, p); });
    detail::write_atomically(sidecar_path(path),
                             [&](std::ostream& out) { out << checkpoint_metadata(p).dump(2) << '\n'; });
}

struct NamedTensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> values;
};

inline std::unordered_map<std::string, NamedTensor> read_tensors(std::istream& in, const std::string& source) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
        throw ValidationError(source + ": bad magic, not an OEMB checkpoint");
    }
    const auto version = detail::get<std::uint32_t>(in, source);
    if (version != kCheckpointVersion) {
        throw ValidationError(source + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = detail::get<std::uint32_t>(in, source);
    std::unordered_map<std::string, NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = detail::get<std::uint16_t>(in, source);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) {
            throw ValidationError(source + ": truncated checkpoint");
        }
        NamedTensor t;
        const auto rank = detail::get<std::uint8_t>(in, source);
        std::size_t n = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            t.shape.push_back(detail::get<std::uint32_t>(in, source));
            n *= t.shape.back();
        }
        t.values.resize(n);
        if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * 4))) {
            throw ValidationError(source + ": truncated payload for tensor '" + name + "'");
        }
        if (!out.emplace(name, std::move(t)).second) {
            throw ValidationError(source + ": duplicate tensor '" + name + "'");
        }
    }
    return out;
}

template <typename Scalar>
ModelParams<Scalar> params_from_metadata(const nlohmann::json& meta) {
    auto arch = parse_arch(meta.at("arch").get<std::string>());
    if (!arch) {
        throw ValidationError("checkpoint metadata has unknown arch");
    }
    Dims d{meta.at("d_w").get<std::size_t>(), meta.at("d_v").get<std::size_t>(), meta.at("d_e").get<std::size_t>(),
           meta.at("d_a").get<std::size_t>()};
    if (meta.contains("d_h") && meta["d_h"].get<std::size_t>() != d.embed) {
        throw ValidationError("checkpoint metadata: d_h must equal d_e");
    }
    return ModelParams<Scalar>(*arch, d);
}

template <typename Scalar = double>
ModelParams<Scalar> load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json meta;
    {
        auto in = detail::open_input(sidecar_path(path));
        try {
            meta = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(sidecar_path(path).string() + ": " + e.what());
        }
    }
    auto p = params_from_metadata<Scalar>(meta);
    auto in = detail::open_input(path, std::ios::binary);
    auto tensors = read_tensors(in, path.string());
    for (auto& t : p.tensors()) {
        auto it = tensors.find(std::string(t.name));
        if (it == tensors.end()) {
            throw ValidationError(path.string() + ": missing tensor '" + std::string(t.name) + "'");
        }
        const auto& src = it->second;
        if (!std::equal(src.shape.begin(), src.shape.end(), t.shape.begin(), t.shape.end())) {
            throw ValidationError(path.string() + ": shape mismatch for tensor '" + std::string(t.name) + "'");
        }
        std::copy(src.values.begin(), src.values.end(), t.values.begin());
    }
    return p;
}

}  // namespace oemb

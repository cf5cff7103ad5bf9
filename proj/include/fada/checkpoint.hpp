#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fada/idx.hpp"
#include "fada/models.hpp"

// Checkpoint container: "FADC" 0x01, LE u32 manifest length, manifest
// JSON, LE u32 tensor count, then per tensor: LE u32 name length, name,
// LE u32 rank, LE u32 dims, LE f32 values.
namespace fada::checkpoint {

inline constexpr std::array<char, 4> kMagic{'F', 'A', 'D', 'C'};
inline constexpr std::uint8_t kVersion = 0x01;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Manifest {
    std::string arch;
    std::uint64_t seed = 0;
    std::string stage;
    std::string activation = "relu";
    bool embed_final_activation = true;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    std::size_t width = 0;
    std::size_t classes = 10;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = std::uint32_t{bytes[pos]} | (std::uint32_t{bytes[pos + 1]} << 8) |
                          (std::uint32_t{bytes[pos + 2]} << 16) | (std::uint32_t{bytes[pos + 3]} << 24);
        pos += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
    }
};

}  // namespace detail

inline nlohmann::json to_json(const Manifest& m) {
    return {{"arch", m.arch},
            {"seed", m.seed},
            {"stage", m.stage},
            {"activation", m.activation},
            {"embed_final_activation", m.embed_final_activation},
            {"input_dim", m.input_dim},
            {"hidden", m.hidden},
            {"width", m.width},
            {"classes", m.classes}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.arch = j.at("arch").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.stage = j.at("stage").get<std::string>();
    m.activation = j.at("activation").get<std::string>();
    m.embed_final_activation = j.at("embed_final_activation").get<bool>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.hidden = j.at("hidden").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.classes = j.at("classes").get<std::size_t>();
    return m;
}

template <typename T>
Manifest describe(ModelBundle<T>& m, const std::string& stage) {
    Manifest out;
    out.arch = m.arch_id();
    out.seed = m.seed;
    out.stage = stage;
    out.activation = to_string(m.options.activation);
    out.embed_final_activation = m.options.embed_final_activation;
    out.width = m.width();
    out.classes = m.h.classes();
    if (auto* v = std::get_if<VectorEmbeddingNet<T>>(&m.g)) {
        out.input_dim = v->input_shape()[0];
        out.hidden = v->fc1.out();
    }
    return out;
}

template <typename T>
std::vector<std::uint8_t> encode(ModelBundle<T>& m, const std::string& stage) {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    const std::string manifest = to_json(describe(m, stage)).dump();
    detail::put_u32(out, static_cast<std::uint32_t>(manifest.size()));
    out.insert(out.end(), manifest.begin(), manifest.end());
    const auto params = m.all_parameters();
    detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (auto* p : params) {
        detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.insert(out.end(), p->name.begin(), p->name.end());
        detail::put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
        for (auto d : p->value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (auto v : p->value.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

template <typename T>
ModelBundle<T> decode(std::span<const std::uint8_t> bytes, Manifest* manifest_out = nullptr) {
    detail::Reader r{bytes};
    if (r.str(4) != std::string(kMagic.begin(), kMagic.end())) throw CheckpointError("checkpoint: bad magic");
    if (r.str(1)[0] != static_cast<char>(kVersion)) throw CheckpointError("checkpoint: unsupported version");
    const auto manifest = manifest_from_json(nlohmann::json::parse(r.str(r.u32())));
    ArchitectureOptions opts{parse_activation(manifest.activation), manifest.embed_final_activation};
    ModelBundle<T> m = manifest.arch == EmbeddingNet<T>::arch_id()
                           ? init_models<T>(manifest.seed, opts, manifest.classes)
                           : init_vector_models<T>(manifest.input_dim, manifest.hidden, manifest.width,
                                                   manifest.classes, manifest.seed, opts);
    std::map<std::string, Parameter<T>*> by_name;
    for (auto* p : m.all_parameters()) by_name[p->name] = p;
    const std::uint32_t count = r.u32();
    if (count != by_name.size()) throw CheckpointError("checkpoint: tensor count does not match architecture");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = r.str(r.u32());
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint: unknown tensor '" + name + "'");
        Shape shape(r.u32());
        for (auto& d : shape) d = r.u32();
        if (shape != it->second->value.shape()) {
            throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                  shape_str(it->second->value.shape()));
        }
        for (auto& v : it->second->value.storage()) v = static_cast<T>(std::bit_cast<float>(r.u32()));
    }
    if (r.pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes");
    if (manifest_out) *manifest_out = manifest;
    return m;
}

template <typename T>
void save(ModelBundle<T>& m, const std::string& stage, const std::string& path) {
    const auto bytes = encode(m, stage);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
ModelBundle<T> load(const std::string& path, Manifest* manifest_out = nullptr) {
    return decode<T>(idx::read_file_bytes(path), manifest_out);
}

}  // namespace fada::checkpoint

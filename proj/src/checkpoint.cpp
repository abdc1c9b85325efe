#include "ditpaint/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ditpaint/media_io.hpp"

namespace ditpaint {

using nlohmann::json;

namespace {

constexpr uint32_t kCkptVersion = 1;

json config_to_json(const ModelConfig& c) {
    return json{{"num_blocks", c.num_blocks},
                {"num_heads", c.num_heads},
                {"head_dim", c.head_dim},
                {"ffn_ratio", c.ffn_ratio},
                {"t_freq_dim", c.t_freq_dim},
                {"output_mode", c.output_mode == OutputMode::Paper2c ? "paper2c" : "velocity"},
                {"latent_channels", c.latent_channels},
                {"mask_channels", c.mask_channels}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.num_blocks = j.at("num_blocks").get<size_t>();
    c.num_heads = j.at("num_heads").get<size_t>();
    c.head_dim = j.at("head_dim").get<size_t>();
    c.ffn_ratio = j.at("ffn_ratio").get<size_t>();
    c.t_freq_dim = j.at("t_freq_dim").get<size_t>();
    const std::string mode = j.at("output_mode").get<std::string>();
    if (mode == "paper2c")
        c.output_mode = OutputMode::Paper2c;
    else if (mode == "velocity")
        c.output_mode = OutputMode::VelocityOnly;
    else
        throw std::invalid_argument("checkpoint: unknown output_mode " + mode);
    c.latent_channels = j.at("latent_channels").get<size_t>();
    c.mask_channels = j.at("mask_channels").get<size_t>();
    c.validate();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto manifest = param_manifest(ckpt.config);
    json tensors = json::array();
    for (const auto& [name, shape] : manifest) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end())
            throw std::invalid_argument("save_checkpoint: missing parameter " + name);
        if (it->second.shape() != shape)
            throw std::invalid_argument("save_checkpoint: shape mismatch for " + name);
        tensors.push_back(json{{"name", name}, {"shape", shape}});
    }
    if (ckpt.params.size() != manifest.size())
        throw std::invalid_argument("save_checkpoint: parameter set does not match manifest");
    json header{{"config", config_to_json(ckpt.config)},
                {"step", ckpt.step},
                {"tensors", tensors}};
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write("DTCK", 4);
    const uint32_t version = kCkptVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = hs.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, shape] : manifest) write_tensor_stream(os, ckpt.params.at(name));
    if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DTCK", 4) != 0)
        throw std::invalid_argument("bad checkpoint magic in " + path.string() +
                                    ", expected DTCK");
    uint32_t version = 0;
    if (!is.read(reinterpret_cast<char*>(&version), sizeof(version)) || version != kCkptVersion)
        throw std::invalid_argument("unsupported checkpoint version in " + path.string());
    uint64_t hlen = 0;
    if (!is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen)))
        throw std::invalid_argument("truncated checkpoint header: " + path.string());
    std::string hs(hlen, '\0');
    if (!is.read(hs.data(), static_cast<std::streamsize>(hlen)))
        throw std::invalid_argument("truncated checkpoint header: " + path.string());
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.step = header.at("step").get<uint64_t>();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        Tensor<float> t = read_tensor_stream(is);
        if (t.shape() != entry.at("shape").get<std::vector<size_t>>())
            throw std::invalid_argument("checkpoint tensor shape mismatch for " + name);
        ckpt.params.emplace(name, std::move(t));
    }
    // Cross-check against the manifest so a truncated or renamed set fails loudly.
    const auto manifest = param_manifest(ckpt.config);
    if (ckpt.params.size() != manifest.size())
        throw std::invalid_argument("checkpoint parameter count mismatch in " + path.string());
    for (const auto& [name, shape] : manifest) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end() || it->second.shape() != shape)
            throw std::invalid_argument("checkpoint missing or malformed parameter " + name);
    }
    return ckpt;
}

}  // namespace ditpaint

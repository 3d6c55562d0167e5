// SPDX-License-Identifier: Apache-2.0
#include "ngc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ngc/common.hpp"

namespace ngc {

namespace {

constexpr char kMagic[8] = {'N', 'G', 'C', 'C', 'K', 'P', 'T', '1'};

void write_u64_le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_le(os, bits);
}

double read_f64_le(std::istream& is) {
    uint64_t bits = read_u64_le(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"n_layers", cfg.n_layers}, {"n_heads", cfg.n_heads},
                          {"d_model", cfg.d_model},   {"vocab", cfg.vocab},
                          {"max_seq", cfg.max_seq},   {"seed", cfg.seed},
                          {"rope_base", cfg.rope_base}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.max_seq = j.at("max_seq").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.rope_base = j.at("rope_base").get<double>();
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    NGC_CHECK_STATE(os.good(), "cannot open checkpoint for writing: " + path);
    nlohmann::json header;
    header["config"] = config_to_json(cfg);
    auto named = params.named_tensors();
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, t] : named)
        table.push_back({{"name", name}, {"shape", t->shape()}});
    header["tensors"] = table;
    std::string hs = header.dump();
    os.write(kMagic, 8);
    write_u64_le(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : named)
        for (double v : t->values()) write_f64_le(os, v);
    NGC_CHECK_STATE(os.good(), "checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    NGC_CHECK_STATE(is.good(), "cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    NGC_CHECK_STATE(is.good() && std::memcmp(magic, kMagic, 8) == 0,
                    "not a checkpoint file: " + path);
    uint64_t hlen = read_u64_le(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    NGC_CHECK_STATE(is.good(), "truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    LoadedCheckpoint out;
    out.config = config_from_json(header.at("config"));
    out.config.validate();
    out.params = init_params(out.config);  // correct shapes, then overwritten below
    auto named = out.params.named_tensors();
    const auto& table = header.at("tensors");
    NGC_CHECK_STATE(table.size() == named.size(), "checkpoint tensor table size mismatch");
    for (size_t i = 0; i < named.size(); ++i) {
        NGC_CHECK_STATE(table[i].at("name").get<std::string>() == named[i].first,
                        "checkpoint tensor name mismatch: " + named[i].first);
        Shape shape = table[i].at("shape").get<Shape>();
        NGC_CHECK_STATE(shape == named[i].second->shape(),
                        "checkpoint tensor shape mismatch: " + named[i].first);
        auto& vals = named[i].second->values_mut();
        for (double& v : vals) v = read_f64_le(is);
    }
    NGC_CHECK_STATE(is.good(), "truncated checkpoint data: " + path);
    return out;
}

}  // namespace ngc

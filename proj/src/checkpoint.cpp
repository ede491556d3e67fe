#include "stvsa/checkpoint.hpp"

#include <cmath>
#include <fstream>

namespace stvsa::io {

namespace {

constexpr const char* kFormat = "stvsa-checkpoint-v1";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["kind"] = ck.kind;
    j["meta"] = ck.meta;
    auto& params = j["params"] = nlohmann::json::array();
    for (const auto& [name, t] : ck.params) {
        for (double v : t.values())
            if (!std::isfinite(v))
                throw NumericFault("checkpoint: non-finite value in " + name);
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = t.shape();
        p["data"] = std::vector<double>(t.values().begin(), t.values().end());
        params.push_back(std::move(p));
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint: " + path.string() + " is not JSON: " +
                          e.what());
    }
    if (!j.contains("format") || j["format"] != kFormat)
        throw ConfigError("checkpoint: " + path.string() +
                          " has unknown format tag");
    Checkpoint ck;
    ck.kind = j.value("kind", "");
    ck.meta = j.value("meta", nlohmann::json::object());
    for (const auto& p : j.value("params", nlohmann::json::array())) {
        auto shape = p.at("shape").get<ad::Shape>();
        auto data = p.at("data").get<std::vector<double>>();
        ck.params.emplace_back(p.at("name").get<std::string>(),
                               ad::Tensor(std::move(shape), std::move(data)));
    }
    return ck;
}

void save_staat(const std::filesystem::path& path, const nn::StaaTModel& m) {
    Checkpoint ck;
    ck.kind = "staat";
    ck.meta = {{"input_dim", m.cfg.input_dim},
               {"seq_len", m.cfg.seq_len},
               {"d_model", m.cfg.d_model},
               {"heads", m.cfg.heads},
               {"encoder_layers", m.cfg.encoder_layers},
               {"ffn_hidden", m.cfg.ffn_hidden},
               {"dropout", m.cfg.dropout}};
    auto& mut = const_cast<nn::StaaTModel&>(m);
    for (auto& [name, p] : nn::named_parameters(mut))
        ck.params.emplace_back(name, p->detached());
    save_checkpoint(path, ck);
}

nn::StaaTModel load_staat(const std::filesystem::path& path) {
    auto ck = load_checkpoint(path);
    if (ck.kind != "staat")
        throw ConfigError("checkpoint: " + path.string() + " holds kind '" +
                          ck.kind + "', expected staat");
    nn::StaaTConfig cfg;
    cfg.input_dim = ck.meta.at("input_dim").get<std::size_t>();
    cfg.seq_len = ck.meta.at("seq_len").get<std::size_t>();
    cfg.d_model = ck.meta.at("d_model").get<std::size_t>();
    cfg.heads = ck.meta.at("heads").get<std::size_t>();
    cfg.encoder_layers = ck.meta.at("encoder_layers").get<std::size_t>();
    cfg.ffn_hidden = ck.meta.at("ffn_hidden").get<std::size_t>();
    cfg.dropout = ck.meta.at("dropout").get<double>();
    std::mt19937_64 rng(0);  // shapes only; every value is overwritten below
    auto model = nn::make_staat(cfg, rng);
    auto named = nn::named_parameters(model);
    if (named.size() != ck.params.size())
        throw ConfigError("checkpoint: parameter count mismatch in " +
                          path.string());
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != ck.params[i].first)
            throw ConfigError("checkpoint: unexpected parameter '" +
                              ck.params[i].first + "' at position " +
                              std::to_string(i));
        if (named[i].second->shape() != ck.params[i].second.shape())
            throw ConfigError("checkpoint: shape mismatch for " +
                              ck.params[i].first);
        *named[i].second = ck.params[i].second;
    }
    return model;
}

}  // namespace stvsa::io

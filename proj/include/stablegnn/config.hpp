#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"
#include "stablegnn/movielens.hpp"
#include "stablegnn/perturbation.hpp"
#include "stablegnn/trainer.hpp"

namespace stablegnn {

/// Flat `key = value` configuration with dotted section keys
/// (`trainer.epochs = 20`). Lines starting with `#` are comments.
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) fail(errc::io_failure, "cannot open config " + path);
        return from_stream(is);
    }

    static Config from_stream(std::istream& is) {
        Config cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                fail(errc::bad_config, "config line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                fail(errc::bad_config, "config line " + std::to_string(line_no) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// `--set key=value` override.
    void apply_override(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            fail(errc::bad_config, "override must be key=value, got '" + kv + "'");
        values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& def) const {
        const auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    double get_double(const std::string& key, double def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            fail(errc::bad_config, "key " + key + ": expected number, got '" + it->second + "'");
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            std::size_t pos = 0;
            const std::int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            fail(errc::bad_config, "key " + key + ": expected integer, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        if (it->second == "true" || it->second == "1" || it->second == "on") return true;
        if (it->second == "false" || it->second == "0" || it->second == "off") return false;
        fail(errc::bad_config, "key " + key + ": expected boolean, got '" + it->second + "'");
    }

    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            try {
                out.push_back(std::stod(tok));
            } catch (...) {
                fail(errc::bad_config, "key " + key + ": bad number '" + tok + "'");
            }
        }
        return out;
    }

    /// Sorted `key = value` lines; input to the report's config hash.
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    std::map<std::string, std::string> values_;
};

inline std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// --- mapping from config keys to the domain structs ---

inline std::vector<std::size_t> parse_feature_list(const std::string& text) {
    std::vector<std::size_t> f;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            const long v = std::stol(tok);
            if (v < 1) throw std::invalid_argument("");
            f.push_back(std::size_t(v));
        } catch (...) {
            fail(errc::bad_config, "model.features: bad entry '" + tok + "'");
        }
    }
    return f;
}

inline GnnConfig model_config_from(const Config& cfg) {
    GnnConfig m;
    m.features = parse_feature_list(cfg.get_string("model.features", "1,64,1"));
    m.taps = std::size_t(cfg.get_int("model.taps", 5));
    m.readout_taps = std::size_t(cfg.get_int("model.readout_taps", std::int64_t(m.taps)));
    m.validate();
    return m;
}

inline TrainMode train_mode_from(const std::string& s) {
    if (s == "constrained") return TrainMode::Constrained;
    if (s == "unconstrained") return TrainMode::Unconstrained;
    fail(errc::bad_config, "trainer.mode must be constrained|unconstrained, got '" + s + "'");
}

inline const char* train_mode_name(TrainMode m) {
    return m == TrainMode::Constrained ? "constrained" : "unconstrained";
}

inline TrainerConfig trainer_config_from(const Config& cfg) {
    TrainerConfig t;
    t.epochs = std::size_t(cfg.get_int("trainer.epochs", 20));
    t.batch_size = std::size_t(cfg.get_int("trainer.batch_size", 5));
    t.lr = cfg.get_double("trainer.lr", 0.005);
    t.adam_beta1 = cfg.get_double("trainer.adam_beta1", 0.9);
    t.adam_beta2 = cfg.get_double("trainer.adam_beta2", 0.999);
    t.eta_d = cfg.get_double("trainer.eta_d", 0.05);
    t.stability_c = cfg.get_double("trainer.stability_c", 0.25);
    t.epsilon = cfg.get_double("trainer.epsilon", 0.2);
    t.m_perturbations = std::size_t(cfg.get_int("trainer.m_perturbations", 3));
    t.slack_eval_fraction = cfg.get_double("trainer.slack_eval_fraction", 0.2);
    t.seed = std::uint64_t(cfg.get_int("trainer.seed", 0));
    t.mode = train_mode_from(cfg.get_string("trainer.mode", "constrained"));
    if (cfg.has("trainer.lambda_max")) t.lambda_max = cfg.get_double("trainer.lambda_max", 0.0);
    t.loss_beta = cfg.get_double("trainer.loss_beta", 1.0);
    t.validate();
    return t;
}

inline PerturbationModel perturbation_model_from(const Config& cfg) {
    PerturbationModel p;
    const std::string kind = cfg.get_string("perturbation.kind", "relative");
    if (kind == "additive")
        p.kind = PerturbationKind::Additive;
    else if (kind == "relative")
        p.kind = PerturbationKind::Relative;
    else
        fail(errc::bad_config, "perturbation.kind must be additive|relative, got '" + kind + "'");
    p.epsilon = cfg.get_double("perturbation.epsilon", 0.2);
    const std::string mode = cfg.get_string("perturbation.mode", "scaled_uniform");
    if (mode == "scaled_uniform")
        p.mode = NormMode::ScaledUniform;
    else if (mode == "exact_boundary")
        p.mode = NormMode::ExactBoundary;
    else
        fail(errc::bad_config,
             "perturbation.mode must be scaled_uniform|exact_boundary, got '" + mode + "'");
    p.validate();
    return p;
}

inline DataOptions data_options_from(const Config& cfg) {
    DataOptions d;
    const std::string target = cfg.get_string("data.target_movie", "most_rated");
    if (target != "most_rated") {
        try {
            d.target_movie = std::stoi(target);
        } catch (...) {
            fail(errc::bad_config, "data.target_movie must be an id or 'most_rated'");
        }
    }
    d.top_movies = std::size_t(cfg.get_int("data.top_movies", 0));
    return d;
}

inline GraphOptions graph_options_from(const Config& cfg) {
    GraphOptions g;
    g.min_common = std::size_t(cfg.get_int("graph.min_common", 2));
    g.top_k = std::size_t(cfg.get_int("graph.top_k", 0));
    g.keep_negative = cfg.get_bool("graph.keep_negative", false);
    return g;
}

} // namespace stablegnn

#include "clora/config.hpp"

#include <fstream>
#include <set>

namespace clora {

using nlohmann::json;
namespace fs = std::filesystem;

json train_config_to_json(const TrainConfig& c) {
    return json{{"lr0", c.lr0},
                {"lr_min", c.lr_min},
                {"batch_size", c.batch_size},
                {"epochs_per_session", c.epochs_per_session},
                {"lambda_orth", c.lambda_orth},
                {"scale", c.scale},
                {"rank", c.rank},
                {"seed", c.seed},
                {"variant", to_string(c.variant)},
                {"replay_samples_per_class", c.replay_samples_per_class},
                {"covariance_shrinkage", c.covariance_shrinkage},
                {"mlp_hidden", c.mlp_hidden},
                {"identity_mlp", c.identity_mlp},
                {"r_delta_init_std", c.r_delta_init_std},
                {"head_init_std", c.head_init_std}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

void read_count(const json& j, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(std::string("config field '") + key + "' must be a non-negative integer");
    out = v.get<std::size_t>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
    for (const auto& [key, _] : j.items())
        if (!known.count(key))
            throw ConfigError(std::string("unknown key '") + key + "' in " + where);
}

const std::set<std::string> kTrainKeys = {
    "lr0",        "lr_min",       "batch_size",           "epochs_per_session",
    "lambda_orth", "scale",       "rank",                 "seed",
    "variant",    "replay_samples_per_class", "covariance_shrinkage", "mlp_hidden",
    "identity_mlp", "r_delta_init_std", "head_init_std"};

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    reject_unknown(j, kTrainKeys, "training config");
    TrainConfig c;
    read_field(j, "lr0", c.lr0);
    read_field(j, "lr_min", c.lr_min);
    read_count(j, "batch_size", c.batch_size);
    read_count(j, "epochs_per_session", c.epochs_per_session);
    read_field(j, "lambda_orth", c.lambda_orth);
    read_field(j, "scale", c.scale);
    read_count(j, "rank", c.rank);
    read_field(j, "seed", c.seed);
    if (j.contains("variant")) {
        std::string v;
        read_field(j, "variant", v);
        try {
            c.variant = variant_from_string(v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    read_count(j, "replay_samples_per_class", c.replay_samples_per_class);
    read_field(j, "covariance_shrinkage", c.covariance_shrinkage);
    read_count(j, "mlp_hidden", c.mlp_hidden);
    read_field(j, "identity_mlp", c.identity_mlp);
    read_field(j, "r_delta_init_std", c.r_delta_init_std);
    read_field(j, "head_init_std", c.head_init_std);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
    return json{{"sessions", s.sessions},
                {"classes_per_session", s.classes_per_session},
                {"dim", s.dim},
                {"samples_per_class", s.samples_per_class},
                {"separation", s.separation},
                {"seed", s.seed},
                {"train_fraction", s.train_fraction}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
    reject_unknown(j, {"sessions", "classes_per_session", "dim", "samples_per_class", "separation",
                       "seed", "train_fraction"},
                   "synthetic spec");
    SyntheticSpec s;
    read_count(j, "sessions", s.sessions);
    read_count(j, "classes_per_session", s.classes_per_session);
    read_count(j, "dim", s.dim);
    read_count(j, "samples_per_class", s.samples_per_class);
    read_field(j, "separation", s.separation);
    read_field(j, "seed", s.seed);
    read_field(j, "train_fraction", s.train_fraction);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::set<std::string> known = kTrainKeys;
    known.insert({"data", "seeds"});
    reject_unknown(j, known, "config");

    json train_part = json::object();
    for (const auto& key : kTrainKeys)
        if (j.contains(key)) train_part[key] = j[key];
    ExperimentConfig cfg;
    cfg.train = train_config_from_json(train_part);

    if (j.contains("seeds")) {
        if (!j["seeds"].is_array() || j["seeds"].empty())
            throw ConfigError("'seeds' must be a non-empty array of integers");
        for (const auto& s : j["seeds"]) {
            if (!s.is_number_unsigned()) throw ConfigError("'seeds' entries must be non-negative integers");
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    } else {
        cfg.seeds.push_back(cfg.train.seed);
    }

    const json data = j.value("data", json{{"synthetic", json::object()}});
    if (!data.is_object()) throw ConfigError("'data' must be an object");
    reject_unknown(data, {"synthetic", "manifest"}, "data");
    if (data.contains("synthetic") == data.contains("manifest"))
        throw ConfigError("'data' needs exactly one of 'synthetic' or 'manifest'");
    if (data.contains("synthetic")) {
        cfg.synthetic = synthetic_spec_from_json(data["synthetic"]);
        cfg.synthetic_seed_follows_run = !data["synthetic"].contains("seed");
    } else {
        if (!data["manifest"].is_string()) throw ConfigError("'manifest' must be a path string");
        fs::path p = data["manifest"].get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.manifest = p;
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        return experiment_config_from_json(j, path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

TaskSplit ExperimentConfig::load_tasks(std::uint64_t run_seed) const {
    if (manifest) return load_feature_dataset(*manifest);
    SyntheticSpec spec = synthetic.value_or(SyntheticSpec{});
    if (synthetic_seed_follows_run) spec.seed = run_seed;
    return generate_synthetic_tasks(spec);
}

}  // namespace clora

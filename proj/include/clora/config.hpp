#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clora/data.hpp"
#include "clora/trainer.hpp"

namespace clora {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Experiment configuration file. Training fields sit at the top level:
///
///   { "variant": "clora", "lr0": 0.01, "epochs_per_session": 20, ...,
///     "seeds": [1, 2, 3, 4, 5],
///     "data": { "synthetic": { "sessions": 5, "separation": 4.0, ... } } }
///
/// or "data": { "manifest": "path/to/manifest.json" }. Unknown keys are
/// rejected. A synthetic spec without "seed" follows the run seed.
struct ExperimentConfig {
    TrainConfig train;
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::filesystem::path> manifest;
    bool synthetic_seed_follows_run = true;
    std::vector<std::uint64_t> seeds;

    /// Dataset for a run with the given training seed.
    TaskSplit load_tasks(std::uint64_t run_seed) const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
/// Throws ConfigError naming the path when it is missing or unparsable.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace clora

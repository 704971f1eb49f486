#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "clora/trainer.hpp"

namespace clora {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Session-boundary snapshot: the config that produced it plus the complete
/// trainer state (model, class statistics, generator, metrics so far).
struct Checkpoint {
    TrainConfig config;
    TrainerState state;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Validates the schema, every matrix shape against the config, and finiteness.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// JSON with matrices as {"rows", "cols", "data"} row-major arrays.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
/// `name` appears in error messages.
Matrix matrix_from_json(const nlohmann::json& j, const std::string& name);

}  // namespace clora

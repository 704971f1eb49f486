#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "clora/trainer.hpp"

namespace clora {

/// Malformed or inconsistent dataset input. Messages carry file and line.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TaskSplit {
    std::vector<SessionData> train;
    std::vector<SessionData> test;
};

struct SyntheticSpec {
    std::size_t sessions = 5;
    std::size_t classes_per_session = 2;
    std::size_t dim = 16;
    std::size_t samples_per_class = 250;  ///< before the 80/20 split
    double separation = 4.0;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;

    void validate() const;
    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Class c of session t gets global index t * classes_per_session + c, a mean
/// drawn uniformly on the sphere of radius `separation`, and unit covariance.
/// The first round(train_fraction * n) draws of each class go to training.
TaskSplit generate_synthetic_tasks(const SyntheticSpec& spec);

/// Feature dataset described by a JSON manifest:
///   { "sessions": [[0, 1], [2, 3]],
///     "train_files": ["train.csv"],
///     "test_files": ["test.csv"] }          (or "test_fraction": 0.2)
/// CSV files need a header feature_0,...,feature_{d-1},label. Relative paths
/// resolve against the manifest's directory.
TaskSplit load_feature_dataset(const std::filesystem::path& manifest_path);

/// Writes train.csv, test.csv and manifest.json under `dir`.
void write_feature_dataset(const TaskSplit& split, const std::filesystem::path& dir);

/// Reads one feature CSV into (features, labels).
struct FeatureTable {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::size_t> lines;  ///< source line of each row
};
FeatureTable read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const Matrix& features,
                       const std::vector<int>& labels);

}  // namespace clora

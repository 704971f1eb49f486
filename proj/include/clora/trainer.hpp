#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clora/linalg.hpp"
#include "clora/metrics.hpp"
#include "clora/model.hpp"

namespace clora {

/// Ablation ladder.
///  lora       shared A B, no routing matrix (R fixed to I)
///  lora_r     A R B with R trained directly, never consolidated
///  lora_r_td  R = R_old + R_delta, stop-gradient on R_old, consolidation, no L_orth
///  clora      lora_r_td plus the orthogonality penalty
enum class Variant { lora, lora_r, lora_r_td, clora };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
inline constexpr Variant kAllVariants[] = {Variant::lora, Variant::lora_r, Variant::lora_r_td,
                                           Variant::clora};

struct TrainConfig {
    double lr0 = 0.01;
    double lr_min = 0.0005;
    std::size_t batch_size = 48;
    std::size_t epochs_per_session = 20;
    double lambda_orth = 0.01;
    double scale = 16.0;
    std::size_t rank = 4;
    std::uint64_t seed = 42;
    Variant variant = Variant::clora;
    std::size_t replay_samples_per_class = 8;
    double covariance_shrinkage = 1e-4;
    std::size_t mlp_hidden = 32;
    bool identity_mlp = false;
    double r_delta_init_std = 1e-3;
    double head_init_std = 0.02;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    bool decomposed() const noexcept {
        return variant == Variant::lora_r_td || variant == Variant::clora;
    }
    double effective_lambda() const noexcept {
        return variant == Variant::clora ? lambda_orth : 0.0;
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min);

/// Running per-class feature statistics (Welford / Chan merges).
struct ClassStat {
    std::vector<double> mean;
    Matrix m2;  ///< sum of centred outer products
    std::size_t count = 0;

    /// Unbiased covariance; zero when count < 2.
    Matrix covariance() const;

    friend bool operator==(const ClassStat&, const ClassStat&) = default;
};

struct ClassStats {
    std::map<int, ClassStat> classes;

    bool contains(int label) const noexcept { return classes.count(label) != 0; }
    friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

/// Folds a batch of features (n x d) with their labels into the statistics.
ClassStats update_class_stats(ClassStats stats, const Matrix& features, std::span<const int> labels);

/// n draws of mean + L xi with L = cholesky(cov + shrinkage I). Throws
/// std::out_of_range for a class without statistics.
Matrix sample_replay(const ClassStats& stats, int label, std::size_t n, Rng& rng,
                     double shrinkage);

struct SessionData {
    Matrix inputs;            ///< n x d
    std::vector<int> labels;  ///< n entries, all within `classes`
    std::size_t session_id = 0;
    std::vector<int> classes;

    void validate() const;
    friend bool operator==(const SessionData&, const SessionData&) = default;
};

struct StepInfo {
    std::size_t epoch;
    std::size_t step;
    double lr;
    double ce_loss;    ///< mean CE over real and replayed rows
    double orth_loss;  ///< unscaled L_orth (0 when not applied)
};

struct SessionLog {
    std::vector<StepInfo> steps;
    std::vector<double> epoch_mean_ce;  ///< CE on current-session rows, per epoch
};

using StepObserver = std::function<void(const IncrementalModel&, const StepInfo&)>;

/// Everything needed to continue a run from a session boundary.
struct TrainerState {
    IncrementalModel model;
    ClassStats stats;
    Rng rng;
    std::size_t next_session = 0;
    std::vector<double> session_acc;
    std::vector<std::vector<double>> intervals;
};

/// Fresh model and state for `cfg` with feature dimension d.
TrainerState initial_state(const TrainConfig& cfg, std::size_t d);

/// Trains one session in place: extends the head for new classes, runs
/// SGD over real plus replayed features, consolidates (decomposed variants),
/// then stores statistics of the new classes' features.
SessionLog run_session(TrainerState& state, const SessionData& data, const TrainConfig& cfg,
                       const StepObserver& observer = {});

/// Percentage of correctly predicted rows.
double accuracy(const IncrementalModel& m, const Matrix& x, std::span<const int> labels);

struct SequenceOptions {
    std::optional<TrainerState> resume;
    /// Stop after this many sessions in total (resume included).
    std::optional<std::size_t> stop_after;
    StepObserver observer;
};

struct SequenceResult {
    MetricsRecord metrics;
    TrainerState state;
};

/// Trains every session in order, evaluating on the union of test sets seen so far.
SequenceResult run_sequence(std::span<const SessionData> train, std::span<const SessionData> test,
                            const TrainConfig& cfg, SequenceOptions options = {});

/// Convenience overload returning only the metrics.
MetricsRecord run_sequence_metrics(std::span<const SessionData> train,
                                   std::span<const SessionData> test, const TrainConfig& cfg);

}  // namespace clora

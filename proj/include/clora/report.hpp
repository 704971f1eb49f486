#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "clora/config.hpp"
#include "clora/metrics.hpp"
#include "clora/trainer.hpp"

namespace clora {

/// Percent with two decimals, as written to every CSV.
std::string format_percent(double v);

/// session,seen_acc,last_acc,inc_acc; row t holds the values as of session t.
void write_metrics_csv(const MetricsRecord& rec, const std::filesystem::path& path);
/// session,group_1,...,group_T; empty cells for groups not yet introduced.
void write_intervals_csv(const MetricsRecord& rec, const std::filesystem::path& path);
/// Full-precision summary. `generated_at` is the only time-dependent field and
/// is omitted when empty.
nlohmann::json summary_json(const MetricsRecord& rec, const TrainConfig& cfg,
                            const std::string& generated_at);

/// Per-session seen-class accuracies read back from metrics.csv.
std::vector<double> read_metrics_csv(const std::filesystem::path& path);

struct AblationCell {
    Variant variant;
    std::uint64_t seed;
    MetricsRecord metrics;
};

struct AblationResult {
    std::vector<AblationCell> cells;  ///< variant-major, seeds in config order

    std::vector<const AblationCell*> of(Variant v) const;
    /// Mean per-session accuracy over seeds.
    std::vector<double> mean_session_acc(Variant v) const;
    double mean_last_acc(Variant v) const;
    double mean_inc_acc(Variant v) const;
    /// Mean drop of the first session's classes from right after session 1 to the end.
    double mean_first_session_drop(Variant v) const;
};

/// Runs every variant for every seed of `cfg`; cells run concurrently on up to
/// `threads` workers (0 = hardware concurrency).
AblationResult run_ablation(const ExperimentConfig& cfg, unsigned threads = 0);

/// variant,session_1..session_T,avg (means over seeds; avg is the mean Inc-Acc).
void write_ablation_csv(const AblationResult& res, const std::filesystem::path& path);
/// One row per (variant, seed) with last_acc, inc_acc and first-session drop.
void write_ablation_runs_csv(const AblationResult& res, const std::filesystem::path& path);

}  // namespace clora

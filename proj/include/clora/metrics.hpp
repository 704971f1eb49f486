#pragma once

#include <span>
#include <vector>

namespace clora {

/// Accuracies are percentages in [0, 100].
struct MetricsRecord {
    std::vector<double> session_acc;  ///< a_t: accuracy over all classes seen after session t
    double last_acc = 0.0;            ///< a_T
    double inc_acc = 0.0;             ///< mean of a_t
    /// intervals[t][g]: accuracy on session g's classes after training session t (g <= t).
    std::vector<std::vector<double>> intervals;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Last-Acc is the final entry, Inc-Acc the arithmetic mean. Throws
/// std::invalid_argument on empty input or out-of-range accuracies.
MetricsRecord compute_metrics(std::span<const double> session_acc,
                              std::vector<std::vector<double>> intervals = {});

}  // namespace clora

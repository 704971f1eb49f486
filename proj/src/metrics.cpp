#include "clora/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace clora {

static void check_accuracy(double a, const char* what) {
    if (!std::isfinite(a) || a < 0.0 || a > 100.0)
        throw std::invalid_argument(std::string("compute_metrics: ") + what + " accuracy " +
                                    std::to_string(a) + " outside [0, 100]");
}

MetricsRecord compute_metrics(std::span<const double> session_acc,
                              std::vector<std::vector<double>> intervals) {
    if (session_acc.empty()) throw std::invalid_argument("compute_metrics: no session accuracies");
    MetricsRecord rec;
    rec.session_acc.assign(session_acc.begin(), session_acc.end());
    double sum = 0.0;
    for (double a : rec.session_acc) {
        check_accuracy(a, "session");
        sum += a;
    }
    rec.last_acc = rec.session_acc.back();
    rec.inc_acc = sum / static_cast<double>(rec.session_acc.size());
    for (const auto& row : intervals)
        for (double a : row) check_accuracy(a, "interval");
    rec.intervals = std::move(intervals);
    return rec;
}

}  // namespace clora

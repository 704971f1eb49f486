#include "clora/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace clora {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

static std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void write_metrics_csv(const MetricsRecord& rec, const fs::path& path) {
    auto out = open_out(path);
    out << "session,seen_acc,last_acc,inc_acc\n";
    double sum = 0.0;
    for (std::size_t t = 0; t < rec.session_acc.size(); ++t) {
        sum += rec.session_acc[t];
        const double inc = sum / static_cast<double>(t + 1);
        out << (t + 1) << ',' << format_percent(rec.session_acc[t]) << ','
            << format_percent(rec.session_acc[t]) << ',' << format_percent(inc) << '\n';
    }
}

void write_intervals_csv(const MetricsRecord& rec, const fs::path& path) {
    auto out = open_out(path);
    const std::size_t T = rec.intervals.size();
    out << "session";
    for (std::size_t g = 0; g < T; ++g) out << ",group_" << (g + 1);
    out << '\n';
    for (std::size_t t = 0; t < T; ++t) {
        out << (t + 1);
        for (std::size_t g = 0; g < T; ++g) {
            out << ',';
            if (g < rec.intervals[t].size()) out << format_percent(rec.intervals[t][g]);
        }
        out << '\n';
    }
}

json summary_json(const MetricsRecord& rec, const TrainConfig& cfg, const std::string& generated_at) {
    json j;
    j["variant"] = to_string(cfg.variant);
    j["seed"] = cfg.seed;
    j["sessions"] = rec.session_acc.size();
    j["session_acc"] = rec.session_acc;
    j["last_acc"] = rec.last_acc;
    j["inc_acc"] = rec.inc_acc;
    j["intervals"] = rec.intervals;
    j["config"] = train_config_to_json(cfg);
    if (!generated_at.empty()) j["generated_at"] = generated_at;
    return j;
}

std::vector<double> read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("session,seen_acc", 0) != 0)
        throw std::runtime_error(path.string() + ": unexpected metrics header");
    std::vector<double> acc;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string session, seen;
        std::getline(row, session, ',');
        std::getline(row, seen, ',');
        acc.push_back(std::stod(seen));
    }
    return acc;
}

// ---------------------------------------------------------------- ablation

std::vector<const AblationCell*> AblationResult::of(Variant v) const {
    std::vector<const AblationCell*> out;
    for (const auto& c : cells)
        if (c.variant == v) out.push_back(&c);
    return out;
}

std::vector<double> AblationResult::mean_session_acc(Variant v) const {
    const auto runs = of(v);
    if (runs.empty()) throw std::invalid_argument("ablation: no runs for " + to_string(v));
    std::vector<double> mean(runs.front()->metrics.session_acc.size(), 0.0);
    for (const auto* c : runs)
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += c->metrics.session_acc[t];
    for (double& m : mean) m /= static_cast<double>(runs.size());
    return mean;
}

double AblationResult::mean_last_acc(Variant v) const {
    const auto runs = of(v);
    double s = 0.0;
    for (const auto* c : runs) s += c->metrics.last_acc;
    return s / static_cast<double>(runs.size());
}

double AblationResult::mean_inc_acc(Variant v) const {
    const auto runs = of(v);
    double s = 0.0;
    for (const auto* c : runs) s += c->metrics.inc_acc;
    return s / static_cast<double>(runs.size());
}

static double first_session_drop(const MetricsRecord& m) {
    return m.intervals.front().front() - m.intervals.back().front();
}

double AblationResult::mean_first_session_drop(Variant v) const {
    const auto runs = of(v);
    double s = 0.0;
    for (const auto* c : runs) s += first_session_drop(c->metrics);
    return s / static_cast<double>(runs.size());
}

AblationResult run_ablation(const ExperimentConfig& cfg, unsigned threads) {
    AblationResult res;
    for (Variant v : kAllVariants)
        for (std::uint64_t seed : cfg.seeds) res.cells.push_back({v, seed, {}});

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(res.cells.size()));

    // Cells share nothing mutable; each writes only its own slot.
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next++; i < res.cells.size(); i = next++) {
            try {
                AblationCell& cell = res.cells[i];
                TrainConfig tc = cfg.train;
                tc.variant = cell.variant;
                tc.seed = cell.seed;
                const TaskSplit tasks = cfg.load_tasks(cell.seed);
                cell.metrics = run_sequence_metrics(tasks.train, tasks.test, tc);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return res;
}

void write_ablation_csv(const AblationResult& res, const fs::path& path) {
    auto out = open_out(path);
    const std::size_t T = res.cells.front().metrics.session_acc.size();
    out << "variant";
    for (std::size_t t = 0; t < T; ++t) out << ",session_" << (t + 1);
    out << ",avg\n";
    for (Variant v : kAllVariants) {
        out << to_string(v);
        for (double a : res.mean_session_acc(v)) out << ',' << format_percent(a);
        out << ',' << format_percent(res.mean_inc_acc(v)) << '\n';
    }
}

void write_ablation_runs_csv(const AblationResult& res, const fs::path& path) {
    auto out = open_out(path);
    out << "variant,seed,last_acc,inc_acc,first_session_drop\n";
    for (const auto& c : res.cells)
        out << to_string(c.variant) << ',' << c.seed << ',' << format_percent(c.metrics.last_acc)
            << ',' << format_percent(c.metrics.inc_acc) << ','
            << format_percent(first_session_drop(c.metrics)) << '\n';
}

}  // namespace clora

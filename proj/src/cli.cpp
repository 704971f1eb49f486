#include "clora/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clora/checkpoint.hpp"
#include "clora/config.hpp"
#include "clora/data.hpp"
#include "clora/log.hpp"
#include "clora/report.hpp"
#include "clora/theorem.hpp"

namespace clora {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Raised for well-formed invocations whose arguments are unusable.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Verification ran but found a violation.
class VerificationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

struct TrainArgs {
    std::string config;
    std::string out_dir = "clora_out";
    std::string resume;
    std::size_t stop_after = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const ExperimentConfig cfg = load_experiment_config(a.config);
    const TrainConfig& tc = cfg.train;
    const TaskSplit tasks = cfg.load_tasks(tc.seed);

    SequenceOptions opts;
    if (!a.resume.empty()) {
        Checkpoint ck = load_checkpoint(a.resume);
        if (!(ck.config == tc))
            throw UsageError("checkpoint " + a.resume + " was written with a different training config");
        opts.resume = std::move(ck.state);
    }
    if (a.stop_after > 0) opts.stop_after = a.stop_after;

    SequenceResult res = run_sequence(tasks.train, tasks.test, tc, std::move(opts));

    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    write_metrics_csv(res.metrics, dir / "metrics.csv");
    write_intervals_csv(res.metrics, dir / "intervals.csv");
    write_json(summary_json(res.metrics, tc, utc_timestamp()), dir / "summary.json");
    save_checkpoint({tc, res.state}, dir / "checkpoint.json");

    out << "variant " << to_string(tc.variant) << ", seed " << tc.seed << ", sessions "
        << res.metrics.session_acc.size() << "/" << tasks.train.size() << "\n";
    out << "Last-Acc " << format_percent(res.metrics.last_acc) << "  Inc-Acc "
        << format_percent(res.metrics.inc_acc) << "\n";
    out << "wrote " << (dir / "metrics.csv").string() << ", intervals.csv, summary.json, checkpoint.json\n";
    return kExitOk;
}

struct AblateArgs {
    std::string config;
    std::string out_dir;
    unsigned threads = 0;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    const ExperimentConfig cfg = load_experiment_config(a.config);
    const auto start = std::chrono::steady_clock::now();
    const AblationResult res = run_ablation(cfg, a.threads);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    write_ablation_csv(res, dir / "ablation.csv");
    write_ablation_runs_csv(res, dir / "ablation_runs.csv");
    json summary = json::object();
    for (Variant v : kAllVariants)
        summary[to_string(v)] = {{"mean_last_acc", res.mean_last_acc(v)},
                                 {"mean_inc_acc", res.mean_inc_acc(v)},
                                 {"mean_session_acc", res.mean_session_acc(v)},
                                 {"mean_first_session_drop", res.mean_first_session_drop(v)}};
    summary["seeds"] = cfg.seeds;
    write_json(summary, dir / "ablation_summary.json");

    out << "variant      Last-Acc  Inc-Acc  first-session drop\n";
    for (Variant v : kAllVariants) {
        std::string name = to_string(v);
        name.resize(12, ' ');
        out << name << ' ' << format_percent(res.mean_last_acc(v)) << "     "
            << format_percent(res.mean_inc_acc(v)) << "    "
            << format_percent(res.mean_first_session_drop(v)) << "\n";
    }
    out << cfg.seeds.size() << " seeds, " << res.cells.size() << " runs in " << std::fixed << std::setprecision(1) << secs << " s\n";
    return kExitOk;
}

struct TheoremArgs {
    std::size_t trials = 1000;
    std::string dims = "8,8,4";
    std::uint64_t seed = 42;
};

int cmd_verify_theorem(const TheoremArgs& a, std::ostream& out) {
    std::vector<std::size_t> dims;
    std::stringstream ss(a.dims);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(part, &used);
            if (used != part.size() || v <= 0) throw std::invalid_argument(part);
            dims.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("--dims expects three positive integers d,k,r; got '" + a.dims + "'");
        }
    }
    if (dims.size() != 3) throw UsageError("--dims expects d,k,r; got '" + a.dims + "'");
    if (a.trials == 0) throw UsageError("--trials must be >= 1");
    if (dims[2] > std::min(dims[0], dims[1])) throw UsageError("--dims needs r <= min(d, k)");

    const auto start = std::chrono::steady_clock::now();
    const TheoremReport rep = verify_theorem(a.trials, dims[0], dims[1], dims[2], a.seed);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << "dims d=" << dims[0] << " k=" << dims[1] << " r=" << dims[2] << ", seed " << a.seed
        << "\n"
        << format_report(rep) << "elapsed: " << secs << " s\n";
    if (!rep.passed()) {
        out << "RESULT: FAIL\n";
        throw VerificationFailure("gradient-bound verification found violations");
    }
    out << "RESULT: PASS " << rep.held << "/" << rep.trials << "\n";
    return kExitOk;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open spec file: " + spec_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("spec file " + spec_path + " is not valid JSON: " + e.what());
    }
    const SyntheticSpec spec = synthetic_spec_from_json(j);
    write_feature_dataset(generate_synthetic_tasks(spec), out_dir);
    out << "wrote " << spec.sessions << " sessions x " << spec.classes_per_session
        << " classes (d=" << spec.dim << ") to " << out_dir << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const TaskSplit tasks = load_feature_dataset(manifest);
    const IncrementalModel& model = ck.state.model;
    if (tasks.test.front().inputs.cols() != model.dim())
        throw DataError(manifest + ": feature dimension does not match the checkpoint");

    // Seen classes are those already in the head; unseen sessions are skipped.
    std::vector<int> labels;
    std::size_t sessions_used = 0;
    std::vector<const SessionData*> used;
    for (const auto& s : tasks.test) {
        const bool seen = std::all_of(s.classes.begin(), s.classes.end(),
                                      [&](int c) { return model.head.has_class(c); });
        if (seen) used.push_back(&s);
    }
    if (used.empty()) throw DataError(manifest + ": no session's classes are known to the checkpoint");
    std::size_t n = 0;
    for (const auto* s : used) n += s->inputs.rows();
    Matrix all(n, model.dim());
    std::size_t r = 0;
    for (const auto* s : used) {
        std::copy(s->inputs.data().begin(), s->inputs.data().end(),
                  all.data().begin() + static_cast<std::ptrdiff_t>(r * model.dim()));
        labels.insert(labels.end(), s->labels.begin(), s->labels.end());
        r += s->inputs.rows();
        ++sessions_used;
    }
    const double acc = accuracy(model, all, labels);
    out << "sessions evaluated: " << sessions_used << "/" << tasks.test.size() << "\n";
    out << "seen-class accuracy: " << format_percent(acc) << "\n";
    return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Continual low-rank adaptation: training, ablation and verification tools",
                 "clora"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a session sequence and write metrics");
    train_cmd->add_option("--config", train.config, "Experiment config JSON")->required();
    train_cmd->add_option("--out", train.out_dir, "Output directory");
    train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
    train_cmd->add_option("--stop-after", train.stop_after,
                          "Stop after this many sessions in total");

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run all four variants over the seed list");
    ablate_cmd->add_option("--config", ablate.config, "Experiment config JSON")->required();
    ablate_cmd->add_option("--out", ablate.out_dir, "Output directory")->required();
    ablate_cmd->add_option("--threads", ablate.threads, "Worker threads (0 = all cores)");

    TheoremArgs theorem;
    auto* theorem_cmd =
        app.add_subcommand("verify-theorem", "Check the gradient-norm bound on sampled instances");
    theorem_cmd->add_option("--trials", theorem.trials, "Number of instances");
    theorem_cmd->add_option("--dims", theorem.dims, "d,k,r");
    theorem_cmd->add_option("--seed", theorem.seed, "Seed");

    std::string spec_path, data_out;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV + manifest");
    gen_cmd->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
    gen_cmd->add_option("--out", data_out, "Output directory")->required();

    std::string ckpt_path, manifest;
    auto* eval_cmd = app.add_subcommand("eval", "Seen-class accuracy of a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint JSON")->required();
    eval_cmd->add_option("--data", manifest, "Dataset manifest JSON")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train, out);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate, out);
        if (theorem_cmd->parsed()) return cmd_verify_theorem(theorem, out);
        if (gen_cmd->parsed()) return cmd_gen_data(spec_path, data_out, out);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_path, manifest, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const VerificationFailure& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const SamplingError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace clora

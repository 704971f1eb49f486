#include "clora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "clora/log.hpp"

namespace clora {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::lora: return "lora";
        case Variant::lora_r: return "lora_r";
        case Variant::lora_r_td: return "lora_r_td";
        case Variant::clora: return "clora";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : kAllVariants)
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant '" + s +
                                "' (expected lora, lora_r, lora_r_td or clora)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("TrainConfig: " + msg); };
    if (!(lr0 > 0.0)) fail("lr0 must be positive");
    if (!(lr_min > 0.0)) fail("lr_min must be positive");
    if (lr_min > lr0) fail("lr_min must not exceed lr0");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(lambda_orth >= 0.0)) fail("lambda_orth must be non-negative");
    if (!(scale > 0.0)) fail("scale must be positive");
    if (rank == 0) fail("rank must be positive");
    if (!(covariance_shrinkage >= 0.0)) fail("covariance_shrinkage must be non-negative");
    if (mlp_hidden == 0) fail("mlp_hidden must be positive");
    if (!(r_delta_init_std >= 0.0)) fail("r_delta_init_std must be non-negative");
    if (!(head_init_std > 0.0)) fail("head_init_std must be positive");
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    if (step > total_steps) throw std::invalid_argument("cosine_lr: step beyond total_steps");
    if (step == total_steps) return lr_min;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------- statistics

Matrix ClassStat::covariance() const {
    if (count < 2) return Matrix(mean.size(), mean.size());
    Matrix cov = m2;
    cov *= 1.0 / static_cast<double>(count - 1);
    return cov;
}

ClassStats update_class_stats(ClassStats stats, const Matrix& features, std::span<const int> labels) {
    if (labels.size() != features.rows())
        throw ShapeError("update_class_stats: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " feature rows");
    const std::size_t d = features.cols();
    std::vector<double> delta(d);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        ClassStat& cs = stats.classes[labels[i]];
        if (cs.count == 0) {
            cs.mean.assign(d, 0.0);
            cs.m2 = Matrix(d, d);
        } else if (cs.mean.size() != d) {
            throw ShapeError("update_class_stats: feature dimension changed for class " +
                             std::to_string(labels[i]));
        }
        const auto x = features.row(i);
        ++cs.count;
        const double n = static_cast<double>(cs.count);
        for (std::size_t j = 0; j < d; ++j) delta[j] = x[j] - cs.mean[j];
        for (std::size_t j = 0; j < d; ++j) cs.mean[j] += delta[j] / n;
        const double w = (n - 1.0) / n;
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cs.m2(a, b) += w * delta[a] * delta[b];
    }
    return stats;
}

namespace {

struct ReplayFactor {
    std::vector<double> mean;
    Matrix chol;
};

ReplayFactor replay_factor(const ClassStats& stats, int label, double shrinkage) {
    auto it = stats.classes.find(label);
    if (it == stats.classes.end())
        throw std::out_of_range("sample_replay: no statistics for class " + std::to_string(label));
    Matrix cov = it->second.covariance();
    for (std::size_t j = 0; j < cov.rows(); ++j) cov(j, j) += shrinkage;
    return {it->second.mean, cholesky(cov)};
}

void draw_replay(const ReplayFactor& f, std::size_t n, Rng& rng, Matrix& out, std::size_t row0) {
    const std::size_t d = f.mean.size();
    std::vector<double> xi(d);
    for (std::size_t s = 0; s < n; ++s) {
        for (double& v : xi) v = rng.normal();
        auto row = out.row(row0 + s);
        for (std::size_t a = 0; a < d; ++a) {
            double v = f.mean[a];
            for (std::size_t b = 0; b <= a; ++b) v += f.chol(a, b) * xi[b];
            row[a] = v;
        }
    }
}

}  // namespace

Matrix sample_replay(const ClassStats& stats, int label, std::size_t n, Rng& rng, double shrinkage) {
    const ReplayFactor f = replay_factor(stats, label, shrinkage);
    Matrix out(n, f.mean.size());
    draw_replay(f, n, rng, out, 0);
    return out;
}

// ---------------------------------------------------------------- sessions

void SessionData::validate() const {
    if (labels.size() != inputs.rows())
        throw ShapeError("SessionData: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(inputs.rows()) + " rows");
    const std::set<int> allowed(classes.begin(), classes.end());
    if (allowed.size() != classes.size())
        throw std::invalid_argument("SessionData: duplicate class in session " +
                                    std::to_string(session_id));
    for (int l : labels)
        if (!allowed.count(l))
            throw std::invalid_argument("SessionData: label " + std::to_string(l) +
                                        " is not in the class set of session " +
                                        std::to_string(session_id));
}

TrainerState initial_state(const TrainConfig& cfg, std::size_t d) {
    cfg.validate();
    if (cfg.rank > d)
        throw std::invalid_argument("TrainConfig: rank " + std::to_string(cfg.rank) +
                                    " exceeds feature dimension " + std::to_string(d));
    Rng init_rng(cfg.seed);
    TrainerState st;
    st.model.block = make_mlp_block(d, cfg.mlp_hidden, init_rng, cfg.identity_mlp);
    AdapterInit ai;
    ai.r_delta_std = cfg.r_delta_init_std;
    st.model.adapter = make_adapter(d, d, cfg.rank, init_rng, ai);
    if (cfg.variant == Variant::lora) st.model.adapter.R_delta = Matrix::identity(cfg.rank);
    st.model.head.weights = Matrix(0, d);
    st.model.head.scale = cfg.scale;
    st.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return st;
}

static std::vector<std::size_t> head_targets(const CosineHead& head, std::span<const int> labels) {
    std::vector<std::size_t> t(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = head.row_of(labels[i]);
    return t;
}

SessionLog run_session(TrainerState& state, const SessionData& data, const TrainConfig& cfg,
                       const StepObserver& observer) {
    cfg.validate();
    data.validate();
    if (data.inputs.rows() == 0)
        throw std::invalid_argument("run_session: session " + std::to_string(data.session_id) +
                                    " has no samples");
    IncrementalModel& model = state.model;
    if (data.inputs.cols() != model.dim())
        throw ShapeError("run_session: inputs have " + std::to_string(data.inputs.cols()) +
                         " columns, model dimension is " + std::to_string(model.dim()));
    const std::size_t d = model.dim();

    std::vector<int> fresh;
    for (int c : data.classes)
        if (!model.head.has_class(c)) fresh.push_back(c);
    extend_head(model.head, fresh, d, cfg.head_init_std, state.rng);

    // Replay covers every class with stored statistics outside this session.
    std::vector<int> old_classes;
    std::vector<ReplayFactor> factors;
    for (const auto& [label, cs] : state.stats.classes) {
        if (std::find(data.classes.begin(), data.classes.end(), label) != data.classes.end())
            continue;
        old_classes.push_back(label);
        factors.push_back(replay_factor(state.stats, label, cfg.covariance_shrinkage));
    }
    const std::size_t per_class = cfg.replay_samples_per_class;
    const std::size_t n_replay = per_class * old_classes.size();
    std::vector<int> replay_labels;
    for (int label : old_classes) replay_labels.insert(replay_labels.end(), per_class, label);
    const std::vector<std::size_t> replay_targets = head_targets(model.head, replay_labels);

    const std::size_t n = data.inputs.rows();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = std::max<std::size_t>(1, batches * cfg.epochs_per_session);
    const bool orth_active = cfg.effective_lambda() > 0.0 && state.next_session > 0;
    const double lambda = orth_active ? cfg.effective_lambda() : 0.0;
    const bool train_routing = cfg.variant != Variant::lora;

    SessionLog log;
    std::vector<std::size_t> order(n);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_session; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        shuffle_indices(order, state.rng);
        double epoch_ce = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            const std::size_t n_real = hi - lo;
            Matrix xb(n_real, d);
            std::vector<int> yb(n_real);
            for (std::size_t i = 0; i < n_real; ++i) {
                const std::size_t src = order[lo + i];
                std::copy(data.inputs.row(src).begin(), data.inputs.row(src).end(),
                          xb.row(i).begin());
                yb[i] = data.labels[src];
            }

            const BlockForward fwd = block_forward(model, xb);
            Matrix replay(n_replay, d);
            for (std::size_t c = 0; c < factors.size(); ++c)
                draw_replay(factors[c], per_class, state.rng, replay, c * per_class);

            // Joint batch: real rows first, replayed rows after.
            const std::size_t C = model.head.num_classes();
            Matrix logits(n_real + n_replay, C);
            const Matrix real_logits = cosine_logits(model.head, fwd.features);
            const Matrix replay_logits = cosine_logits(model.head, replay);
            std::copy(real_logits.data().begin(), real_logits.data().end(), logits.data().begin());
            std::copy(replay_logits.data().begin(), replay_logits.data().end(),
                      logits.data().begin() + static_cast<std::ptrdiff_t>(real_logits.size()));
            std::vector<std::size_t> targets = head_targets(model.head, yb);
            targets.insert(targets.end(), replay_targets.begin(), replay_targets.end());
            const BatchCrossEntropy ce = batch_cross_entropy(logits, targets);

            Matrix d_real(n_real, C), d_replay(n_replay, C);
            std::copy_n(ce.dlogits.data().begin(), d_real.size(), d_real.data().begin());
            std::copy(ce.dlogits.data().begin() + static_cast<std::ptrdiff_t>(d_real.size()),
                      ce.dlogits.data().end(), d_replay.data().begin());

            ModelGrads g = model_backward(model, fwd.cache, fwd.features, d_real, lambda);
            if (n_replay > 0) g.head += cosine_backward(model.head, replay, d_replay).dweights;

            double real_ce = 0.0;
            for (std::size_t i = 0; i < n_real; ++i)
                real_ce += cross_entropy(real_logits.row(i), targets[i]).loss;
            epoch_ce += real_ce;

            const double lr = cosine_lr(step, total_steps, cfg.lr0, cfg.lr_min);
            model.adapter.A.axpy(-lr, g.adapter.dA);
            model.adapter.B.axpy(-lr, g.adapter.dB);
            if (train_routing) model.adapter.R_delta.axpy(-lr, g.adapter.dR_delta);
            model.head.weights.axpy(-lr, g.head);
            ++model.version;
            if (!model.adapter.A.all_finite() || !model.adapter.B.all_finite() ||
                !model.adapter.R_delta.all_finite() || !model.head.weights.all_finite())
                throw NumericalError("training diverged in session " +
                                     std::to_string(data.session_id) + " at step " +
                                     std::to_string(step) + " (lr " + std::to_string(lr) + ")");

            StepInfo info{epoch, step, lr, ce.loss, g.orth_loss};
            log.steps.push_back(info);
            if (observer) observer(model, info);
            ++step;
        }
        log.epoch_mean_ce.push_back(epoch_ce / static_cast<double>(n));
        log_debug("session " + std::to_string(data.session_id) + " epoch " +
                  std::to_string(epoch) + " ce " + std::to_string(log.epoch_mean_ce.back()));
    }

    if (cfg.decomposed() && cfg.epochs_per_session > 0) {
        model.adapter = consolidate(model.adapter, state.rng, cfg.r_delta_init_std);
        ++model.version;
    }

    // Statistics for this session's classes come from the trained block and stay frozen.
    const Matrix features = block_forward(model, data.inputs).features;
    std::vector<int> keep_labels;
    std::vector<std::size_t> keep_rows;
    for (std::size_t i = 0; i < n; ++i)
        if (!state.stats.contains(data.labels[i])) keep_rows.push_back(i);
    Matrix kept(keep_rows.size(), d);
    for (std::size_t i = 0; i < keep_rows.size(); ++i) {
        std::copy(features.row(keep_rows[i]).begin(), features.row(keep_rows[i]).end(),
                  kept.row(i).begin());
        keep_labels.push_back(data.labels[keep_rows[i]]);
    }
    state.stats = update_class_stats(std::move(state.stats), kept, keep_labels);
    return log;
}

double accuracy(const IncrementalModel& m, const Matrix& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) throw ShapeError("accuracy: label count mismatch");
    if (x.rows() == 0) throw std::invalid_argument("accuracy: empty evaluation set");
    const auto pred = predict(m, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

static void check_sequence(std::span<const SessionData> train, std::span<const SessionData> test) {
    if (train.empty()) throw std::invalid_argument("run_sequence: no tasks");
    if (test.size() != train.size())
        throw std::invalid_argument("run_sequence: " + std::to_string(train.size()) +
                                    " training sessions but " + std::to_string(test.size()) +
                                    " test sessions");
    std::set<int> seen;
    for (std::size_t t = 0; t < train.size(); ++t) {
        train[t].validate();
        test[t].validate();
        for (int c : train[t].classes)
            if (!seen.insert(c).second)
                throw std::invalid_argument("run_sequence: class " + std::to_string(c) +
                                            " appears in more than one session");
        for (int l : test[t].labels)
            if (std::find(train[t].classes.begin(), train[t].classes.end(), l) ==
                train[t].classes.end())
                throw std::invalid_argument("run_sequence: test label " + std::to_string(l) +
                                            " not among session " + std::to_string(t) +
                                            " training classes");
    }
}

static Matrix stack_rows(std::span<const SessionData> sessions, std::vector<int>& labels) {
    std::size_t rows = 0;
    for (const auto& s : sessions) rows += s.inputs.rows();
    const std::size_t d = sessions.front().inputs.cols();
    Matrix out(rows, d);
    std::size_t r = 0;
    for (const auto& s : sessions) {
        std::copy(s.inputs.data().begin(), s.inputs.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
        labels.insert(labels.end(), s.labels.begin(), s.labels.end());
        r += s.inputs.rows();
    }
    return out;
}

SequenceResult run_sequence(std::span<const SessionData> train, std::span<const SessionData> test,
                            const TrainConfig& cfg, SequenceOptions options) {
    check_sequence(train, test);
    const std::size_t d = train.front().inputs.cols();
    TrainerState state = options.resume ? std::move(*options.resume) : initial_state(cfg, d);
    if (state.model.dim() != d)
        throw ShapeError("run_sequence: resumed model dimension does not match data");
    if (state.next_session > train.size())
        throw std::invalid_argument("run_sequence: resume point beyond the task list");
    const std::size_t end = std::min(train.size(), options.stop_after.value_or(train.size()));

    for (std::size_t t = state.next_session; t < end; ++t) {
        run_session(state, train[t], cfg, options.observer);
        state.next_session = t + 1;

        std::vector<int> labels;
        const Matrix seen = stack_rows(test.subspan(0, t + 1), labels);
        state.session_acc.push_back(accuracy(state.model, seen, labels));
        std::vector<double> row;
        for (std::size_t g = 0; g <= t; ++g)
            row.push_back(accuracy(state.model, test[g].inputs, test[g].labels));
        state.intervals.push_back(std::move(row));
        log_info(to_string(cfg.variant) + " session " + std::to_string(t + 1) + "/" +
                 std::to_string(train.size()) + " seen-class accuracy " +
                 std::to_string(state.session_acc.back()));
    }
    if (state.session_acc.empty())
        throw std::invalid_argument("run_sequence: no session was trained");
    SequenceResult out{compute_metrics(state.session_acc, state.intervals), std::move(state)};
    return out;
}

MetricsRecord run_sequence_metrics(std::span<const SessionData> train,
                                   std::span<const SessionData> test, const TrainConfig& cfg) {
    return run_sequence(train, test, cfg).metrics;
}

}  // namespace clora

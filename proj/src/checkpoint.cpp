#include "clora/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "clora/config.hpp"

namespace clora {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "clora-checkpoint";
constexpr int kVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw CheckpointError("checkpoint: " + msg); }

const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) fail(where + " is missing '" + key + "'");
    return j.at(key);
}

std::vector<double> finite_array(const json& j, const std::string& name) {
    if (!j.is_array()) fail(name + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) fail(name + " contains a non-numeric or non-finite value");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(name + " contains a non-finite value");
        out.push_back(x);
    }
    return out;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols)
        fail("matrix '" + name + "' has shape " + m.shape_string() + ", expected " +
             std::to_string(rows) + "x" + std::to_string(cols));
}

}  // namespace

json matrix_to_json(const Matrix& m) {
    if (!m.all_finite()) fail("refusing to save a matrix with non-finite entries");
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
    const auto& rows = field(j, "rows", "matrix '" + name + "'");
    const auto& cols = field(j, "cols", "matrix '" + name + "'");
    if (!rows.is_number_unsigned() || !cols.is_number_unsigned())
        fail("matrix '" + name + "' has a malformed shape field");
    std::vector<double> data = finite_array(field(j, "data", "matrix '" + name + "'"), name);
    const auto r = rows.get<std::size_t>(), c = cols.get<std::size_t>();
    if (data.size() != r * c)
        fail("matrix '" + name + "' declares shape " + std::to_string(r) + "x" + std::to_string(c) +
             " but holds " + std::to_string(data.size()) + " values");
    return Matrix(r, c, std::move(data));
}

json checkpoint_to_json(const Checkpoint& ckpt) {
    const TrainerState& s = ckpt.state;
    const auto& ad = s.model.adapter;
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["config"] = train_config_to_json(ckpt.config);
    j["session_index"] = s.next_session;
    j["model_version"] = s.model.version;
    j["block"] = {{"W1", matrix_to_json(s.model.block.W1)},
                  {"b1", matrix_to_json(s.model.block.b1)},
                  {"W2", matrix_to_json(s.model.block.W2)},
                  {"b2", matrix_to_json(s.model.block.b2)}};
    j["adapter"] = {{"A", matrix_to_json(ad.A)},
                    {"B", matrix_to_json(ad.B)},
                    {"R_old", matrix_to_json(ad.R_old)},
                    {"R_delta", matrix_to_json(ad.R_delta)},
                    {"A_snapshot", ad.A_snapshot ? matrix_to_json(*ad.A_snapshot) : json(nullptr)}};
    j["head"] = {{"scale", s.model.head.scale},
                 {"labels", s.model.head.labels},
                 {"weights", matrix_to_json(s.model.head.weights)}};
    j["stats"] = json::array();
    for (const auto& [label, cs] : s.stats.classes)
        j["stats"].push_back({{"label", label},
                              {"count", cs.count},
                              {"mean", cs.mean},
                              {"m2", matrix_to_json(cs.m2)}});
    const Rng::State rs = s.rng.state();
    j["rng"] = {{"seed", rs.seed}, {"engine", rs.engine}, {"has_spare", rs.has_spare},
                {"spare", rs.spare}};
    j["metrics"] = {{"session_acc", s.session_acc}, {"intervals", s.intervals}};
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    if (!j.is_object()) fail("document is not a JSON object");
    if (field(j, "format", "document") != kFormat) fail("unrecognised format tag");
    if (field(j, "version", "document") != kVersion) fail("unsupported version");

    Checkpoint ck;
    try {
        ck.config = train_config_from_json(field(j, "config", "document"));
    } catch (const ConfigError& e) {
        fail(std::string("config: ") + e.what());
    }
    const TrainConfig& cfg = ck.config;
    TrainerState& s = ck.state;

    const json& idx = field(j, "session_index", "document");
    const json& ver = field(j, "model_version", "document");
    if (!idx.is_number_unsigned() || !ver.is_number_unsigned())
        fail("session_index and model_version must be non-negative integers");
    s.next_session = idx.get<std::size_t>();
    s.model.version = ver.get<std::uint64_t>();

    const json& block = field(j, "block", "document");
    s.model.block.W1 = matrix_from_json(field(block, "W1", "block"), "block.W1");
    const std::size_t d = s.model.block.W1.rows();
    const std::size_t h = cfg.mlp_hidden;
    const std::size_t r = cfg.rank;
    expect_shape(s.model.block.W1, d, h, "block.W1");
    s.model.block.b1 = matrix_from_json(field(block, "b1", "block"), "block.b1");
    expect_shape(s.model.block.b1, 1, h, "block.b1");
    s.model.block.W2 = matrix_from_json(field(block, "W2", "block"), "block.W2");
    expect_shape(s.model.block.W2, h, d, "block.W2");
    s.model.block.b2 = matrix_from_json(field(block, "b2", "block"), "block.b2");
    expect_shape(s.model.block.b2, 1, d, "block.b2");

    const json& ad = field(j, "adapter", "document");
    auto& a = s.model.adapter;
    a.A = matrix_from_json(field(ad, "A", "adapter"), "adapter.A");
    expect_shape(a.A, d, r, "adapter.A");
    a.B = matrix_from_json(field(ad, "B", "adapter"), "adapter.B");
    expect_shape(a.B, r, d, "adapter.B");
    a.R_old = matrix_from_json(field(ad, "R_old", "adapter"), "adapter.R_old");
    expect_shape(a.R_old, r, r, "adapter.R_old");
    a.R_delta = matrix_from_json(field(ad, "R_delta", "adapter"), "adapter.R_delta");
    expect_shape(a.R_delta, r, r, "adapter.R_delta");
    const json& snap = field(ad, "A_snapshot", "adapter");
    if (!snap.is_null()) {
        a.A_snapshot = matrix_from_json(snap, "adapter.A_snapshot");
        expect_shape(*a.A_snapshot, d, r, "adapter.A_snapshot");
    }

    const json& head = field(j, "head", "document");
    const json& scale = field(head, "scale", "head");
    if (!scale.is_number() || !(scale.get<double>() > 0.0)) fail("head.scale must be positive");
    s.model.head.scale = scale.get<double>();
    const json& labels = field(head, "labels", "head");
    if (!labels.is_array()) fail("head.labels must be an array");
    for (const auto& l : labels) {
        if (!l.is_number_integer()) fail("head.labels must hold integers");
        s.model.head.labels.push_back(l.get<int>());
    }
    s.model.head.weights = matrix_from_json(field(head, "weights", "head"), "head.weights");
    expect_shape(s.model.head.weights, s.model.head.labels.size(), d, "head.weights");

    const json& stats = field(j, "stats", "document");
    if (!stats.is_array()) fail("stats must be an array");
    for (const auto& e : stats) {
        const json& label = field(e, "label", "stats entry");
        const json& count = field(e, "count", "stats entry");
        if (!label.is_number_integer() || !count.is_number_unsigned())
            fail("stats entry has malformed label or count");
        const std::string name = "stats[" + std::to_string(label.get<int>()) + "]";
        ClassStat cs;
        cs.count = count.get<std::size_t>();
        cs.mean = finite_array(field(e, "mean", name), name + ".mean");
        if (cs.mean.size() != d) fail(name + ".mean has the wrong length");
        cs.m2 = matrix_from_json(field(e, "m2", name), name + ".m2");
        expect_shape(cs.m2, d, d, name + ".m2");
        if (!s.stats.classes.emplace(label.get<int>(), std::move(cs)).second)
            fail("duplicate stats entry for class " + std::to_string(label.get<int>()));
    }

    const json& rng = field(j, "rng", "document");
    Rng::State rs;
    try {
        rs.seed = field(rng, "seed", "rng").get<std::uint64_t>();
        rs.engine = field(rng, "engine", "rng").get<std::vector<std::uint64_t>>();
        rs.has_spare = field(rng, "has_spare", "rng").get<bool>();
        rs.spare = field(rng, "spare", "rng").get<double>();
        s.rng = Rng::from_state(rs);
    } catch (const json::exception&) {
        fail("rng state is malformed");
    } catch (const std::invalid_argument&) {
        fail("rng engine state is malformed");
    }

    const json& metrics = field(j, "metrics", "document");
    s.session_acc = finite_array(field(metrics, "session_acc", "metrics"), "metrics.session_acc");
    const json& intervals = field(metrics, "intervals", "metrics");
    if (!intervals.is_array()) fail("metrics.intervals must be an array");
    for (const auto& row : intervals)
        s.intervals.push_back(finite_array(row, "metrics.intervals"));
    if (s.session_acc.size() != s.next_session || s.intervals.size() != s.next_session)
        fail("metrics history does not match session_index");
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const json j = checkpoint_to_json(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open " + path.string() + " for writing");
    out << j.dump(1) << '\n';
    if (!out) fail("write to " + path.string() + " failed");
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(path.string() + " is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace clora

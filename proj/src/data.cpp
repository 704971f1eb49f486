#include "clora/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace clora {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSpec::validate() const {
    if (sessions == 0 || classes_per_session == 0 || dim == 0 || samples_per_class == 0)
        throw std::invalid_argument("synthetic spec: all counts must be >= 1");
    if (!(separation >= 0.0)) throw std::invalid_argument("synthetic spec: separation must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw std::invalid_argument("synthetic spec: train_fraction must be in (0, 1]");
}

TaskSplit generate_synthetic_tasks(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t d = spec.dim, n = spec.samples_per_class;
    std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    n_train = std::clamp<std::size_t>(n_train, 1, n);
    // A single-sample class has nothing left for testing; it is evaluated on its training draw.
    const std::size_t n_test = n_train == n ? (n == 1 ? 1 : n - n_train) : n - n_train;

    TaskSplit split;
    for (std::size_t t = 0; t < spec.sessions; ++t) {
        SessionData train, test;
        train.session_id = test.session_id = t;
        train.inputs = Matrix(n_train * spec.classes_per_session, d);
        test.inputs = Matrix(n_test * spec.classes_per_session, d);
        for (std::size_t c = 0; c < spec.classes_per_session; ++c) {
            const int label = static_cast<int>(t * spec.classes_per_session + c);
            train.classes.push_back(label);
            test.classes.push_back(label);

            std::vector<double> mean(d);
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& v : mean) {
                    v = rng.normal();
                    norm += v * v;
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            for (double& v : mean) v *= spec.separation / norm;

            for (std::size_t s = 0; s < n; ++s) {
                const bool to_train = s < n_train;
                SessionData& dst = to_train ? train : test;
                const std::size_t row = to_train ? c * n_train + s : c * n_test + (s - n_train);
                for (std::size_t j = 0; j < d; ++j) dst.inputs(row, j) = mean[j] + rng.normal();
                dst.labels.push_back(label);
            }
            if (n == 1) {
                std::copy(train.inputs.row(c).begin(), train.inputs.row(c).end(),
                          test.inputs.row(c).begin());
                test.labels.push_back(label);
            }
        }
        split.train.push_back(std::move(train));
        split.test.push_back(std::move(test));
    }
    return split;
}

// ---------------------------------------------------------------- CSV

static std::string where(const fs::path& p, std::size_t line) {
    return p.string() + ":" + std::to_string(line);
}

static std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(',', start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

FeatureTable read_feature_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open feature file");
    std::string line;
    std::size_t lineno = 0;
    std::size_t d = 0;
    bool have_header = false;
    std::vector<double> values;
    FeatureTable table;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
            line.erase(0, 3);
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (!have_header) {
            if (fields.size() < 2 || trim(fields.back()) != "label")
                throw DataError(where(path, lineno) +
                                ": header must be feature_0,...,feature_{d-1},label");
            for (std::size_t j = 0; j + 1 < fields.size(); ++j)
                if (trim(fields[j]) != "feature_" + std::to_string(j))
                    throw DataError(where(path, lineno) + ": expected column 'feature_" +
                                    std::to_string(j) + "'");
            d = fields.size() - 1;
            have_header = true;
            continue;
        }
        if (fields.size() != d + 1)
            throw DataError(where(path, lineno) + ": expected " + std::to_string(d + 1) +
                            " fields, found " + std::to_string(fields.size()));
        for (std::size_t j = 0; j < d; ++j) {
            const auto f = trim(fields[j]);
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v))
                throw DataError(where(path, lineno) + ": malformed value '" + std::string(f) +
                                "' in column " + std::to_string(j));
            values.push_back(v);
        }
        const auto lf = trim(fields.back());
        int label = 0;
        const auto res = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (res.ec != std::errc() || res.ptr != lf.data() + lf.size())
            throw DataError(where(path, lineno) + ": malformed label '" + std::string(lf) + "'");
        table.labels.push_back(label);
        table.lines.push_back(lineno);
    }
    if (!have_header) throw DataError(path.string() + ": missing header");
    table.features = Matrix(table.labels.size(), d, std::move(values));
    return table;
}

static std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_feature_csv(const fs::path& path, const Matrix& features, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    for (std::size_t j = 0; j < features.cols(); ++j) out << "feature_" << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) out << format_double(features(i, j)) << ',';
        out << labels[i] << '\n';
    }
}

// ---------------------------------------------------------------- manifest

namespace {

struct Row {
    const FeatureTable* table;
    std::size_t index;
};

std::vector<SessionData> group_sessions(const std::vector<std::vector<int>>& sessions,
                                        const std::vector<std::pair<fs::path, FeatureTable>>& files,
                                        std::size_t d) {
    std::map<int, std::size_t> session_of;
    for (std::size_t t = 0; t < sessions.size(); ++t)
        for (int c : sessions[t]) session_of[c] = t;

    std::vector<std::vector<Row>> rows(sessions.size());
    for (const auto& [path, table] : files) {
        if (table.features.cols() != d)
            throw DataError(path.string() + ": feature dimension " +
                            std::to_string(table.features.cols()) + " differs from " +
                            std::to_string(d));
        for (std::size_t i = 0; i < table.labels.size(); ++i) {
            auto it = session_of.find(table.labels[i]);
            if (it == session_of.end())
                throw DataError(where(path, table.lines[i]) + ": label " +
                                std::to_string(table.labels[i]) + " is not listed in the manifest");
            rows[it->second].push_back({&table, i});
        }
    }
    std::vector<SessionData> out(sessions.size());
    for (std::size_t t = 0; t < sessions.size(); ++t) {
        SessionData& s = out[t];
        s.session_id = t;
        s.classes = sessions[t];
        s.inputs = Matrix(rows[t].size(), d);
        for (std::size_t i = 0; i < rows[t].size(); ++i) {
            const auto src = rows[t][i].table->features.row(rows[t][i].index);
            std::copy(src.begin(), src.end(), s.inputs.row(i).begin());
            s.labels.push_back(rows[t][i].table->labels[rows[t][i].index]);
        }
    }
    return out;
}

}  // namespace

TaskSplit load_feature_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError(manifest_path.string() + ": cannot open manifest");
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(manifest_path.string() + ": invalid JSON: " + e.what());
    }
    const fs::path base = manifest_path.parent_path();
    auto fail = [&](const std::string& msg) { throw DataError(manifest_path.string() + ": " + msg); };

    if (!m.is_object() || !m.contains("sessions") || !m["sessions"].is_array())
        fail("missing 'sessions' array");
    std::vector<std::vector<int>> sessions;
    std::set<int> seen;
    for (const auto& s : m["sessions"]) {
        if (!s.is_array() || s.empty()) fail("each session must be a non-empty array of labels");
        std::vector<int> cls;
        for (const auto& c : s) {
            if (!c.is_number_integer()) fail("class labels must be integers");
            const int label = c.get<int>();
            if (!seen.insert(label).second)
                fail("class " + std::to_string(label) + " listed in more than one session");
            cls.push_back(label);
        }
        sessions.push_back(std::move(cls));
    }
    if (sessions.empty()) fail("no sessions listed");

    auto load_files = [&](const char* key) {
        std::vector<std::pair<fs::path, FeatureTable>> files;
        if (!m.contains(key)) return files;
        if (!m[key].is_array()) fail(std::string("'") + key + "' must be an array of paths");
        for (const auto& p : m[key]) {
            if (!p.is_string()) fail(std::string("'") + key + "' entries must be strings");
            fs::path path = p.get<std::string>();
            if (path.is_relative()) path = base / path;
            if (!fs::exists(path)) fail("referenced file does not exist: " + path.string());
            files.emplace_back(path, read_feature_csv(path));
        }
        return files;
    };
    const auto train_files = load_files("train_files");
    if (train_files.empty()) fail("'train_files' must list at least one CSV");
    const std::size_t d = train_files.front().second.features.cols();
    const auto test_files = load_files("test_files");

    TaskSplit split;
    split.train = group_sessions(sessions, train_files, d);
    if (!test_files.empty()) {
        split.test = group_sessions(sessions, test_files, d);
    } else {
        const double frac = m.value("test_fraction", 0.2);
        if (!(frac > 0.0 && frac < 1.0)) fail("'test_fraction' must be in (0, 1)");
        // Hold out the last `frac` of each class's rows, in file order.
        std::vector<SessionData> train_out, test_out;
        for (const auto& s : split.train) {
            SessionData tr, te;
            tr.session_id = te.session_id = s.session_id;
            tr.classes = te.classes = s.classes;
            std::vector<std::size_t> tr_rows, te_rows;
            for (int c : s.classes) {
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < s.labels.size(); ++i)
                    if (s.labels[i] == c) idx.push_back(i);
                const auto n_test = static_cast<std::size_t>(std::llround(frac * idx.size()));
                const std::size_t cut = idx.size() - std::min(n_test, idx.size());
                tr_rows.insert(tr_rows.end(), idx.begin(), idx.begin() + cut);
                te_rows.insert(te_rows.end(), idx.begin() + cut, idx.end());
            }
            auto take = [&](const std::vector<std::size_t>& rows, SessionData& dst) {
                dst.inputs = Matrix(rows.size(), d);
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    std::copy(s.inputs.row(rows[i]).begin(), s.inputs.row(rows[i]).end(),
                              dst.inputs.row(i).begin());
                    dst.labels.push_back(s.labels[rows[i]]);
                }
            };
            take(tr_rows, tr);
            take(te_rows, te);
            train_out.push_back(std::move(tr));
            test_out.push_back(std::move(te));
        }
        split.train = std::move(train_out);
        split.test = std::move(test_out);
    }
    for (std::size_t t = 0; t < sessions.size(); ++t) {
        if (split.train[t].inputs.rows() == 0)
            fail("session " + std::to_string(t) + " has no training rows");
        if (split.test[t].inputs.rows() == 0)
            fail("session " + std::to_string(t) + " has no test rows");
    }
    return split;
}

void write_feature_dataset(const TaskSplit& split, const fs::path& dir) {
    fs::create_directories(dir);
    auto write_all = [&](const std::vector<SessionData>& sessions, const fs::path& path) {
        std::size_t rows = 0;
        const std::size_t d = sessions.front().inputs.cols();
        for (const auto& s : sessions) rows += s.inputs.rows();
        Matrix all(rows, d);
        std::vector<int> labels;
        std::size_t r = 0;
        for (const auto& s : sessions) {
            std::copy(s.inputs.data().begin(), s.inputs.data().end(),
                      all.data().begin() + static_cast<std::ptrdiff_t>(r * d));
            labels.insert(labels.end(), s.labels.begin(), s.labels.end());
            r += s.inputs.rows();
        }
        write_feature_csv(path, all, labels);
    };
    if (split.train.empty()) throw DataError("write_feature_dataset: no sessions");
    write_all(split.train, dir / "train.csv");
    write_all(split.test, dir / "test.csv");
    json m;
    m["sessions"] = json::array();
    for (const auto& s : split.train) m["sessions"].push_back(s.classes);
    m["train_files"] = {"train.csv"};
    m["test_files"] = {"test.csv"};
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << '\n';
}

}  // namespace clora

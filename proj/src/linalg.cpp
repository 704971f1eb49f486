#include "clora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace clora {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

void Matrix::axpy(double s, const Matrix& other) {
    require_same_shape(*this, other, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix m) { return m *= s; }

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + m.shape_string());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
    const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
    Matrix out(m, p);
    // i-k-j loop: each out(i, j) accumulates over k in ascending order.
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.row(i).data();
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

double frobenius_norm_sq(const Matrix& m) noexcept {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
}

double frobenius_norm(const Matrix& m) noexcept { return std::sqrt(frobenius_norm_sq(m)); }

double trace(const Matrix& m) {
    if (m.rows() != m.cols()) throw ShapeError("trace: non-square " + m.shape_string());
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
    return t;
}

Matrix symmetric_part(const Matrix& m) {
    if (m.rows() != m.cols()) throw ShapeError("symmetric_part: non-square " + m.shape_string());
    Matrix s(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return s;
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols())
        throw ShapeError("symmetric_eigenvalues: non-square " + m.shape_string());
    Matrix a = symmetric_part(m);
    const std::size_t n = a.rows();
    const double scale = std::max(frobenius_norm(a), 1e-300);

    // Cyclic Jacobi rotations until the off-diagonal mass is negligible.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-15 * scale) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

double min_symmetric_eigenvalue(const Matrix& m) {
    if (m.rows() != m.cols())
        throw ShapeError("min_symmetric_eigenvalue: non-square " + m.shape_string());
    if (m.rows() == 0) throw ShapeError("min_symmetric_eigenvalue: empty matrix");
    return symmetric_eigenvalues(m).front();
}

Matrix cholesky(const Matrix& m) {
    if (m.rows() != m.cols()) throw ShapeError("cholesky: non-square " + m.shape_string());
    const std::size_t n = m.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
    const double tol = 1e-12 * std::max(max_diag, 1.0);

    Matrix L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (d < -tol)
            throw NumericalError("cholesky: matrix is not positive semidefinite (pivot " +
                                 std::to_string(j) + " = " + std::to_string(d) + ")");
        const double ljj = d > tol ? std::sqrt(d) : 0.0;
        L(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            if (ljj > 0.0) {
                L(i, j) = s / ljj;
            } else if (std::abs(s) > tol) {
                throw NumericalError("cholesky: zero pivot with nonzero column at " +
                                     std::to_string(j));
            }
        }
    }
    return L;
}

Matrix orthonormal_columns(const Matrix& m) {
    Matrix q = m;
    for (std::size_t j = 0; j < q.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < q.rows(); ++i) dot += q(i, k) * q(i, j);
            for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) -= dot * q(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < q.rows(); ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericalError("orthonormal_columns: rank-deficient input");
        for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) /= norm;
    }
    return q;
}

// ---------------------------------------------------------------- Rng

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double Rng::normal(double mean, double std) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + std * spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + std * radius * std::cos(angle);
}

Rng::State Rng::state() const {
    State s;
    s.seed = seed_;
    std::ostringstream os;
    os << engine_;
    std::istringstream is(os.str());
    std::uint64_t v;
    while (is >> v) s.engine.push_back(v);
    s.has_spare = has_spare_;
    s.spare = spare_;
    return s;
}

Rng Rng::from_state(const State& s) {
    Rng r(s.seed);
    std::ostringstream os;
    for (std::size_t i = 0; i < s.engine.size(); ++i) {
        if (i) os << ' ';
        os << s.engine[i];
    }
    std::istringstream is(os.str());
    is >> r.engine_;
    if (is.fail()) throw std::invalid_argument("Rng::from_state: malformed engine state");
    r.has_spare_ = s.has_spare;
    r.spare_ = s.spare;
    return r;
}

bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng) {
    if (!(std >= 0.0)) throw std::invalid_argument("gaussian_matrix: std must be >= 0");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal(mean, std);
    return m;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace clora

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clora {

/// Thrown when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot complete (e.g. a non-PSD Cholesky input).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
///
/// A 0-row or 0-column matrix is allowed so that empty batches (n = 0 replay
/// draws) have a natural representation.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    /// this += s * other
    void axpy(double s, const Matrix& other);

    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix m);

/// Standard product. Accumulation order is fixed (k ascending) so results are
/// reproducible bit for bit.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

double frobenius_norm_sq(const Matrix& m) noexcept;
double frobenius_norm(const Matrix& m) noexcept;
double trace(const Matrix& m);

/// (m + m^T) / 2
Matrix symmetric_part(const Matrix& m);

/// Smallest eigenvalue of the symmetric part of a square matrix (cyclic Jacobi).
double min_symmetric_eigenvalue(const Matrix& m);

/// All eigenvalues of the symmetric part, ascending.
std::vector<double> symmetric_eigenvalues(const Matrix& m);

/// Lower-triangular L with L L^T == m. Zero pivots are tolerated (PSD input);
/// a negative pivot beyond round-off raises NumericalError.
Matrix cholesky(const Matrix& m);

/// Thin QR via modified Gram-Schmidt; returns Q (rows x cols, orthonormal columns).
Matrix orthonormal_columns(const Matrix& m);

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what);

/// Seeded generator. The engine is std::mt19937_64 (fully specified by the
/// standard); normal draws use Box-Muller written out here so the sequence is
/// the same on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n) by rejection; n >= 1.
    std::size_t uniform_index(std::size_t n);
    double normal(double mean = 0.0, double std = 1.0);

    /// Serialized engine state followed by the Box-Muller cache.
    struct State {
        std::uint64_t seed = 0;
        std::vector<std::uint64_t> engine;
        bool has_spare = false;
        double spare = 0.0;
    };
    State state() const;
    static Rng from_state(const State& s);

    friend bool operator==(const Rng& a, const Rng& b);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng);

/// In-place Fisher-Yates shuffle driven by Rng (std::shuffle is not portable).
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

}  // namespace clora

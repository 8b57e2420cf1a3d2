#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "lowrank/linalg.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

/// Matrix function F(t) = E * e^t + sum_j C_j * t^j.
///
/// The class is closed under differentiation and antidifferentiation, which
/// is all the rank constructions need. Coefficients are raw monomial
/// coefficients (no factorial scaling). Trailing all-zero C_j are trimmed so
/// that degree() is canonical; the zero function has degree -1.
class ExpPolyMatrix {
public:
    ExpPolyMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), exp_(Matrix::Zero(rows, cols)) {
        if (rows <= 0 || cols <= 0) throw ShapeError("ExpPolyMatrix: dimensions must be positive");
    }

    ExpPolyMatrix(Matrix exp_coeff, std::vector<Matrix> poly_coeffs)
        : rows_(exp_coeff.rows()), cols_(exp_coeff.cols()), exp_(std::move(exp_coeff)),
          poly_(std::move(poly_coeffs)) {
        if (rows_ <= 0 || cols_ <= 0) throw ShapeError("ExpPolyMatrix: dimensions must be positive");
        for (const auto& c : poly_) {
            if (c.rows() != rows_ || c.cols() != cols_) {
                throw ShapeError("ExpPolyMatrix: coefficient " + shape_str(c.rows(), c.cols()) +
                                 " does not match " + shape_str(rows_, cols_));
            }
        }
        trim();
    }

    static ExpPolyMatrix polynomial(std::vector<Matrix> poly_coeffs) {
        if (poly_coeffs.empty()) throw ShapeError("ExpPolyMatrix::polynomial: need at least one coefficient");
        Matrix zero = Matrix::Zero(poly_coeffs.front().rows(), poly_coeffs.front().cols());
        return ExpPolyMatrix(std::move(zero), std::move(poly_coeffs));
    }
    static ExpPolyMatrix constant(const Matrix& c) { return polynomial({c}); }
    static ExpPolyMatrix monomial(const Matrix& c, int degree) {
        std::vector<Matrix> coeffs(static_cast<std::size_t>(degree) + 1, Matrix::Zero(c.rows(), c.cols()));
        coeffs.back() = c;
        return polynomial(std::move(coeffs));
    }
    static ExpPolyMatrix exponential(const Matrix& e) { return ExpPolyMatrix(e, {}); }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    const Matrix& exp_coeff() const { return exp_; }
    const std::vector<Matrix>& poly_coeffs() const { return poly_; }
    int degree() const { return static_cast<int>(poly_.size()) - 1; }
    bool has_exp() const { return !exp_.isZero(0.0); }
    bool is_zero() const { return !has_exp() && poly_.empty(); }

    Matrix coefficient(int j) const {
        if (j < 0 || j > degree()) return Matrix::Zero(rows_, cols_);
        return poly_[static_cast<std::size_t>(j)];
    }

    ExpPolyMatrix& operator+=(const ExpPolyMatrix& other) {
        check_same_shape(other);
        exp_ += other.exp_;
        if (other.poly_.size() > poly_.size()) poly_.resize(other.poly_.size(), Matrix::Zero(rows_, cols_));
        for (std::size_t j = 0; j < other.poly_.size(); ++j) poly_[j] += other.poly_[j];
        trim();
        return *this;
    }
    ExpPolyMatrix& operator-=(const ExpPolyMatrix& other) { return *this += other * -1.0; }
    ExpPolyMatrix& operator*=(double s) {
        exp_ *= s;
        for (auto& c : poly_) c *= s;
        trim();
        return *this;
    }

    friend ExpPolyMatrix operator+(ExpPolyMatrix a, const ExpPolyMatrix& b) { return a += b; }
    friend ExpPolyMatrix operator-(ExpPolyMatrix a, const ExpPolyMatrix& b) { return a -= b; }
    friend ExpPolyMatrix operator*(ExpPolyMatrix a, double s) { return a *= s; }
    friend ExpPolyMatrix operator*(double s, ExpPolyMatrix a) { return a *= s; }

    // Exact coefficient-wise equality.
    friend bool operator==(const ExpPolyMatrix& a, const ExpPolyMatrix& b) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.poly_.size() != b.poly_.size()) return false;
        if (a.exp_ != b.exp_) return false;
        for (std::size_t j = 0; j < a.poly_.size(); ++j)
            if (a.poly_[j] != b.poly_[j]) return false;
        return true;
    }

private:
    void check_same_shape(const ExpPolyMatrix& other) const {
        if (other.rows_ != rows_ || other.cols_ != cols_) {
            throw ShapeError("ExpPolyMatrix: " + shape_str(rows_, cols_) + " vs " +
                             shape_str(other.rows_, other.cols_));
        }
    }
    void trim() {
        while (!poly_.empty() && poly_.back().isZero(0.0)) poly_.pop_back();
    }

    Index rows_;
    Index cols_;
    Matrix exp_;
    std::vector<Matrix> poly_;
};

inline Matrix evaluate(const ExpPolyMatrix& f, double t) {
    // Horner on the polynomial part.
    Matrix out = Matrix::Zero(f.rows(), f.cols());
    const auto& poly = f.poly_coeffs();
    for (auto it = poly.rbegin(); it != poly.rend(); ++it) out = out * t + *it;
    if (f.has_exp()) out += std::exp(t) * f.exp_coeff();
    return out;
}

inline ExpPolyMatrix differentiate(const ExpPolyMatrix& f) {
    const auto& poly = f.poly_coeffs();
    std::vector<Matrix> shifted;
    for (std::size_t j = 1; j < poly.size(); ++j) shifted.push_back(static_cast<double>(j) * poly[j]);
    return ExpPolyMatrix(f.exp_coeff(), std::move(shifted));
}

inline ExpPolyMatrix differentiate(const ExpPolyMatrix& f, int order) {
    ExpPolyMatrix out = f;
    for (int i = 0; i < order; ++i) out = differentiate(out);
    return out;
}

// Integration constants are all zero; e^t E integrates to itself.
inline ExpPolyMatrix antiderivative(const ExpPolyMatrix& f) {
    const auto& poly = f.poly_coeffs();
    std::vector<Matrix> lifted;
    if (!poly.empty()) {
        lifted.reserve(poly.size() + 1);
        lifted.push_back(Matrix::Zero(f.rows(), f.cols()));
        for (std::size_t j = 0; j < poly.size(); ++j) lifted.push_back(poly[j] / static_cast<double>(j + 1));
    }
    return ExpPolyMatrix(f.exp_coeff(), std::move(lifted));
}

inline ExpPolyMatrix antiderivative(const ExpPolyMatrix& f, int times) {
    ExpPolyMatrix out = f;
    for (int i = 0; i < times; ++i) out = antiderivative(out);
    return out;
}

/// L_i = W^(i-1) - W^(i) for i = 1..k. Consecutive entries satisfy
/// L_{i+1} = L_i'.
inline std::vector<ExpPolyMatrix> l_sequence(const ExpPolyMatrix& w, int k) {
    if (k < 1) throw std::invalid_argument("l_sequence: k must be >= 1");
    std::vector<ExpPolyMatrix> out;
    out.reserve(static_cast<std::size_t>(k));
    ExpPolyMatrix current = w;
    for (int i = 0; i < k; ++i) {
        ExpPolyMatrix next = differentiate(current);
        out.push_back(current - next);
        current = std::move(next);
    }
    return out;
}

/// The i-th derivatives (orders 0..k-1) of `l1`, i.e. L_1..L_k for a given
/// L_1 with L_{i+1} = L_i'.
inline std::vector<ExpPolyMatrix> derivative_chain(const ExpPolyMatrix& l1, int k) {
    std::vector<ExpPolyMatrix> out;
    out.reserve(static_cast<std::size_t>(std::max(k, 0)));
    ExpPolyMatrix current = l1;
    for (int i = 0; i < k; ++i) {
        out.push_back(current);
        if (i + 1 < k) current = differentiate(current);
    }
    return out;
}

inline ExpPolyMatrix transpose(const ExpPolyMatrix& f) {
    std::vector<Matrix> poly;
    for (const auto& c : f.poly_coeffs()) poly.emplace_back(c.transpose());
    return ExpPolyMatrix(f.exp_coeff().transpose(), std::move(poly));
}

/// Product of two exp-free matrix polynomials.
inline ExpPolyMatrix multiply(const ExpPolyMatrix& f, const ExpPolyMatrix& g) {
    if (f.has_exp() || g.has_exp()) {
        throw std::invalid_argument("multiply: only exp-free operands stay inside the function class");
    }
    if (f.cols() != g.rows()) {
        throw ShapeError("multiply: " + shape_str(f.rows(), f.cols()) + " * " + shape_str(g.rows(), g.cols()));
    }
    if (f.poly_coeffs().empty() || g.poly_coeffs().empty()) return ExpPolyMatrix(f.rows(), g.cols());
    const int degree = f.degree() + g.degree();
    std::vector<Matrix> coeffs(static_cast<std::size_t>(degree) + 1, Matrix::Zero(f.rows(), g.cols()));
    for (int a = 0; a <= f.degree(); ++a)
        for (int b = 0; b <= g.degree(); ++b) coeffs[static_cast<std::size_t>(a + b)] += f.coefficient(a) * g.coefficient(b);
    return ExpPolyMatrix::polynomial(std::move(coeffs));
}

inline ExpPolyMatrix block_diagonal(const ExpPolyMatrix& upper, const ExpPolyMatrix& lower) {
    const int degree = std::max(upper.degree(), lower.degree());
    std::vector<Matrix> coeffs;
    for (int j = 0; j <= degree; ++j)
        coeffs.push_back(block_diagonal(upper.coefficient(j), lower.coefficient(j)));
    return ExpPolyMatrix(block_diagonal(upper.exp_coeff(), lower.exp_coeff()), std::move(coeffs));
}

/// Column vector [1, t, ..., t^(m-1)]^T.
inline ExpPolyMatrix monomial_vector(Index m) {
    std::vector<Matrix> coeffs;
    for (Index j = 0; j < m; ++j) {
        Matrix c = Matrix::Zero(m, 1);
        c(j, 0) = 1.0;
        coeffs.push_back(std::move(c));
    }
    return ExpPolyMatrix::polynomial(std::move(coeffs));
}

inline double default_tolerance(Index rows, Index cols) {
    return 1e-8 * static_cast<double>(std::max(rows, cols));
}

/// Number of singular values above tolerance * sigma_max.
inline int numeric_rank(const Matrix& m, double tolerance) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("numeric_rank: tolerance must be positive");
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
    const double cutoff = tolerance * sigma(0);
    int rank = 0;
    for (Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) > cutoff) ++rank;
    return rank;
}

inline int numeric_rank(const Matrix& m) { return numeric_rank(m, default_tolerance(m.rows(), m.cols())); }

/// Sample points and relative cutoff for generic-rank estimation. When the
/// tolerance is unset the dimension default applies.
struct SampleSpec {
    std::vector<double> sample_points;
    std::optional<double> tolerance;

    void validate() const {
        if (sample_points.empty()) throw std::invalid_argument("SampleSpec: need at least one sample point");
        if (tolerance && !(*tolerance > 0.0 && *tolerance < 1.0))
            throw std::invalid_argument("SampleSpec: tolerance must lie in (0, 1)");
    }

    // `random_points` uniform draws in [0.25, 2] plus the fixed points 0.5 and 1.5.
    static SampleSpec defaults(std::uint64_t seed = kDefaultSeed, int random_points = 7) {
        Rng rng(seed);
        SampleSpec spec;
        for (int i = 0; i < random_points; ++i) spec.sample_points.push_back(rng.uniform(0.25, 2.0));
        spec.sample_points.push_back(0.5);
        spec.sample_points.push_back(1.5);
        return spec;
    }

    static constexpr std::uint64_t kDefaultSeed = 0x5eedULL;
};

/// Rank over the function field, estimated as the maximum pointwise numeric
/// rank over the sample points. Rows and columns are rescaled to unit max-norm
/// before each SVD; the rescaling is invertible and so rank-preserving, and it
/// keeps polynomial entries of very different magnitudes from masking each
/// other.
inline int generic_rank(const ExpPolyMatrix& f, const SampleSpec& spec) {
    spec.validate();
    if (f.is_zero()) return 0;
    const double tol = spec.tolerance.value_or(default_tolerance(f.rows(), f.cols()));
    int best = 0;
    for (double t : spec.sample_points) {
        Matrix m = evaluate(f, t);
        for (Index i = 0; i < m.rows(); ++i) {
            const double s = m.row(i).cwiseAbs().maxCoeff();
            if (s > 0.0) m.row(i) /= s;
        }
        for (Index j = 0; j < m.cols(); ++j) {
            const double s = m.col(j).cwiseAbs().maxCoeff();
            if (s > 0.0) m.col(j) /= s;
        }
        best = std::max(best, numeric_rank(m, tol));
    }
    return best;
}

inline int generic_rank(const ExpPolyMatrix& f) { return generic_rank(f, SampleSpec::defaults()); }

/// Generic ranks of L_1..L_k where L_{i+1} = L_i'.
inline std::vector<int> derivative_rank_profile(const ExpPolyMatrix& l1, int k, const SampleSpec& spec) {
    std::vector<int> ranks;
    for (const auto& li : derivative_chain(l1, k)) ranks.push_back(generic_rank(li, spec));
    return ranks;
}

}  // namespace lowrank

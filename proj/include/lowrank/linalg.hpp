#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lowrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown whenever operand dimensions do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(Index rows, Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

// Classical flop accounting: 2*p*q*s for a (p x q)(q x s) product and
// p*q for an elementwise p x q addition.
class FlopCounter {
public:
    void add_multiply(Index p, Index q, Index s) {
        flops_ += 2 * static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(q) *
                  static_cast<std::uint64_t>(s);
    }
    void add_elementwise(std::uint64_t count) { flops_ += count; }
    std::uint64_t total() const { return flops_; }
    void reset() { flops_ = 0; }

private:
    std::uint64_t flops_ = 0;
};

inline std::uint64_t multiply_flops(Index p, Index q, Index s) {
    return 2 * static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(q) *
           static_cast<std::uint64_t>(s);
}

/// C += A * B using an axpy-ordered kernel. Every output entry accumulates
/// its inner products in index order 0..q-1, so results do not depend on
/// how many rows or columns the operands carry.
template <class DA, class DB, class DC>
void multiply_accumulate(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                         Eigen::MatrixBase<DC>& c, FlopCounter* counter = nullptr) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
        throw ShapeError("multiply: " + shape_str(a.rows(), a.cols()) + " * " +
                         shape_str(b.rows(), b.cols()) + " -> " + shape_str(c.rows(), c.cols()));
    }
    for (Index j = 0; j < b.cols(); ++j) {
        for (Index p = 0; p < a.cols(); ++p) {
            const double s = b(p, j);
            c.col(j) += s * a.col(p);
        }
    }
    if (counter != nullptr) counter->add_multiply(a.rows(), a.cols(), b.cols());
}

template <class DA, class DB>
Matrix multiply(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                FlopCounter* counter = nullptr) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    multiply_accumulate(a, b, c, counter);
    return c;
}

template <class DA, class DB>
void add_into(Eigen::MatrixBase<DA>& acc, const Eigen::MatrixBase<DB>& term,
              FlopCounter* counter = nullptr) {
    if (acc.rows() != term.rows() || acc.cols() != term.cols()) {
        throw ShapeError("add: " + shape_str(acc.rows(), acc.cols()) + " += " +
                         shape_str(term.rows(), term.cols()));
    }
    acc += term;
    if (counter != nullptr) {
        counter->add_elementwise(static_cast<std::uint64_t>(acc.rows()) *
                                 static_cast<std::uint64_t>(acc.cols()));
    }
}

// max |a - b| / max(max |b|, tiny). Symmetric enough for tolerance checks
// where b is the reference.
template <class DA, class DB>
double max_relative_error(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& reference) {
    if (a.rows() != reference.rows() || a.cols() != reference.cols()) {
        throw ShapeError("max_relative_error: shape mismatch");
    }
    if (a.size() == 0) return 0.0;
    const double scale = std::max(reference.cwiseAbs().maxCoeff(), 1e-300);
    return (a - reference).cwiseAbs().maxCoeff() / scale;
}

inline Matrix block_diagonal(const Matrix& upper, const Matrix& lower) {
    Matrix out = Matrix::Zero(upper.rows() + lower.rows(), upper.cols() + lower.cols());
    out.topLeftCorner(upper.rows(), upper.cols()) = upper;
    out.bottomRightCorner(lower.rows(), lower.cols()) = lower;
    return out;
}

}  // namespace lowrank

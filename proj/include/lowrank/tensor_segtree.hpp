#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lowrank/linalg.hpp"
#include "lowrank/segtree.hpp"

namespace lowrank {

/// Dense 3-tensor, row-major with the third index fastest:
/// (x, y, z) lives at (x * d2 + y) * d3 + z.
class DenseTensor3 {
public:
    DenseTensor3(Index d1, Index d2, Index d3)
        : d1_(d1), d2_(d2), d3_(d3), values_(static_cast<std::size_t>(d1 * d2 * d3), 0.0) {
        if (d1 < 0 || d2 < 0 || d3 < 0) throw ShapeError("DenseTensor3: negative dimension");
    }
    DenseTensor3(Index d1, Index d2, Index d3, std::vector<double> values)
        : d1_(d1), d2_(d2), d3_(d3), values_(std::move(values)) {
        if (static_cast<Index>(values_.size()) != d1 * d2 * d3) throw ShapeError("DenseTensor3: value count mismatch");
    }

    Index d1() const { return d1_; }
    Index d2() const { return d2_; }
    Index d3() const { return d3_; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double& operator()(Index x, Index y, Index z) { return values_[offset(x, y, z)]; }
    double operator()(Index x, Index y, Index z) const { return values_[offset(x, y, z)]; }

    /// The (d1*d2) x d3 unfolding, as the transposed column-major view
    /// d3 x (d1*d2). No copy.
    Eigen::Map<const Matrix> unfolding_transposed() const { return {values_.data(), d3_, d1_ * d2_}; }

    DenseTensor3& operator+=(const DenseTensor3& other) {
        check_same(other);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
        return *this;
    }

    void add(const DenseTensor3& other, FlopCounter* counter) {
        *this += other;
        if (counter != nullptr) counter->add_elementwise(values_.size());
    }

    Eigen::Map<const Vector> flat() const { return {values_.data(), static_cast<Index>(values_.size())}; }

private:
    std::size_t offset(Index x, Index y, Index z) const {
        return static_cast<std::size_t>((x * d2_ + y) * d3_ + z);
    }
    void check_same(const DenseTensor3& other) const {
        if (other.d1_ != d1_ || other.d2_ != d2_ || other.d3_ != d3_) throw ShapeError("DenseTensor3: shape mismatch");
    }

    Index d1_, d2_, d3_;
    std::vector<double> values_;
};

inline double max_relative_error(const DenseTensor3& a, const DenseTensor3& reference) {
    if (a.d1() != reference.d1() || a.d2() != reference.d2() || a.d3() != reference.d3())
        throw ShapeError("max_relative_error: tensor shape mismatch");
    return max_relative_error(a.flat(), reference.flat());
}

/// Khatri-Rao product: row (y * n3 + z), column l holds B(y, l) * C(z, l).
inline Matrix khatri_rao(const Matrix& b, const Matrix& c, FlopCounter* counter = nullptr) {
    if (b.cols() != c.cols()) throw ShapeError("khatri_rao: inner dimensions differ");
    Matrix out(b.rows() * c.rows(), b.cols());
    for (Index l = 0; l < b.cols(); ++l)
        for (Index y = 0; y < b.rows(); ++y) out.col(l).segment(y * c.rows(), c.rows()) = b(y, l) * c.col(l);
    if (counter != nullptr) counter->add_elementwise(static_cast<std::uint64_t>(out.size()));
    return out;
}

/// T[x, y, z] = sum_l A(x, l) B(y, l) C(z, l), formed as one matrix product
/// against the Khatri-Rao product: T_(1) = A * KR(B, C)^T. The column-major
/// (n2 n3) x n1 product KR(B, C) * A^T has exactly the row-major tensor layout.
inline DenseTensor3 form_cp_tensor(const Matrix& a, const Matrix& b, const Matrix& c, FlopCounter* counter = nullptr) {
    if (a.cols() != b.cols() || a.cols() != c.cols())
        throw ShapeError("form_cp_tensor: factors must share the inner dimension");
    const Matrix kr = khatri_rao(b, c, counter);
    const Matrix unfolded = multiply(kr, a.transpose(), counter);
    return DenseTensor3(a.rows(), b.rows(), c.rows(),
                        std::vector<double>(unfolded.data(), unfolded.data() + unfolded.size()));
}

struct CpFactors {
    Matrix a;
    Matrix b;
    Matrix c;

    Index rank() const { return a.cols(); }
};

inline void validate_factors(const std::vector<CpFactors>& factors, Index n) {
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const auto& f = factors[i];
        const std::string where = "factor triple " + std::to_string(i + 1) + ": ";
        if (f.a.rows() != n || f.b.rows() != n || f.c.rows() != n)
            throw ShapeError(where + "A, B, C must all have n = " + std::to_string(n) + " rows");
        if (f.a.cols() != f.b.cols() || f.a.cols() != f.c.cols()) throw ShapeError(where + "ranks differ");
        if (f.a.cols() < 1) throw ShapeError(where + "rank must be >= 1");
    }
}

struct TensorQueryResult {
    DenseTensor3 value;
    QueryStrategy executed = QueryStrategy::OnTheFly;
    std::uint64_t flops = 0;
};

/// Static segment tree over CP triples storing T_v = sum_{j in S_v} A_j (x) B_j (x) C_j.
class TensorSegTree {
public:
    explicit TensorSegTree(std::vector<CpFactors> factors)
        : layout_(static_cast<int>(factors.size())), factors_(std::move(factors)) {
        n_ = factors_.front().a.rows();
        validate_factors(factors_, n_);
        nodes_.assign(layout_.node_count() + 1, DenseTensor3(n_, n_, n_));
        for (int i = 1; i <= k(); ++i) {
            const auto& f = factors_[static_cast<std::size_t>(i - 1)];
            nodes_[layout_.leaf(i)] = form_cp_tensor(f.a, f.b, f.c, &init_flops_);
        }
        for (NodeId v = layout_.capacity() - 1; v >= 1; --v) {
            nodes_[v] = nodes_[2 * v];
            nodes_[v].add(nodes_[2 * v + 1], &init_flops_);
        }
    }

    static TensorSegTree init(std::vector<CpFactors> factors) {
        if (factors.empty()) throw std::invalid_argument("TensorSegTree::init: need k >= 1 factor triples");
        return TensorSegTree(std::move(factors));
    }

    int k() const { return layout_.k(); }
    Index n() const { return n_; }
    const SegmentLayout& layout() const { return layout_; }
    const DenseTensor3& node(NodeId v) const { return nodes_.at(v); }
    const std::vector<CpFactors>& factors() const { return factors_; }
    std::uint64_t init_flops() const { return init_flops_.total(); }

    /// tree       = m n^3 + 2 n^3 b
    /// on-the-fly = sum_i (2 b n r_i + n b r_i + 2 n^2 b r_i + n^2 b)
    /// (X^T C_i, Khatri-Rao of B_i and X^T C_i, the unfolded product, accumulation).
    /// The counts are symmetric in n and b, so both regimes b <= n and b > n
    /// use the same expression.
    CostEstimate cost_model(int lo, int hi, Index b) const {
        const auto m = static_cast<std::uint64_t>(layout_.cover(lo, hi).size());
        const auto n = static_cast<std::uint64_t>(n_);
        const auto ub = static_cast<std::uint64_t>(b);
        CostEstimate c;
        c.tree_flops = m * n * n * n + 2 * n * n * n * ub;
        for (int i = lo; i <= hi; ++i) {
            const auto r = static_cast<std::uint64_t>(factors_[static_cast<std::size_t>(i - 1)].rank());
            c.onthefly_flops += 2 * ub * n * r + n * ub * r + 2 * n * n * ub * r + n * n * ub;
        }
        c.chosen = cheaper(c.tree_flops, c.onthefly_flops);
        return c;
    }

    /// sum_{i in [lo, hi]} A_i (x) B_i (x) (X^T C_i), an n x n x b tensor.
    TensorQueryResult query(int lo, int hi, const Matrix& x, QueryStrategy strategy = QueryStrategy::Auto) const {
        layout_.check_interval(lo, hi);
        if (x.rows() != n_) throw ShapeError("query: X must have " + std::to_string(n_) + " rows");
        if (strategy == QueryStrategy::Auto) strategy = cost_model(lo, hi, x.cols()).chosen;
        FlopCounter counter;
        const Index b = x.cols();
        if (strategy == QueryStrategy::Tree) {
            DenseTensor3 acc(n_, n_, n_);
            for (NodeId v : layout_.cover(lo, hi)) acc.add(nodes_[v], &counter);
            // (X^T)(b x n) times the transposed n x n^2 unfolding gives a
            // column-major b x n^2 result whose storage is the n x n x b tensor.
            const Matrix out = multiply(x.transpose(), acc.unfolding_transposed(), &counter);
            return {DenseTensor3(n_, n_, b, std::vector<double>(out.data(), out.data() + out.size())),
                    QueryStrategy::Tree, counter.total()};
        }
        DenseTensor3 acc(n_, n_, b);
        for (int i = lo; i <= hi; ++i) {
            const auto& f = factors_[static_cast<std::size_t>(i - 1)];
            const Matrix y = multiply(x.transpose(), f.c, &counter);
            acc.add(form_cp_tensor(f.a, f.b, y, &counter), &counter);
        }
        return {std::move(acc), QueryStrategy::OnTheFly, counter.total()};
    }

private:
    SegmentLayout layout_;
    std::vector<CpFactors> factors_;
    Index n_ = 0;
    std::vector<DenseTensor3> nodes_;  // index 0 unused
    FlopCounter init_flops_;
};

}  // namespace lowrank

#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lowrank/cascade.hpp"
#include "lowrank/linalg.hpp"

namespace lowrank {

/// Heap-ordered node id: 1 is the root, children of v are 2v and 2v+1.
using NodeId = std::size_t;

/// Closed, one-based index interval.
struct Interval {
    int lo = 1;
    int hi = 1;
    int size() const { return hi - lo + 1; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Array layout shared by the matrix and tensor trees. Leaves are padded to
/// the next power of two P; leaf i (one-based) sits at node P + i - 1.
/// Padded leaves hold zeros and are never part of a cover.
///
/// Cover bound: any [lo, hi] within [1, k] decomposes into at most
/// max(1, 2 * ceil(log2 k)) canonical nodes.
class SegmentLayout {
public:
    explicit SegmentLayout(int k) : k_(k) {
        if (k < 1) throw std::invalid_argument("segment tree needs at least one leaf");
        capacity_ = std::bit_ceil(static_cast<std::size_t>(k));
    }

    int k() const { return k_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t node_count() const { return 2 * capacity_ - 1; }
    NodeId leaf(int i) const { return capacity_ + static_cast<std::size_t>(i) - 1; }
    bool is_leaf(NodeId v) const { return v >= capacity_; }

    Interval interval(NodeId v) const {
        const int depth = std::bit_width(v) - 1;
        const std::size_t span = capacity_ >> depth;
        const std::size_t first = (v - (std::size_t{1} << depth)) * span;
        return {static_cast<int>(first) + 1, static_cast<int>(first + span)};
    }

    static int cover_bound(int k) {
        if (k <= 1) return 1;
        return 2 * static_cast<int>(std::bit_width(static_cast<unsigned>(k - 1)));
    }

    void check_interval(int lo, int hi) const {
        if (lo < 1 || hi > k_ || lo > hi)
            throw std::out_of_range("invalid interval [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                    "] for k = " + std::to_string(k_));
    }

    /// Canonical nodes covering [lo, hi], left to right.
    std::vector<NodeId> cover(int lo, int hi) const {
        check_interval(lo, hi);
        std::vector<NodeId> out;
        collect(1, lo, hi, out);
        return out;
    }

private:
    void collect(NodeId v, int lo, int hi, std::vector<NodeId>& out) const {
        const Interval s = interval(v);
        if (hi < s.lo || s.hi < lo) return;
        if (lo <= s.lo && s.hi <= hi) {
            out.push_back(v);
            return;
        }
        collect(2 * v, lo, hi, out);
        collect(2 * v + 1, lo, hi, out);
    }

    int k_;
    std::size_t capacity_;
};

inline std::vector<NodeId> canonical_cover(int k, int lo, int hi) { return SegmentLayout(k).cover(lo, hi); }

enum class QueryStrategy { Auto, Tree, OnTheFly };

inline const char* to_string(QueryStrategy s) {
    switch (s) {
        case QueryStrategy::Auto: return "auto";
        case QueryStrategy::Tree: return "tree";
        case QueryStrategy::OnTheFly: return "onthefly";
    }
    return "?";
}

inline QueryStrategy parse_strategy(const std::string& s) {
    if (s == "auto") return QueryStrategy::Auto;
    if (s == "tree") return QueryStrategy::Tree;
    if (s == "onthefly" || s == "otf") return QueryStrategy::OnTheFly;
    throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct CostEstimate {
    std::uint64_t tree_flops = 0;
    std::uint64_t onthefly_flops = 0;
    QueryStrategy chosen = QueryStrategy::OnTheFly;
};

// Ties go to on-the-fly, which never touches the node store.
inline QueryStrategy cheaper(std::uint64_t tree_flops, std::uint64_t onthefly_flops) {
    return tree_flops < onthefly_flops ? QueryStrategy::Tree : QueryStrategy::OnTheFly;
}

struct MatrixQueryResult {
    Matrix value;
    QueryStrategy executed = QueryStrategy::OnTheFly;
    std::uint64_t flops = 0;
};

/// Static segment tree over adapters storing M_v = sum_{j in S_v} A_j B_j.
class MatrixSegTree {
public:
    explicit MatrixSegTree(std::vector<Adapter> adapters)
        : layout_(static_cast<int>(adapters.size())), adapters_(std::move(adapters)) {
        n_ = adapters_.front().a.rows();
        validate_adapters(adapters_, n_);
        nodes_.assign(layout_.node_count() + 1, Matrix::Zero(n_, n_));
        for (int i = 1; i <= k(); ++i) {
            const auto& ad = adapters_[static_cast<std::size_t>(i - 1)];
            nodes_[layout_.leaf(i)] = multiply(ad.a, ad.b, &init_flops_);
        }
        for (NodeId v = layout_.capacity() - 1; v >= 1; --v) {
            nodes_[v] = nodes_[2 * v];
            add_into(nodes_[v], nodes_[2 * v + 1], &init_flops_);
        }
    }

    static MatrixSegTree init(std::vector<Adapter> adapters) {
        if (adapters.empty()) throw std::invalid_argument("MatrixSegTree::init: need k >= 1 adapters");
        return MatrixSegTree(std::move(adapters));
    }

    int k() const { return layout_.k(); }
    Index n() const { return n_; }
    const SegmentLayout& layout() const { return layout_; }
    const Matrix& node(NodeId v) const { return nodes_.at(v); }
    const std::vector<Adapter>& adapters() const { return adapters_; }
    std::uint64_t init_flops() const { return init_flops_.total(); }

    /// tree = m n^2 + 2 n^2 b;  on-the-fly = sum_i (2 r_i n b + 2 n r_i b + n b).
    CostEstimate cost_model(int lo, int hi, Index b) const {
        const auto m = static_cast<std::uint64_t>(layout_.cover(lo, hi).size());
        const auto n = static_cast<std::uint64_t>(n_);
        const auto ub = static_cast<std::uint64_t>(b);
        CostEstimate c;
        c.tree_flops = m * n * n + 2 * n * n * ub;
        for (int i = lo; i <= hi; ++i) {
            const auto r = static_cast<std::uint64_t>(adapters_[static_cast<std::size_t>(i - 1)].rank());
            c.onthefly_flops += 4 * r * n * ub + n * ub;
        }
        c.chosen = cheaper(c.tree_flops, c.onthefly_flops);
        return c;
    }

    MatrixQueryResult query(int lo, int hi, const Matrix& x, QueryStrategy strategy = QueryStrategy::Auto) const {
        layout_.check_interval(lo, hi);
        if (x.rows() != n_) throw ShapeError("query: X must have " + std::to_string(n_) + " rows");
        if (strategy == QueryStrategy::Auto) strategy = cost_model(lo, hi, x.cols()).chosen;
        FlopCounter counter;
        MatrixQueryResult out;
        out.executed = strategy;
        if (strategy == QueryStrategy::Tree) {
            // Sum the covered nodes first, then one multiply.
            Matrix acc = Matrix::Zero(n_, n_);
            for (NodeId v : layout_.cover(lo, hi)) add_into(acc, nodes_[v], &counter);
            out.value = multiply(acc, x, &counter);
        } else {
            out.value = Matrix::Zero(n_, x.cols());
            for (int i = lo; i <= hi; ++i) {
                const auto& ad = adapters_[static_cast<std::size_t>(i - 1)];
                const Matrix y = multiply(ad.b, x, &counter);
                add_into(out.value, multiply(ad.a, y, &counter), &counter);
            }
        }
        out.flops = counter.total();
        return out;
    }

private:
    SegmentLayout layout_;
    std::vector<Adapter> adapters_;
    Index n_ = 0;
    std::vector<Matrix> nodes_;  // index 0 unused
    FlopCounter init_flops_;
};

}  // namespace lowrank

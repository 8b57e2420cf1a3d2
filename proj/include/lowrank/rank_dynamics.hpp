#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowrank/matfun.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Target or measured ranks q(1..k), stored zero-based.
struct RankSequence {
    std::vector<int> values;

    int k() const { return static_cast<int>(values.size()); }
    int operator()(int i) const { return values.at(static_cast<std::size_t>(i - 1)); }  // one-based
    friend bool operator==(const RankSequence&, const RankSequence&) = default;

    void validate(int n) const {
        for (int v : values)
            if (v < 0 || v > n) throw std::invalid_argument("RankSequence: value out of [0, n]");
    }

    // q(j) <= (j - i + 1) q(i) for all i < j.
    bool satisfies_leibniz() const {
        for (int i = 1; i <= k(); ++i)
            for (int j = i + 1; j <= k(); ++j)
                if ((*this)(j) > (j - i + 1) * (*this)(i)) return false;
        return true;
    }
    bool satisfies_strict_leibniz() const {
        for (int i = 1; i <= k(); ++i)
            for (int j = i + 1; j <= k(); ++j)
                if ((*this)(j) >= (j - i + 1) * (*this)(i)) return false;
        return true;
    }
};

inline std::string to_string(const RankSequence& q) {
    std::string s = "(";
    for (std::size_t i = 0; i < q.values.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(q.values[i]);
    }
    return s + ")";
}

/// L_1(t) = sum_j f_j(t) u_j v_j^T with polynomial f_j of the given degrees.
struct DecomposableSpec {
    int n = 1;
    int r1 = 0;
    std::vector<int> func_degrees;
    std::uint64_t seed = 0;
};

enum class Relation { GT, EQ, GE };

inline const char* to_string(Relation r) {
    switch (r) {
        case Relation::GT: return "GT";
        case Relation::EQ: return "EQ";
        case Relation::GE: return "GE";
    }
    return "?";
}

inline Relation parse_relation(const std::string& s) {
    if (s == "GT" || s == ">") return Relation::GT;
    if (s == "EQ" || s == "=") return Relation::EQ;
    if (s == "GE" || s == ">=") return Relation::GE;
    throw std::invalid_argument("unknown relation '" + s + "'");
}

struct OrderingSpec {
    int k = 1;
    std::vector<int> permutation;  // one-based values, pi(x) = permutation[x-1]
    std::vector<Relation> relations;

    void validate() const {
        if (k < 1) throw std::invalid_argument("OrderingSpec: k must be >= 1");
        if (static_cast<int>(permutation.size()) != k)
            throw std::invalid_argument("OrderingSpec: permutation must have k entries");
        if (static_cast<int>(relations.size()) != k - 1)
            throw std::invalid_argument("OrderingSpec: need k-1 relations");
        std::vector<int> sorted = permutation;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < k; ++i)
            if (sorted[static_cast<std::size_t>(i)] != i + 1)
                throw std::invalid_argument("OrderingSpec: permutation is not a bijection on [k]");
    }
};

/// B_{m,d}: d-th zero-constant antiderivative of u_m u_m^T, u_m = [1, t, ..., t^(m-1)].
struct BaseBlockSpec {
    int m = 1;
    int d = 0;
    friend auto operator<=>(const BaseBlockSpec&, const BaseBlockSpec&) = default;
};

class LeibnizViolation : public std::invalid_argument {
public:
    explicit LeibnizViolation(RankSequence q)
        : std::invalid_argument("rank sequence " + to_string(q) + " violates q(j) <= (j-i+1) q(i)"),
          q_(std::move(q)) {}
    const RankSequence& sequence() const { return q_; }

private:
    RankSequence q_;
};

class SearchExhausted : public std::runtime_error {
public:
    explicit SearchExhausted(RankSequence q, const std::string& why = "no decomposition within budget")
        : std::runtime_error("decomposition of " + to_string(q) + " failed: " + why), q_(std::move(q)) {}
    const RankSequence& sequence() const { return q_; }

private:
    RankSequence q_;
};

// ---------------------------------------------------------------------------
// Monotone decay and its counterexample
// ---------------------------------------------------------------------------

inline ExpPolyMatrix construct_decomposable(const DecomposableSpec& spec) {
    if (spec.n < 1 || spec.r1 < 0 || spec.r1 > spec.n)
        throw std::invalid_argument("DecomposableSpec: need 0 <= r1 <= n and n >= 1");
    if (static_cast<int>(spec.func_degrees.size()) != spec.r1)
        throw std::invalid_argument("DecomposableSpec: need one degree per rank-one term");
    for (int deg : spec.func_degrees)
        if (deg < 0) throw std::invalid_argument("DecomposableSpec: degrees must be nonnegative");
    if (spec.r1 == 0) return ExpPolyMatrix(spec.n, spec.n);

    Rng root(spec.seed);
    Matrix u, v;
    bool independent = false;
    for (int attempt = 0; attempt < 10 && !independent; ++attempt) {
        Rng rng = root.split(static_cast<std::uint64_t>(attempt));
        u = rng.gaussian(spec.n, spec.r1);
        v = rng.gaussian(spec.n, spec.r1);
        independent = numeric_rank(u) == spec.r1 && numeric_rank(v) == spec.r1;
    }
    if (!independent) throw std::runtime_error("construct_decomposable: factors not independent after 10 draws");

    Rng coeff_rng = root.split(1000);
    const int degree = *std::max_element(spec.func_degrees.begin(), spec.func_degrees.end());
    std::vector<Matrix> coeffs(static_cast<std::size_t>(degree) + 1, Matrix::Zero(spec.n, spec.n));
    for (int j = 0; j < spec.r1; ++j) {
        const Matrix outer = u.col(j) * v.col(j).transpose();
        const int deg = spec.func_degrees[static_cast<std::size_t>(j)];
        for (int p = 0; p <= deg; ++p) {
            double a = coeff_rng.normal();
            // Keep the leading coefficient away from zero so the degree is exact.
            if (p == deg) a = (a < 0 ? -1.0 : 1.0) * (1.0 + std::abs(a));
            coeffs[static_cast<std::size_t>(p)] += a * outer;
        }
    }
    return ExpPolyMatrix::polynomial(std::move(coeffs));
}

/// L_1(t) = u(t) u(t)^T with u = [1, t, ..., t^(n-1)]; its derivative ranks
/// climb 1, 2, ..., k.
inline ExpPolyMatrix construct_vandermonde_counterexample(int n, int k) {
    if (n < k) throw std::invalid_argument("vandermonde counterexample: need n >= k");
    if (n < 1) throw std::invalid_argument("vandermonde counterexample: need n >= 1");
    const ExpPolyMatrix u = monomial_vector(n);
    return multiply(u, transpose(u));
}

// ---------------------------------------------------------------------------
// ODE constructions
// ---------------------------------------------------------------------------

/// W(t) = e^t C + sum_j L1^(j)(t), the solution of W - W' = L1. The particular
/// part is accumulated from the top degree down: P_d = c_d, P_j = c_j + (j+1) P_{j+1}.
inline ExpPolyMatrix solve_first_order_ode(const ExpPolyMatrix& l1, const Matrix& c) {
    if (l1.has_exp()) throw std::invalid_argument("solve_first_order_ode: L1 must have a zero exp part");
    if (c.rows() != l1.rows() || c.cols() != l1.cols())
        throw ShapeError("solve_first_order_ode: C must match L1");
    const auto& coeffs = l1.poly_coeffs();
    std::vector<Matrix> particular(coeffs.size());
    for (std::size_t j = coeffs.size(); j-- > 0;) {
        particular[j] = coeffs[j];
        if (j + 1 < coeffs.size()) particular[j] += static_cast<double>(j + 1) * particular[j + 1];
    }
    return ExpPolyMatrix(c, std::move(particular));
}

/// W(t) = e^t C + t^k u v^T.
inline ExpPolyMatrix construct_highorder_ode(int n, int k, const Matrix& c, const Vector& u, const Vector& v) {
    if (k < 1) throw std::invalid_argument("construct_highorder_ode: k must be >= 1");
    if (c.rows() != n || c.cols() != n || u.size() != n || v.size() != n)
        throw ShapeError("construct_highorder_ode: C must be n x n and u, v length n");
    return ExpPolyMatrix::exponential(c) + ExpPolyMatrix::monomial(u * v.transpose(), k);
}

// ---------------------------------------------------------------------------
// Rank matching at t = 0
// ---------------------------------------------------------------------------

inline Matrix random_matrix_of_rank(int n, int r, std::uint64_t seed) {
    if (r < 0 || r > n) throw std::invalid_argument("random_matrix_of_rank: need 0 <= r <= n");
    if (r == 0) return Matrix::Zero(n, n);
    Rng rng(seed);
    const Matrix left = rng.gaussian(n, r);
    const Matrix right = rng.gaussian(r, n);
    return left * right;
}

// Integer-valued rank-r matrix; products of small integers stay exact under
// the integer rescalings that differentiation applies.
inline Matrix random_integer_matrix_of_rank(int n, int r, Rng& rng) {
    if (r < 0 || r > n) throw std::invalid_argument("random_integer_matrix_of_rank: need 0 <= r <= n");
    if (r == 0) return Matrix::Zero(n, n);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Matrix m = rng.integers(n, r, -3, 3) * rng.integers(r, n, -3, 3);
        if (numeric_rank(m) == r) return m;
    }
    throw std::runtime_error("random_integer_matrix_of_rank: could not hit the requested rank");
}

struct RankAtZeroConstruction {
    ExpPolyMatrix l1;
    std::vector<Matrix> targets;  // C_i, with L_i(0) = C_i and rank(C_i) = q(i)
};

/// L_1(t) = sum_j t^(j-1)/(j-1)! C_j. Each C_j is drawn as (j-1)! times an
/// integer matrix so that every stored coefficient is an exact integer.
inline RankAtZeroConstruction construct_rank_at_zero(int n, const RankSequence& q, std::uint64_t seed) {
    q.validate(n);
    Rng root(seed);
    std::vector<Matrix> coeffs;
    std::vector<Matrix> targets;
    double factorial = 1.0;
    for (int j = 1; j <= q.k(); ++j) {
        if (j > 1) factorial *= static_cast<double>(j - 1);
        Rng rng = root.split(static_cast<std::uint64_t>(j));
        Matrix p = random_integer_matrix_of_rank(n, q(j), rng);
        targets.push_back(factorial * p);
        coeffs.push_back(std::move(p));
    }
    if (coeffs.empty()) return {ExpPolyMatrix(n, n), {}};
    return {ExpPolyMatrix::polynomial(std::move(coeffs)), std::move(targets)};
}

// ---------------------------------------------------------------------------
// Generic rank matching via base blocks
// ---------------------------------------------------------------------------

inline ExpPolyMatrix base_block(const BaseBlockSpec& spec) {
    if (spec.m < 1 || spec.d < 0) throw std::invalid_argument("BaseBlockSpec: need m >= 1 and d >= 0");
    const ExpPolyMatrix u = monomial_vector(spec.m);
    return antiderivative(multiply(u, transpose(u)), spec.d);
}

/// Measured generic ranks of derivative orders 0..k-1 of base_block(spec).
inline RankSequence block_profile(const BaseBlockSpec& spec, int k, const SampleSpec& samples = SampleSpec::defaults()) {
    return RankSequence{derivative_rank_profile(base_block(spec), k, samples)};
}

struct SearchBudget {
    int max_blocks = 64;
    long long max_nodes = 2'000'000;
};

namespace detail {

struct ProfileCandidate {
    BaseBlockSpec block;
    std::vector<int> profile;
};

class DecompositionSearch {
public:
    DecompositionSearch(std::vector<ProfileCandidate> candidates, SearchBudget budget)
        : candidates_(std::move(candidates)), budget_(budget) {}

    bool run(std::vector<int> remaining, std::vector<BaseBlockSpec>& chosen) {
        return dfs(remaining, 0, chosen);
    }
    bool exhausted_nodes() const { return nodes_ > budget_.max_nodes; }

private:
    bool dfs(std::vector<int>& remaining, std::size_t start, std::vector<BaseBlockSpec>& chosen) {
        if (std::all_of(remaining.begin(), remaining.end(), [](int v) { return v == 0; })) return true;
        if (static_cast<int>(chosen.size()) >= budget_.max_blocks) return false;
        if (++nodes_ > budget_.max_nodes) return false;
        auto key = std::make_pair(remaining, start);
        if (failed_.count(key)) return false;
        for (std::size_t c = start; c < candidates_.size(); ++c) {
            const auto& prof = candidates_[c].profile;
            bool fits = true;
            for (std::size_t i = 0; i < remaining.size(); ++i)
                if (prof[i] > remaining[i]) { fits = false; break; }
            if (!fits) continue;
            for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] -= prof[i];
            chosen.push_back(candidates_[c].block);
            if (dfs(remaining, c, chosen)) return true;
            chosen.pop_back();
            for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] += prof[i];
            if (nodes_ > budget_.max_nodes) return false;
        }
        failed_.insert(std::move(key));
        return false;
    }

    std::vector<ProfileCandidate> candidates_;
    SearchBudget budget_;
    long long nodes_ = 0;
    std::set<std::pair<std::vector<int>, std::size_t>> failed_;
};

}  // namespace detail

/// Splits q into a sum of measured base-block profiles. Candidates are all
/// (m, d) with m <= k+1 and d <= k; the depth-first search tries profiles in
/// descending order of total rank and backtracks. Deterministic.
inline std::vector<BaseBlockSpec> decompose_rank_sequence(const RankSequence& q, const SearchBudget& budget = {},
                                                          const SampleSpec& samples = SampleSpec::defaults()) {
    for (int v : q.values)
        if (v < 0) throw std::invalid_argument("decompose_rank_sequence: negative rank");
    if (!q.satisfies_leibniz()) throw LeibnizViolation(q);
    const int k = q.k();
    if (std::all_of(q.values.begin(), q.values.end(), [](int v) { return v == 0; })) return {};

    std::vector<detail::ProfileCandidate> candidates;
    std::set<std::vector<int>> seen;
    for (int m = 1; m <= k + 1; ++m) {
        for (int d = 0; d <= k; ++d) {
            BaseBlockSpec block{m, d};
            std::vector<int> profile = block_profile(block, k, samples).values;
            if (!seen.insert(profile).second) continue;  // keep the smallest block for each profile
            candidates.push_back({block, std::move(profile)});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        const int sa = std::accumulate(a.profile.begin(), a.profile.end(), 0);
        const int sb = std::accumulate(b.profile.begin(), b.profile.end(), 0);
        if (sa != sb) return sa > sb;
        return a.profile > b.profile;
    });

    detail::DecompositionSearch search(std::move(candidates), budget);
    std::vector<BaseBlockSpec> chosen;
    if (search.run(q.values, chosen)) return chosen;
    throw SearchExhausted(q, search.exhausted_nodes() ? "node budget exhausted" : "exhaustive search found no decomposition");
}

struct GenericMatchConstruction {
    std::vector<BaseBlockSpec> blocks;
    ExpPolyMatrix l1;
};

inline ExpPolyMatrix assemble_blocks(const std::vector<BaseBlockSpec>& blocks) {
    if (blocks.empty()) return ExpPolyMatrix(1, 1);
    ExpPolyMatrix out = base_block(blocks.front());
    for (std::size_t s = 1; s < blocks.size(); ++s) out = block_diagonal(out, base_block(blocks[s]));
    return out;
}

/// Block-diagonal L_1 whose derivative ranks equal q. An all-zero q yields the
/// 1 x 1 zero function.
inline GenericMatchConstruction construct_generic_rank_matching(const RankSequence& q, const SearchBudget& budget = {},
                                                                const SampleSpec& samples = SampleSpec::defaults()) {
    auto blocks = decompose_rank_sequence(q, budget, samples);
    ExpPolyMatrix l1 = assemble_blocks(blocks);
    return {std::move(blocks), std::move(l1)};
}

// ---------------------------------------------------------------------------
// Rank ordering
// ---------------------------------------------------------------------------

/// Weights w_1 = 2k-1, w_{m+1} = w_m - 1 on GT and w_m otherwise (GE is
/// treated as EQ); q(pi(x)) = w_x.
inline RankSequence ordering_targets(const OrderingSpec& spec) {
    spec.validate();
    std::vector<int> weights(static_cast<std::size_t>(spec.k));
    weights[0] = 2 * spec.k - 1;
    for (int m = 1; m < spec.k; ++m) {
        const Relation r = spec.relations[static_cast<std::size_t>(m - 1)];
        weights[static_cast<std::size_t>(m)] = weights[static_cast<std::size_t>(m - 1)] - (r == Relation::GT ? 1 : 0);
    }
    RankSequence q{std::vector<int>(static_cast<std::size_t>(spec.k))};
    for (int x = 1; x <= spec.k; ++x)
        q.values[static_cast<std::size_t>(spec.permutation[static_cast<std::size_t>(x - 1)] - 1)] =
            weights[static_cast<std::size_t>(x - 1)];
    return q;
}

/// Whether rank(L_pi(1)) R_1 rank(L_pi(2)) ... holds for measured ranks.
inline bool ordering_satisfied(const OrderingSpec& spec, const RankSequence& ranks) {
    for (int m = 1; m < spec.k; ++m) {
        const int a = ranks(spec.permutation[static_cast<std::size_t>(m - 1)]);
        const int b = ranks(spec.permutation[static_cast<std::size_t>(m)]);
        switch (spec.relations[static_cast<std::size_t>(m - 1)]) {
            case Relation::GT: if (!(a > b)) return false; break;
            case Relation::EQ: if (!(a == b)) return false; break;
            case Relation::GE: if (!(a >= b)) return false; break;
        }
    }
    return true;
}

struct OrderingConstruction {
    RankSequence targets;
    std::vector<BaseBlockSpec> blocks;
    ExpPolyMatrix l1;
};

inline OrderingConstruction construct_rank_ordering(const OrderingSpec& spec, const SearchBudget& budget = {},
                                                    const SampleSpec& samples = SampleSpec::defaults()) {
    RankSequence q = ordering_targets(spec);
    try {
        auto match = construct_generic_rank_matching(q, budget, samples);
        return {std::move(q), std::move(match.blocks), std::move(match.l1)};
    } catch (const SearchExhausted& e) {
        throw SearchExhausted(q, e.what());
    }
}

// ---------------------------------------------------------------------------
// Bounds and the negative example
// ---------------------------------------------------------------------------

struct LeibnizReport {
    std::vector<bool> step_ok;    // r_i <= 2 r_{i-1}; index 0 trivially true
    std::vector<bool> linear_ok;  // r_i <= i r_1
    bool passed() const {
        return std::all_of(step_ok.begin(), step_ok.end(), [](bool b) { return b; }) &&
               std::all_of(linear_ok.begin(), linear_ok.end(), [](bool b) { return b; });
    }
    // First one-based index that fails either bound, 0 when none does.
    int first_failure() const {
        for (std::size_t i = 0; i < step_ok.size(); ++i)
            if (!step_ok[i] || !linear_ok[i]) return static_cast<int>(i) + 1;
        return 0;
    }
};

inline LeibnizReport check_leibniz_bounds(const RankSequence& ranks) {
    LeibnizReport report;
    for (int i = 1; i <= ranks.k(); ++i) {
        report.step_ok.push_back(i == 1 || ranks(i) <= 2 * ranks(i - 1));
        report.linear_ok.push_back(ranks(i) <= i * ranks(1));
    }
    return report;
}

struct NegativeExampleReport {
    int trials = 0;
    int max_rank = 0;
    int violations = 0;
    std::vector<int> ranks;  // generic rank of L_3 per trial
};

/// L_1 = u v^T with the witness u = v = [1, t, t^2, t^3]; rank(L_3) attains 3.
inline ExpPolyMatrix negative_example_witness() {
    const ExpPolyMatrix u = monomial_vector(4);
    return multiply(u, transpose(u));
}

inline ExpPolyMatrix random_rank_one_polynomial(int n, int max_degree, Rng& rng) {
    auto random_vector = [&](int degree) {
        std::vector<Matrix> coeffs;
        for (int p = 0; p <= degree; ++p) coeffs.push_back(rng.gaussian(n, 1));
        return ExpPolyMatrix::polynomial(std::move(coeffs));
    };
    const int du = static_cast<int>(rng.integer(0, max_degree));
    const int dv = static_cast<int>(rng.integer(0, max_degree));
    const ExpPolyMatrix u = random_vector(du);
    const ExpPolyMatrix v = random_vector(dv);
    return multiply(u, transpose(v));
}

inline NegativeExampleReport verify_negative_example(int trials, std::uint64_t seed,
                                                     const SampleSpec& samples = SampleSpec::defaults()) {
    if (trials < 1) throw std::invalid_argument("verify_negative_example: trials must be >= 1");
    NegativeExampleReport report;
    report.trials = trials;
    Rng root(seed);
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng = root.split(static_cast<std::uint64_t>(trial));
        const int n = static_cast<int>(rng.integer(4, 7));
        const ExpPolyMatrix l1 = random_rank_one_polynomial(n, 6, rng);
        const int rank = generic_rank(differentiate(l1, 2), samples);
        report.ranks.push_back(rank);
        report.max_rank = std::max(report.max_rank, rank);
        if (rank > 3) ++report.violations;
    }
    return report;
}

}  // namespace lowrank

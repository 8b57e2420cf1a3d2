#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "lowrank/rng.hpp"
#include "lowrank/segtree.hpp"
#include "lowrank/tensor_segtree.hpp"

namespace lowrank {

enum class IntervalMode { Full, Random, Sweep };

inline IntervalMode parse_interval_mode(const std::string& s) {
    if (s == "full") return IntervalMode::Full;
    if (s == "random") return IntervalMode::Random;
    if (s == "sweep") return IntervalMode::Sweep;
    throw std::invalid_argument("unknown interval mode '" + s + "'");
}

enum class BenchKind { Matrix, Tensor };

struct BenchGrid {
    std::vector<int> n_values{64};
    std::vector<int> k_values{8};
    std::vector<int> b_values{1, 4, 16, 64};
    std::vector<int> ranks{4};  // r_i = ranks[(i-1) % size]
    IntervalMode intervals = IntervalMode::Full;
    int random_intervals = 2;  // per (n, k) when intervals == Random
    int trials = 3;
    std::uint64_t seed = 1;
    BenchKind kind = BenchKind::Matrix;
    bool timing = true;  // false zeroes wall-time columns for byte-stable output

    void validate() const {
        auto positive = [](const std::vector<int>& v, const char* name) {
            if (v.empty()) throw std::invalid_argument(std::string("bench grid: empty ") + name);
            for (int x : v)
                if (x < 1) throw std::invalid_argument(std::string("bench grid: nonpositive ") + name);
        };
        positive(n_values, "n");
        positive(k_values, "k");
        positive(b_values, "b");
        positive(ranks, "rank");
        if (trials < 1) throw std::invalid_argument("bench grid: trials must be >= 1");
        if (random_intervals < 1) throw std::invalid_argument("bench grid: random interval count must be >= 1");
    }
};

struct BenchRow {
    BenchKind kind = BenchKind::Matrix;
    int n = 0, k = 0, b = 0;
    Interval interval;
    std::vector<int> ranks;  // ranks of the queried indices
    QueryStrategy strategy_run = QueryStrategy::Auto;
    QueryStrategy strategy_chosen = QueryStrategy::OnTheFly;
    std::uint64_t flops_tree = 0;
    std::uint64_t flops_otf = 0;
    std::uint64_t flops_measured = 0;
    std::int64_t wall_time_ns = 0;  // median over trials
    std::vector<std::int64_t> wall_times_ns;
    double max_rel_err = 0.0;
    bool crossover = false;  // auto row where the choice flipped onthefly -> tree as b grew
};

class OracleMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kBenchErrorLimit = 1e-8;

namespace detail {

inline std::vector<Interval> bench_intervals(IntervalMode mode, int k, int random_count, Rng& rng) {
    std::vector<Interval> out;
    switch (mode) {
        case IntervalMode::Full: out.push_back({1, k}); break;
        case IntervalMode::Random:
            for (int i = 0; i < random_count; ++i) {
                int lo = static_cast<int>(rng.integer(1, k));
                int hi = static_cast<int>(rng.integer(1, k));
                if (lo > hi) std::swap(lo, hi);
                out.push_back({lo, hi});
            }
            break;
        case IntervalMode::Sweep:
            for (int len = 1; len < k; len *= 2) out.push_back({1, len});
            out.push_back({1, k});
            break;
    }
    return out;
}

inline std::int64_t median(std::vector<std::int64_t> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

template <class Run>
std::vector<std::int64_t> time_trials(int trials, bool timing, Run&& run) {
    std::vector<std::int64_t> times;
    for (int t = 0; t < trials; ++t) {
        const auto start = std::chrono::steady_clock::now();
        run();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(timing ? std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count() : 0);
    }
    return times;
}

}  // namespace detail

// Reference sum_{i in S} (A_i B_i) X through Eigen's own products.
inline Matrix brute_force_range_sum(const std::vector<Adapter>& adapters, Interval s, const Matrix& x) {
    Matrix out = Matrix::Zero(adapters.front().a.rows(), x.cols());
    for (int i = s.lo; i <= s.hi; ++i) {
        const auto& ad = adapters[static_cast<std::size_t>(i - 1)];
        out.noalias() += (ad.a * ad.b) * x;
    }
    return out;
}

// Reference sum_{i in S} A_i (x) B_i (x) (X^T C_i) by direct quadruple loop.
inline DenseTensor3 brute_force_tensor_range_sum(const std::vector<CpFactors>& factors, Interval s, const Matrix& x) {
    const Index n = factors.front().a.rows();
    DenseTensor3 out(n, n, x.cols());
    for (int i = s.lo; i <= s.hi; ++i) {
        const auto& f = factors[static_cast<std::size_t>(i - 1)];
        for (Index p = 0; p < n; ++p)
            for (Index q = 0; q < n; ++q)
                for (Index c = 0; c < x.cols(); ++c) {
                    double acc = 0.0;
                    for (Index l = 0; l < f.rank(); ++l) {
                        double yc = 0.0;
                        for (Index z = 0; z < n; ++z) yc += x(z, c) * f.c(z, l);
                        acc += f.a(p, l) * f.b(q, l) * yc;
                    }
                    out(p, q, c) += acc;
                }
    }
    return out;
}

inline std::vector<Adapter> random_adapters(int n, const std::vector<int>& ranks, int k, Rng& rng) {
    std::vector<Adapter> out;
    for (int i = 0; i < k; ++i) {
        const int r = ranks[static_cast<std::size_t>(i) % ranks.size()];
        Adapter ad{rng.gaussian(n, r), rng.gaussian(r, n)};
        out.push_back(std::move(ad));
    }
    return out;
}

inline std::vector<CpFactors> random_factors(int n, const std::vector<int>& ranks, int k, Rng& rng) {
    std::vector<CpFactors> out;
    for (int i = 0; i < k; ++i) {
        const int r = ranks[static_cast<std::size_t>(i) % ranks.size()];
        out.push_back({rng.gaussian(n, r), rng.gaussian(n, r), rng.gaussian(n, r)});
    }
    return out;
}

/// Runs every grid point under auto, tree and on-the-fly. Adapters and
/// intervals depend on (seed, n, k) only, so rows at the same (n, k, interval)
/// differ only in b and crossover detection is well defined. Throws
/// OracleMismatch if any row exceeds kBenchErrorLimit.
inline std::vector<BenchRow> run_bench(const BenchGrid& grid) {
    grid.validate();
    std::vector<BenchRow> rows;
    Rng root(grid.seed);
    std::uint64_t point = 0;
    for (int n : grid.n_values) {
        for (int k : grid.k_values) {
            Rng setup = root.split(point++);
            const bool tensor = grid.kind == BenchKind::Tensor;
            std::vector<Adapter> adapters;
            std::vector<CpFactors> factors;
            if (tensor) factors = random_factors(n, grid.ranks, k, setup);
            else adapters = random_adapters(n, grid.ranks, k, setup);
            Rng interval_rng = setup.split(1);
            const auto intervals = detail::bench_intervals(grid.intervals, k, grid.random_intervals, interval_rng);
            std::optional<MatrixSegTree> mtree;
            std::optional<TensorSegTree> ttree;
            if (tensor) ttree.emplace(factors);
            else mtree.emplace(adapters);

            for (const Interval& s : intervals) {
                QueryStrategy previous_choice = QueryStrategy::OnTheFly;
                bool have_previous = false;
                for (int b : grid.b_values) {
                    Rng xrng = setup.split(1000 + static_cast<std::uint64_t>(b));
                    const Matrix x = xrng.gaussian(n, b);
                    const CostEstimate cost = tensor ? ttree->cost_model(s.lo, s.hi, b) : mtree->cost_model(s.lo, s.hi, b);
                    Matrix oracle;
                    std::optional<DenseTensor3> toracle;
                    if (tensor) toracle = brute_force_tensor_range_sum(factors, s, x);
                    else oracle = brute_force_range_sum(adapters, s, x);

                    for (QueryStrategy run : {QueryStrategy::Auto, QueryStrategy::Tree, QueryStrategy::OnTheFly}) {
                        BenchRow row;
                        row.kind = grid.kind;
                        row.n = n;
                        row.k = k;
                        row.b = b;
                        row.interval = s;
                        for (int i = s.lo; i <= s.hi; ++i)
                            row.ranks.push_back(grid.ranks[static_cast<std::size_t>(i - 1) % grid.ranks.size()]);
                        row.strategy_run = run;
                        row.strategy_chosen = cost.chosen;
                        row.flops_tree = cost.tree_flops;
                        row.flops_otf = cost.onthefly_flops;
                        double err = 0.0;
                        std::uint64_t flops = 0;
                        row.wall_times_ns = detail::time_trials(grid.trials, grid.timing, [&] {
                            if (tensor) {
                                auto res = ttree->query(s.lo, s.hi, x, run);
                                err = max_relative_error(res.value, *toracle);
                                flops = res.flops;
                            } else {
                                auto res = mtree->query(s.lo, s.hi, x, run);
                                err = max_relative_error(res.value, oracle);
                                flops = res.flops;
                            }
                        });
                        row.wall_time_ns = detail::median(row.wall_times_ns);
                        row.flops_measured = flops;
                        row.max_rel_err = err;
                        if (!(err <= kBenchErrorLimit)) {
                            std::ostringstream msg;
                            msg << "oracle mismatch at n=" << n << " k=" << k << " b=" << b << " [" << s.lo << ","
                                << s.hi << "] strategy=" << to_string(run) << ": max_rel_err=" << err;
                            throw OracleMismatch(msg.str());
                        }
                        if (run == QueryStrategy::Auto) {
                            row.crossover = have_previous && previous_choice == QueryStrategy::OnTheFly &&
                                            cost.chosen == QueryStrategy::Tree;
                            previous_choice = cost.chosen;
                            have_previous = true;
                        }
                        rows.push_back(std::move(row));
                    }
                }
            }
        }
    }
    return rows;
}

inline constexpr const char* kCsvColumns =
    "kind,n,k,b,lo,hi,ranks,strategy_run,strategy_chosen,flops_tree,flops_otf,flops_measured,"
    "wall_time_ns_median,wall_time_ns_trials,max_rel_err,crossover";

/// CSV with a leading "#schema=1" line, then the column header.
inline void write_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "#schema=1\n" << kCsvColumns << "\n";
    auto join = [](const auto& values) {
        std::string s;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(values[i]);
        }
        return s;
    };
    for (const auto& r : rows) {
        char err[32];
        std::snprintf(err, sizeof err, "%.6e", r.max_rel_err);
        out << (r.kind == BenchKind::Tensor ? "tensor" : "matrix") << ',' << r.n << ',' << r.k << ',' << r.b << ','
            << r.interval.lo << ',' << r.interval.hi << ',' << join(r.ranks) << ',' << to_string(r.strategy_run) << ','
            << to_string(r.strategy_chosen) << ',' << r.flops_tree << ',' << r.flops_otf << ',' << r.flops_measured
            << ',' << r.wall_time_ns << ',' << join(r.wall_times_ns) << ',' << err << ',' << (r.crossover ? 1 : 0)
            << '\n';
    }
}

}  // namespace lowrank

#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "lowrank/rank_dynamics.hpp"
#include "test_support.hpp"

namespace lowrank {
namespace {

std::vector<int> measured(const ExpPolyMatrix& l1, int k) {
    return derivative_rank_profile(l1, k, SampleSpec::defaults());
}

std::vector<int> seq(std::initializer_list<int> v) { return std::vector<int>(v); }

TEST(Decomposable, CubicSingleTerm) {
    const auto l1 = construct_decomposable({6, 1, {3}, 42});
    EXPECT_EQ(measured(l1, 5), seq({1, 1, 1, 1, 0}));
}

TEST(Decomposable, ConstantAndLinearTerms) {
    const auto l1 = construct_decomposable({6, 2, {0, 1}, 7});
    EXPECT_EQ(measured(l1, 4), seq({2, 1, 0, 0}));
}

TEST(Decomposable, RankSequenceIsNonIncreasing) {
    // Oracle: rank of L_i is the number of f_j with degree >= i - 1.
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        DecomposableSpec spec;
        spec.n = 10;
        spec.r1 = static_cast<int>(rng.integer(1, 4));
        for (int j = 0; j < spec.r1; ++j) spec.func_degrees.push_back(static_cast<int>(rng.integer(0, 5)));
        spec.seed = static_cast<std::uint64_t>(trial);
        const auto ranks = measured(construct_decomposable(spec), 7);
        EXPECT_TRUE(std::is_sorted(ranks.rbegin(), ranks.rend())) << to_string(RankSequence{ranks});
        for (int i = 1; i <= 7; ++i) {
            const int expected = static_cast<int>(std::count_if(spec.func_degrees.begin(), spec.func_degrees.end(),
                                                                [&](int d) { return d >= i - 1; }));
            EXPECT_EQ(ranks[static_cast<std::size_t>(i - 1)], expected);
        }
    }
}

TEST(Decomposable, RejectsBadSpecs) {
    EXPECT_THROW(construct_decomposable({3, 4, {0, 0, 0, 0}, 1}), std::invalid_argument);
    EXPECT_THROW(construct_decomposable({3, 2, {0}, 1}), std::invalid_argument);
}

TEST(Vandermonde, TwoByTwo) {
    const auto l1 = construct_vandermonde_counterexample(2, 2);
    EXPECT_EQ(measured(l1, 2), seq({1, 2}));
    const Matrix l2 = evaluate(differentiate(l1), 0.75);
    EXPECT_EQ(l2(0, 0), 0.0);
    EXPECT_EQ(l2(0, 1), 1.0);
    EXPECT_EQ(l2(1, 1), 1.5);
}

TEST(Vandermonde, RanksClimbForAllTestedSizes) {
    for (int k = 1; k <= 6; ++k) {
        for (int n : {k, k + 2, k + 4}) {
            std::vector<int> expected(static_cast<std::size_t>(k));
            std::iota(expected.begin(), expected.end(), 1);
            EXPECT_EQ(measured(construct_vandermonde_counterexample(n, k), k), expected) << "n=" << n << " k=" << k;
        }
    }
}

TEST(Vandermonde, ExactRankAtZero) {
    const auto chain = derivative_chain(construct_vandermonde_counterexample(8, 6), 6);
    for (int i = 1; i <= 6; ++i) {
        const Matrix at0 = evaluate(chain[static_cast<std::size_t>(i - 1)], 0.0);
        testing::IntMatrix m(8, std::vector<long long>(8));
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b) m[a][b] = static_cast<long long>(at0(a, b));
        EXPECT_EQ(testing::exact_rank(m), i);
        EXPECT_EQ(numeric_rank(at0), i);
    }
}

TEST(Vandermonde, RejectsSmallDimension) { EXPECT_THROW(construct_vandermonde_counterexample(3, 4), std::invalid_argument); }

TEST(Ode, ConstantDifference) {
    Rng rng(1);
    const Matrix c = rng.gaussian(5, 5);
    const auto l1 = ExpPolyMatrix::constant(rng.gaussian(5, 2) * rng.gaussian(2, 5));
    const auto w = solve_first_order_ode(l1, c);
    EXPECT_EQ(w, ExpPolyMatrix::exponential(c) + l1);
    EXPECT_EQ(w - differentiate(w), l1);
}

TEST(Ode, LinearDifference) {
    Rng rng(2);
    const Matrix c = rng.gaussian(4, 4);
    const Matrix uv = rng.gaussian(4, 1) * rng.gaussian(1, 4);
    const auto l1 = ExpPolyMatrix::monomial(uv, 1);
    const auto w = solve_first_order_ode(l1, c);
    EXPECT_EQ(w, ExpPolyMatrix::exponential(c) + ExpPolyMatrix::polynomial({uv, uv}));
    EXPECT_EQ(l_sequence(w, 1)[0], l1);
}

TEST(Ode, ZeroDifference) {
    const Matrix c = Matrix::Identity(3, 3);
    const auto w = solve_first_order_ode(ExpPolyMatrix(3, 3), c);
    EXPECT_EQ(w, ExpPolyMatrix::exponential(c));
    for (const auto& li : l_sequence(w, 3)) EXPECT_TRUE(li.is_zero());
}

TEST(Ode, ExactForIntegerPolynomials) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Matrix> coeffs;
        for (int j = 0; j <= 6; ++j) coeffs.push_back(rng.integers(3, 3, -5, 5));
        const auto l1 = ExpPolyMatrix::polynomial(coeffs);
        const auto w = solve_first_order_ode(l1, rng.gaussian(3, 3));
        EXPECT_EQ(w - differentiate(w), l1);
    }
}

TEST(Ode, RandomGaussianPolynomialsToRounding) {
    Rng rng(4);
    const auto l1 = testing::random_exp_poly(3, 3, 6, false, rng);
    const auto w = solve_first_order_ode(l1, rng.gaussian(3, 3));
    const auto diff = w - differentiate(w);
    ASSERT_EQ(diff.degree(), l1.degree());
    EXPECT_TRUE(diff.exp_coeff().isZero(0.0));
    for (int j = 0; j <= l1.degree(); ++j) EXPECT_LT(max_relative_error(diff.coefficient(j), l1.coefficient(j)), 1e-12);
}

TEST(Ode, RejectsExponentialPart) {
    EXPECT_THROW(solve_first_order_ode(ExpPolyMatrix::exponential(Matrix::Identity(2, 2)), Matrix::Identity(2, 2)),
                 std::invalid_argument);
}

TEST(HighOrderOde, ClosedFormCoefficients) {
    Rng rng(5);
    const Vector u = rng.gaussian(4, 1), v = rng.gaussian(4, 1);
    const Matrix uv = u * v.transpose();
    for (int k = 1; k <= 5; ++k) {
        const auto w = construct_highorder_ode(4, k, rng.gaussian(4, 4), u, v);
        const auto ls = l_sequence(w, k);
        for (int i = 1; i <= k; ++i) {
            // (k!/(k-i+1)!) t^(k-i) (t - (k-i+1)) uv^T
            const double a = testing::factorial(k) / testing::factorial(k - i + 1);
            std::vector<Matrix> expected(static_cast<std::size_t>(k - i + 2), Matrix::Zero(4, 4));
            expected[static_cast<std::size_t>(k - i + 1)] = a * uv;
            expected[static_cast<std::size_t>(k - i)] = -a * (k - i + 1) * uv;
            const auto& li = ls[static_cast<std::size_t>(i - 1)];
            ASSERT_EQ(li.degree(), k - i + 1);
            for (int j = 0; j <= li.degree(); ++j)
                EXPECT_LT(max_relative_error(li.coefficient(j), expected[static_cast<std::size_t>(j)]), 1e-14);
            EXPECT_EQ(generic_rank(li), 1);
        }
    }
}

TEST(HighOrderOde, KEqualsThreeLastDifference) {
    const Vector u = Vector::Ones(3), v = Vector::Unit(3, 1);
    const auto ls = l_sequence(construct_highorder_ode(3, 3, Matrix::Identity(3, 3), u, v), 3);
    EXPECT_EQ(ls[2], ExpPolyMatrix::polynomial({-6.0 * u * v.transpose(), 6.0 * u * v.transpose()}));
}

TEST(HighOrderOde, ZeroVectorGivesZeroRank) {
    const auto ls = l_sequence(construct_highorder_ode(3, 2, Matrix::Identity(3, 3), Vector::Zero(3), Vector::Ones(3)), 2);
    for (const auto& li : ls) EXPECT_EQ(generic_rank(li), 0);
}

TEST(RandomMatrixOfRank, HitsRequestedRank) {
    EXPECT_TRUE(random_matrix_of_rank(5, 0, 1).isZero(0.0));
    EXPECT_EQ(numeric_rank(random_matrix_of_rank(6, 6, 2)), 6);
    EXPECT_EQ(numeric_rank(random_matrix_of_rank(8, 3, 3)), 3);
    EXPECT_THROW(random_matrix_of_rank(3, 4, 1), std::invalid_argument);
}

TEST(RankAtZero, MatchesTargetsExactly) {
    const RankSequence q{{3, 1, 2}};
    const auto c = construct_rank_at_zero(4, q, 11);
    const auto chain = derivative_chain(c.l1, 3);
    for (int i = 1; i <= 3; ++i) {
        const Matrix at0 = evaluate(chain[static_cast<std::size_t>(i - 1)], 0.0);
        EXPECT_EQ(at0, c.targets[static_cast<std::size_t>(i - 1)]);
        EXPECT_EQ(numeric_rank(at0), q(i));
    }
}

TEST(RankAtZero, AllZeroTargets) {
    EXPECT_TRUE(construct_rank_at_zero(4, RankSequence{{0, 0, 0}}, 1).l1.is_zero());
}

TEST(RankAtZero, FullRankTargets) {
    const auto c = construct_rank_at_zero(5, RankSequence{{5, 5, 5, 5}}, 8);
    const auto chain = derivative_chain(c.l1, 4);
    for (const auto& li : chain) EXPECT_EQ(numeric_rank(evaluate(li, 0.0)), 5);
}

TEST(BaseBlock, ProfilesFromExactOracle) {
    // Oracle: exact integer rank of the p-th derivative of u u^T at t = 1, 2, 3.
    auto oracle = [](int m, int p) {
        int best = 0;
        for (long long t : {1LL, 2LL, 3LL}) {
            testing::IntMatrix mat(static_cast<std::size_t>(m), std::vector<long long>(static_cast<std::size_t>(m)));
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) mat[a][b] = testing::monomial_derivative_at(a + b, p, t);
            best = std::max(best, testing::exact_rank(mat));
        }
        return best;
    };
    for (int m = 1; m <= 5; ++m) {
        const auto profile = block_profile({m, 0}, 2 * m + 1).values;
        for (int p = 0; p < 2 * m + 1; ++p) EXPECT_EQ(profile[static_cast<std::size_t>(p)], oracle(m, p)) << m << "," << p;
    }
    EXPECT_EQ(block_profile({3, 0}, 6).values, seq({1, 2, 3, 2, 1, 0}));
    EXPECT_EQ(block_profile({1, 0}, 3).values, seq({1, 0, 0}));
    EXPECT_EQ(block_profile({1, 1}, 3).values, seq({1, 1, 0}));
    EXPECT_EQ(block_profile({2, 1}, 5).values, seq({2, 1, 2, 1, 0}));
}

TEST(BaseBlock, SecondDerivativeOfTwoByTwo) {
    const Matrix d2 = evaluate(differentiate(base_block({2, 0}), 2), 0.3);
    EXPECT_EQ(d2, (Matrix(2, 2) << 0, 0, 0, 2).finished());
}

TEST(BaseBlock, AntiderivativeRoundTrip) {
    for (int m = 1; m <= 4; ++m) {
        for (int d = 0; d <= 4; ++d) {
            const auto back = differentiate(base_block({m, d}), d);
            const auto ref = base_block({m, 0});
            ASSERT_EQ(back.degree(), ref.degree());
            for (int j = 0; j <= ref.degree(); ++j) EXPECT_LT(max_relative_error(back.coefficient(j), ref.coefficient(j)), 1e-14);
        }
    }
}

TEST(BaseBlock, ProfilesAreAdditiveOverBlockDiagonal) {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const BaseBlockSpec a{static_cast<int>(rng.integer(1, 4)), static_cast<int>(rng.integer(0, 3))};
        const BaseBlockSpec b{static_cast<int>(rng.integer(1, 4)), static_cast<int>(rng.integer(0, 3))};
        const int k = 6;
        const auto pa = block_profile(a, k).values, pb = block_profile(b, k).values;
        const auto combined = measured(block_diagonal(base_block(a), base_block(b)), k);
        for (int i = 0; i < k; ++i) EXPECT_EQ(combined[static_cast<std::size_t>(i)], pa[i] + pb[i]);
    }
}

TEST(Decompose, Examples) {
    EXPECT_EQ(decompose_rank_sequence(RankSequence{{1, 2, 3}}), (std::vector<BaseBlockSpec>{{3, 0}}));
    EXPECT_EQ(decompose_rank_sequence(RankSequence{{2, 4, 6}}), (std::vector<BaseBlockSpec>{{3, 0}, {3, 0}}));
    EXPECT_TRUE(decompose_rank_sequence(RankSequence{{0, 0}}).empty());
}

TEST(Decompose, RejectsLeibnizViolation) {
    EXPECT_THROW(decompose_rank_sequence(RankSequence{{1, 3}}), LeibnizViolation);
    EXPECT_THROW(decompose_rank_sequence(RankSequence{{0, 1}}), LeibnizViolation);
}

TEST(Decompose, ReportsExhaustedSearch) {
    try {
        decompose_rank_sequence(RankSequence{{5, 7, 4, 6}});
        FAIL() << "expected SearchExhausted";
    } catch (const SearchExhausted& e) {
        EXPECT_EQ(e.sequence(), RankSequence({{5, 7, 4, 6}}));
    }
    EXPECT_THROW(decompose_rank_sequence(RankSequence{{2, 4, 6}}, SearchBudget{1, 1000}), SearchExhausted);
}

TEST(GenericMatch, MeasuredRanksMatchTarget) {
    const auto c = construct_generic_rank_matching(RankSequence{{1, 2, 3}});
    EXPECT_EQ(c.l1.rows(), 3);
    EXPECT_EQ(measured(c.l1, 3), seq({1, 2, 3}));

    const auto single = construct_generic_rank_matching(block_profile({2, 1}, 4));
    EXPECT_EQ(measured(single.l1, 4), block_profile({2, 1}, 4).values);
}

TEST(GenericMatch, SuccessfulDecompositionsMatchTarget) {
    int built = 0;
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 2 * a; ++b)
            for (int c = 0; c <= 2 * b; ++c) {
                const RankSequence q{{a, b, c}};
                if (!q.satisfies_leibniz()) continue;
                try {
                    const auto m = construct_generic_rank_matching(q);
                    ++built;
                    EXPECT_EQ(measured(m.l1, 3), q.values) << to_string(q);
                } catch (const SearchExhausted&) {
                }
            }
    EXPECT_GT(built, 20);
}

// The bounds are necessary only. rank L1 = 1 and rank L2 = 1 pin the column or
// row space, so every later order has rank <= 1; and L3 = 0 makes L1 = C t + D,
// whose rank-1 pencil forces rank C <= 1.
TEST(GenericMatch, InfeasibleTargetsWithinBoundsAreRejected) {
    for (const auto& q : {RankSequence{{1, 1, 2}}, RankSequence{{1, 2, 0}}}) {
        ASSERT_TRUE(q.satisfies_leibniz());
        EXPECT_THROW(construct_generic_rank_matching(q), SearchExhausted) << to_string(q);
    }
}

TEST(Ordering, StrictDecreasingChain) {
    const OrderingSpec spec{3, {1, 2, 3}, {Relation::GT, Relation::GT}};
    const auto c = construct_rank_ordering(spec);
    EXPECT_EQ(c.targets.values, seq({5, 4, 3}));
    EXPECT_TRUE(ordering_satisfied(spec, RankSequence{measured(c.l1, 3)}));
}

TEST(Ordering, AllEqualChain) {
    const OrderingSpec spec{3, {2, 3, 1}, {Relation::EQ, Relation::EQ}};
    EXPECT_EQ(ordering_targets(spec).values, seq({5, 5, 5}));
}

TEST(Ordering, GeIsTreatedAsEq) {
    const OrderingSpec ge{3, {3, 1, 2}, {Relation::GE, Relation::GT}};
    const OrderingSpec eq{3, {3, 1, 2}, {Relation::EQ, Relation::GT}};
    EXPECT_EQ(ordering_targets(ge), ordering_targets(eq));
}

TEST(Ordering, WeightsStayInWindowAndStrictBound) {
    for (int k = 1; k <= 6; ++k) {
        std::vector<int> pi(static_cast<std::size_t>(k));
        std::iota(pi.begin(), pi.end(), 1);
        for (int mask = 0; mask < (1 << (k - 1)); ++mask) {
            OrderingSpec spec{k, pi, {}};
            for (int m = 0; m < k - 1; ++m) spec.relations.push_back((mask >> m) & 1 ? Relation::EQ : Relation::GT);
            const auto q = ordering_targets(spec);
            EXPECT_GE(*std::min_element(q.values.begin(), q.values.end()), k);
            EXPECT_LE(*std::max_element(q.values.begin(), q.values.end()), 2 * k - 1);
            EXPECT_TRUE(q.satisfies_strict_leibniz());
        }
    }
}

TEST(Ordering, RejectsNonPermutation) {
    EXPECT_THROW(ordering_targets(OrderingSpec{3, {1, 1, 2}, {Relation::GT, Relation::GT}}), std::invalid_argument);
    EXPECT_THROW(ordering_targets(OrderingSpec{3, {1, 2, 3}, {Relation::GT}}), std::invalid_argument);
}

TEST(Leibniz, Examples) {
    EXPECT_TRUE(check_leibniz_bounds(RankSequence{{1, 2, 3, 4}}).passed());
    EXPECT_TRUE(check_leibniz_bounds(RankSequence{{3, 0, 0}}).passed());
    const auto bad = check_leibniz_bounds(RankSequence{{1, 3}});
    EXPECT_FALSE(bad.passed());
    EXPECT_EQ(bad.first_failure(), 2);
    EXPECT_FALSE(bad.step_ok[1]);
}

TEST(Leibniz, ConstructionsPassBounds) {
    EXPECT_TRUE(check_leibniz_bounds(RankSequence{measured(construct_vandermonde_counterexample(8, 6), 6)}).passed());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto l1 = construct_decomposable({8, 3, {1, 4, 2}, seed});
        EXPECT_TRUE(check_leibniz_bounds(RankSequence{measured(l1, 6)}).passed());
        const auto z = construct_rank_at_zero(6, RankSequence{{2, 6, 1, 5}}, seed);
        EXPECT_TRUE(check_leibniz_bounds(RankSequence{measured(z.l1, 4)}).passed());
    }
}

TEST(NegativeExample, RandomTrialsStayWithinThree) {
    const auto report = verify_negative_example(100, 2024);
    EXPECT_EQ(report.violations, 0);
    EXPECT_LE(report.max_rank, 3);
    EXPECT_EQ(report.ranks.size(), 100u);
}

TEST(NegativeExample, WitnessAttainsBound) {
    EXPECT_EQ(generic_rank(differentiate(negative_example_witness(), 2)), 3);
}

TEST(NegativeExample, ConstantVectorsGiveZero) {
    Rng rng(1);
    const auto l1 = ExpPolyMatrix::constant(rng.gaussian(4, 1) * rng.gaussian(1, 4));
    EXPECT_EQ(generic_rank(differentiate(l1, 2)), 0);
}

}  // namespace
}  // namespace lowrank

#include <gtest/gtest.h>

#include "knockagg/coordinator.hpp"
#include "oracles.hpp"

using namespace knockagg;

namespace {

AggregateStats stats_from(const Vector& w, const Vector& p) {
    AggregateStats s;
    s.w = w;
    s.p_values = p;
    s.chi.assign(static_cast<std::size_t>(w.size()), 0);
    s.m = 1;
    return s;
}

}  // namespace

TEST(AggregateChi, CountsPlusSigns) {
    std::vector<std::vector<int>> v{{1}, {1}, {-1}, {1}, {-1}};
    EXPECT_EQ(aggregate_chi(v), std::vector<int>{3});
    std::vector<std::vector<int>> all_plus(4, {1, -1});
    EXPECT_EQ(aggregate_chi(all_plus), (std::vector<int>{4, 0}));
    std::vector<std::vector<int>> ragged{{1, 1}, {1}};
    EXPECT_THROW(aggregate_chi(ragged), Error);
}

TEST(AggregateW, SummaryFunctions) {
    std::vector<Vector> w{Vector{{1.0}}, Vector{{4.0}}, Vector{{2.0}}};
    EXPECT_EQ(aggregate_w(w, SummarySpec::max())(0), 4.0);
    EXPECT_EQ(aggregate_w(w, SummarySpec::sum_top(2))(0), 6.0);
    EXPECT_EQ(aggregate_w(w, SummarySpec::product_top(2))(0), 8.0);
    std::vector<Vector> two{Vector{{0.5}}, Vector{{0.25}}};
    EXPECT_EQ(aggregate_w(two, SummarySpec::weighted({100, 200}))(0), 100.0);
    EXPECT_THROW(aggregate_w(two, SummarySpec::weighted()), Error);
    EXPECT_THROW(aggregate_w(two, SummarySpec::sum_top(3)), Error);
    EXPECT_THROW(aggregate_w(two, SummarySpec::sum_top(1)), Error);
}

TEST(AggregateW, EveryGammaIsMonotone) {
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> unif(0.0, 3.0);
    const std::vector<SummarySpec> gammas{SummarySpec::max(), SummarySpec::sum_top(2), SummarySpec::sum_top(4),
                                          SummarySpec::product_top(3), SummarySpec::weighted({1, 2, 0.5, 3})};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> x(4);
        for (double& v : x) v = unif(rng);
        const std::size_t i = rng() % 4;
        std::vector<double> bumped = x;
        bumped[i] += unif(rng);
        for (const auto& g : gammas) {
            EXPECT_GE(g(x), 0.0);
            EXPECT_GE(g(bumped), g(x));
        }
    }
}

TEST(BinomialPvalue, Examples) {
    EXPECT_EQ(binomial_pvalue(5, 5), 1.0 / 32);
    EXPECT_EQ(binomial_pvalue(0, 5), 1.0);
    EXPECT_EQ(binomial_pvalue(4, 5), 0.1875);
    EXPECT_THROW(binomial_pvalue(6, 5), Error);
    EXPECT_THROW(binomial_pvalue(-1, 5), Error);
}

TEST(BinomialPvalue, ExactAgainstRationalOracle) {
    for (int m = 1; m <= 40; ++m) {
        for (int chi = 0; chi <= m; ++chi) {
            EXPECT_EQ(binomial_pvalue(chi, m), std::ldexp(static_cast<double>(oracle::upper_tail_numerator(chi, m)), -m))
                << chi << "/" << m;
            if (chi > 0) EXPECT_LT(binomial_pvalue(chi, m), binomial_pvalue(chi - 1, m));
        }
    }
}

TEST(BinomialPvalue, LogSpaceBranchIsAccurate) {
    EXPECT_NEAR(binomial_pvalue(65, 65), std::ldexp(1.0, -65), 1e-12 * std::ldexp(1.0, -65));
    EXPECT_NEAR(binomial_pvalue(50, 100), 0.5397946186935895, 1e-12);
    EXPECT_NEAR(binomial_pvalue(0, 200), 1.0, 1e-12);
    // the lower tail rounds to 1 in double precision, so strictness only holds above it
    for (int chi = 1; chi <= 100; ++chi) {
        EXPECT_LE(binomial_pvalue(chi, 100), binomial_pvalue(chi - 1, 100));
        if (chi >= 30) EXPECT_LT(binomial_pvalue(chi, 100), binomial_pvalue(chi - 1, 100));
    }
}

TEST(Confidence, ExpectedValues) {
    EXPECT_EQ(Confidence::step(0.5).expected_value(), 0.5);
    EXPECT_EQ(Confidence::linear().expected_value(), 0.5);
    EXPECT_NEAR(Confidence::poly(2).expected_value(), 1.0 / 3, 1e-12);
    const Confidence sq = Confidence::custom([](double x) { return (1 - x) * (1 - x); });
    EXPECT_NEAR(sq.expected_value(), 1.0 / 3, 1e-8);
    EXPECT_NEAR(Confidence::tabulated({0, 0.5, 1}, {1, 1, 0}).expected_value(), 0.75, 1e-15);
}

TEST(Confidence, Shape) {
    for (const Confidence& c : {Confidence::step(0.3), Confidence::linear(), Confidence::poly(3)}) {
        EXPECT_EQ(c(0.0), 1.0);
        EXPECT_EQ(c(1.0), 0.0);
        for (double x = 0; x < 1; x += 0.01) EXPECT_GE(c(x), c(x + 0.01));
    }
    EXPECT_EQ(Confidence::step(0.5)(0.5), 1.0);
    EXPECT_EQ(Confidence::step(0.5)(0.5000001), 0.0);
}

TEST(Confidence, InvalidSpecs) {
    auto code = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::config;
    };
    EXPECT_EQ(code([] { Confidence::step(1.0); }), ErrorCode::invalid_confidence);
    EXPECT_EQ(code([] { Confidence::step(0.0); }), ErrorCode::invalid_confidence);
    EXPECT_EQ(code([] { Confidence::tabulated({0, 1}, {1, 1}); }), ErrorCode::invalid_confidence);
    EXPECT_EQ(code([] { Confidence::custom([](double x) { return x == 0.5 ? 1.5 : 1.0 - x; }); }), ErrorCode::invalid_confidence);
    EXPECT_EQ(code([] { Confidence::custom([](double x) { return x < 1 ? 0.5 + 0.5 * std::cos(20 * x) : 0.0; }); }),
              ErrorCode::invalid_confidence);
}

TEST(Confidence, Parse) {
    EXPECT_EQ(to_string(parse_confidence("step:0.25")), "step:0.25");
    EXPECT_EQ(to_string(parse_confidence("linear")), "linear");
    EXPECT_EQ(to_string(parse_confidence("poly:2")), "poly:2");
    EXPECT_THROW(parse_confidence("step"), Error);
    EXPECT_THROW(parse_confidence("cubic"), Error);
    EXPECT_EQ(to_string(parse_summary_spec("sum-top-r:3")), "sum-top-r:3");
    EXPECT_EQ(to_string(parse_summary_spec("weighted-sum")), "weighted-sum");
    EXPECT_THROW(parse_summary_spec("median"), Error);
}

TEST(KnockoffSelect, HandEvaluatedExample) {
    Vector w(10), p(10);
    for (int j = 0; j < 10; ++j) {
        w(j) = 10 - j;
        p(j) = j < 9 ? 0.1 : 0.9;
    }
    const SelectionResult r = knockoff_select(stats_from(w, p), 0.2, Confidence::step(0.5));
    ASSERT_TRUE(r.k_hat.has_value());
    EXPECT_EQ(*r.k_hat, 9u);
    EXPECT_EQ(r.rejection_count(), 9u);
    for (int j = 0; j < 9; ++j) EXPECT_EQ(r.omega(j), 1.0);
    EXPECT_EQ(r.omega(9), 0.0);
}

TEST(KnockoffSelect, NothingWhenAllPLarge) {
    const SelectionResult r = knockoff_select(stats_from(Vector::LinSpaced(6, 6, 1), Vector::Constant(6, 0.9)), 0.2, Confidence::step(0.5));
    EXPECT_FALSE(r.k_hat.has_value());
    EXPECT_EQ(r.rejection_count(), 0u);
}

TEST(KnockoffSelect, TiesBrokenByIndex) {
    EXPECT_EQ(order_by_w(Vector{{1, 3, 3, 0, 3}}), (std::vector<std::size_t>{1, 2, 4, 0, 3}));
}

TEST(KnockoffSelect, MatchesExhaustiveScan) {
    Rng rng = make_rng(17);
    std::uniform_real_distribution<double> unif;
    const std::vector<Confidence> omegas{Confidence::step(0.5), Confidence::linear(), Confidence::poly(2), Confidence::step(0.3)};
    for (int trial = 0; trial < 500; ++trial) {
        const int p = 1 + static_cast<int>(rng() % 12);
        const int m = 1 + static_cast<int>(rng() % 8);
        Vector w(p), pv(p);
        for (int j = 0; j < p; ++j) {
            w(j) = std::floor(unif(rng) * 5);  // frequent ties
            pv(j) = binomial_pvalue(static_cast<int>(rng() % (m + 1)), m);
        }
        const double q = 0.05 + 0.5 * unif(rng);
        for (const auto& omega : omegas) {
            const SelectionResult r = knockoff_select(stats_from(w, pv), q, omega);
            EXPECT_EQ(r.k_hat, oracle::k_hat(w, pv, q, omega));
            EXPECT_EQ(r.rho, oracle::rank_order(w));
        }
    }
}

TEST(KnockoffSelect, InvariantToPositiveRescalingOfW) {
    const Vector w = oracle::gaussian_vector(12, 1).cwiseAbs();
    Vector p(12);
    for (int j = 0; j < 12; ++j) p(j) = binomial_pvalue(j % 6, 5);
    const SelectionResult a = knockoff_select(stats_from(w, p), 0.3, Confidence::linear());
    const SelectionResult b = knockoff_select(stats_from(7.5 * w, p), 0.3, Confidence::linear());
    EXPECT_EQ(a.rho, b.rho);
    EXPECT_EQ(a.k_hat, b.k_hat);
    EXPECT_EQ(a.omega, b.omega);
}

TEST(KnockoffSelect, RejectsBadQ) {
    const AggregateStats s = stats_from(Vector::Ones(3), Vector::Ones(3));
    EXPECT_THROW(knockoff_select(s, 1.5, Confidence::linear()), Error);
    EXPECT_THROW(knockoff_select(s, 0.0, Confidence::linear()), Error);
}

TEST(Wfdp, Examples) {
    SelectionResult r;
    r.omega = Vector{{1, 1, 0}};
    EXPECT_EQ(wfdp(r, {false, true, true}), 0.5);
    r.omega = Vector::Zero(3);
    EXPECT_EQ(wfdp(r, {false, true, true}), 0.0);
    r.omega = Vector{{0.5, 0.5}};
    EXPECT_EQ(wfdp(r, {false, true}), 0.5);
}

TEST(Aggregate, FromSummaries) {
    NodeSummary a{0, 100, 2, WireMode::raw32, {1, -1}, {0.5, 1.0}};
    NodeSummary b{1, 200, 2, WireMode::raw32, {1, 1}, {0.25, 0.0}};
    std::vector<NodeSummary> both{a, b};
    const AggregateStats s = aggregate(both, SummarySpec::weighted());
    EXPECT_EQ(s.w(0), 100.0);
    EXPECT_EQ(s.w(1), 100.0);
    EXPECT_EQ(s.chi, (std::vector<int>{2, 1}));
    EXPECT_EQ(s.p_values(0), 0.25);
    EXPECT_EQ(s.p_values(1), 0.75);
    both[1].p = 3;
    both[1].chi.push_back(1);
    both[1].w.push_back(0);
    EXPECT_THROW(aggregate(both, SummarySpec::max()), Error);
}

TEST(SelectionCsv, HeaderAndRows) {
    Vector w(2), p(2);
    w << 2, 1;
    p << 0.1, 0.9;
    AggregateStats s = stats_from(w, p);
    s.chi = {3, 0};
    const SelectionResult r = knockoff_select(s, 0.5, Confidence::step(0.5));
    std::ostringstream os;
    write_selection_csv(os, s, r);
    EXPECT_EQ(os.str(), "feature_index,W,chi,P,omega,rejected\n0,2,3,0.1,0,0\n1,1,0,0.9,0,0\n");
}

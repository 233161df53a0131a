#include <gtest/gtest.h>

#include <set>

#include "knockagg/baselines.hpp"
#include "knockagg/simlab.hpp"
#include "oracles.hpp"

using namespace knockagg;

namespace {

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Bhq, Examples) {
    EXPECT_EQ(as_set(bhq(Vector{{0.01, 0.04, 0.03, 0.5}}, 0.1).rejected), (std::set<std::size_t>{0, 1, 2}));
    EXPECT_TRUE(bhq(Vector::Ones(5), 0.1).rejected.empty());
    const BhqResult one = bhq(Vector{{0.05}}, 0.05);
    EXPECT_EQ(one.rejected, std::vector<std::size_t>{0});
    EXPECT_EQ(one.threshold_index, 1u);
}

TEST(Bhq, MatchesCountingDefinition) {
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> unif;
    for (int trial = 0; trial < 1000; ++trial) {
        const int p = 1 + static_cast<int>(rng() % 12);
        Vector pv(p);
        for (int j = 0; j < p; ++j) pv(j) = trial % 3 == 0 ? std::round(unif(rng) * 10) / 40 : unif(rng) * unif(rng);
        const double q = 0.05 + 0.4 * unif(rng);
        EXPECT_EQ(as_set(bhq(pv, q).rejected), oracle::bhq(pv, q));
    }
}

TEST(Bhq, LoweringAPvalueNeverShrinksRejections) {
    Rng rng = make_rng(6);
    std::uniform_real_distribution<double> unif;
    for (int trial = 0; trial < 300; ++trial) {
        Vector pv(10);
        for (int j = 0; j < 10; ++j) pv(j) = unif(rng) * 0.3;
        const auto before = as_set(bhq(pv, 0.2).rejected);
        pv(static_cast<Eigen::Index>(rng() % 10)) *= unif(rng);
        const auto after = as_set(bhq(pv, 0.2).rejected);
        for (std::size_t j : before) EXPECT_TRUE(after.count(j));
    }
}

TEST(Ols, OrthogonalDesign) {
    NodeData d;
    d.x = oracle::orthonormal_columns(30, 5, 2);
    d.y = oracle::gaussian_vector(30, 3);
    const OlsNodeSummary s = ols_node_summary(d);
    EXPECT_LE((s.beta_hat - d.x.transpose() * d.y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((s.theta_diag - Vector::Ones(5)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, DuplicatedColumnIsSingular) {
    NodeData d;
    d.x = gen_design(30, 4, SigmaSpec::identity(), 1);
    d.x.col(3) = d.x.col(1);
    d.y = Vector::Zero(30);
    try {
        ols_node_summary(d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::singular_design);
    }
}

TEST(Ols, AggregateVarianceFormulaAndOrderInvariance) {
    OlsNodeSummary a{Vector{{1.0, -2.0}}, Vector::Ones(2)};
    std::vector<OlsNodeSummary> two{a, a};
    const OlsAggregate agg = ols_aggregate(two, 0.1);
    // Theta = 2 / 4, z = 1 / sqrt(0.5)
    EXPECT_NEAR(agg.z(0), 1.0 / std::sqrt(0.5), 1e-14);

    std::vector<OlsNodeSummary> nodes;
    for (std::uint64_t i = 0; i < 5; ++i) nodes.push_back({oracle::gaussian_vector(8, i), oracle::gaussian_vector(8, i + 9).cwiseAbs()});
    const OlsAggregate forward = ols_aggregate(nodes, 0.2);
    std::reverse(nodes.begin(), nodes.end());
    const OlsAggregate backward = ols_aggregate(nodes, 0.2);
    EXPECT_EQ(forward.z, backward.z);
    EXPECT_EQ(forward.selection.rejected, backward.selection.rejected);
}

TEST(Ols, StrongSignalAlwaysRejected) {
    const Vector beta = (Vector(10) << 20, 0, 0, 0, 0, 0, 0, 0, 0, 0).finished();
    for (std::uint64_t r = 0; r < 10; ++r) {
        std::vector<OlsNodeSummary> nodes;
        for (std::uint64_t i = 0; i < 3; ++i) {
            NodeData d;
            d.x = gen_design(40, 10, SigmaSpec::identity(), 10 * r + i);
            d.y = gen_response(d.x, beta, 100 * r + i);
            nodes.push_back(ols_node_summary(d));
        }
        const auto rej = ols_aggregate_select(nodes, 0.1).rejected;
        EXPECT_TRUE(std::find(rej.begin(), rej.end(), 0u) != rej.end());
    }
}

TEST(LassoCv, ZeroResponseGivesEmptySupport) {
    NodeData d;
    d.x = gen_design(50, 8, SigmaSpec::identity(), 1);
    d.y = Vector::Zero(50);
    EXPECT_TRUE(lasso_cv_support(d, {}, 1).empty());
}

TEST(LassoCv, NoiselessOrthogonalSignalIsFound) {
    NodeData d;
    d.x = oracle::orthonormal_columns(60, 6, 4);
    d.y = 5.0 * d.x.col(2);
    const auto support = lasso_cv_support(d, {}, 2);
    EXPECT_TRUE(std::find(support.begin(), support.end(), 2u) != support.end());
}

TEST(LassoCv, OneSeLambdaIsAtLeastMinLambda) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        NodeData d;
        d.x = gen_design(80, 10, SigmaSpec::identity(), seed);
        Vector beta = Vector::Zero(10);
        beta.head(3).setConstant(2);
        d.y = gen_response(d.x, beta, seed + 1);
        const CvPath path = lasso_cv_path(d, {}, seed);
        EXPECT_GE(path.lambdas[path.one_se_index], path.lambdas[path.min_index]);
        EXPECT_LE(path.cv_error[path.one_se_index], path.cv_error[path.min_index] + path.cv_se[path.min_index]);
    }
}

TEST(LassoCv, DeterministicFolds) {
    NodeData d;
    d.x = gen_design(60, 8, SigmaSpec::identity(), 3);
    d.y = gen_response(d.x, Vector::Constant(8, 0.3), 4);
    EXPECT_EQ(lasso_cv_path(d, {}, 9).cv_error, lasso_cv_path(d, {}, 9).cv_error);
}

TEST(MajorityVote, Examples) {
    std::vector<std::vector<std::size_t>> s{{1, 2}, {2, 3}, {2}};
    EXPECT_EQ(majority_vote(s, 3), std::vector<std::size_t>{2});
    std::vector<std::vector<std::size_t>> tie{{1}, {}};
    EXPECT_TRUE(majority_vote(tie, 2).empty());
    std::vector<std::vector<std::size_t>> none{{}, {}, {}};
    EXPECT_TRUE(majority_vote(none, 3).empty());
}

TEST(MajorityVote, BetweenIntersectionAndUnion) {
    Rng rng = make_rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + 2 * (rng() % 3);
        std::vector<std::vector<std::size_t>> s(m);
        for (auto& v : s)
            for (std::size_t j = 0; j < 8; ++j)
                if (rng() & 1) v.push_back(j);
        const auto vote = as_set(majority_vote(s, m));
        for (std::size_t j = 0; j < 8; ++j) {
            bool in_all = true, in_any = false;
            for (const auto& v : s) {
                const bool has = std::find(v.begin(), v.end(), j) != v.end();
                in_all = in_all && has;
                in_any = in_any || has;
            }
            if (in_all) EXPECT_TRUE(vote.count(j));
            if (!in_any) EXPECT_FALSE(vote.count(j));
        }
    }
}

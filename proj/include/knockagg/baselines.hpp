#pragma once

// Comparison procedures: averaged OLS z-scores with Benjamini-Hochberg, and
// per-node cross-validated Lasso supports combined by majority vote.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "knockagg/lasso.hpp"
#include "knockagg/node.hpp"
#include "knockagg/numerics.hpp"
#include "knockagg/random.hpp"

namespace knockagg {

struct BhqResult {
    std::vector<std::size_t> rejected;  // ascending feature indices
    std::size_t threshold_index = 0;    // k* (0 = nothing rejected)
};

/// Benjamini-Hochberg step-up: k* = max{k : p_(k) <= k q / p}.
inline BhqResult bhq(const Vector& pvalues, double q) {
    require(q > 0 && q < 1, ErrorCode::config, "bhq: q must lie in (0, 1)");
    const auto p = static_cast<std::size_t>(pvalues.size());
    for (Eigen::Index j = 0; j < pvalues.size(); ++j) {
        require(pvalues(j) >= 0 && pvalues(j) <= 1, ErrorCode::invalid_input, "bhq: p-values must lie in [0, 1]");
    }
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pvalues(static_cast<Eigen::Index>(a)) < pvalues(static_cast<Eigen::Index>(b));
    });
    BhqResult out;
    for (std::size_t k = p; k >= 1; --k) {
        if (pvalues(static_cast<Eigen::Index>(order[k - 1])) <= static_cast<double>(k) * q / static_cast<double>(p)) {
            out.threshold_index = k;
            break;
        }
    }
    out.rejected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(out.threshold_index));
    std::sort(out.rejected.begin(), out.rejected.end());
    return out;
}

struct OlsNodeSummary {
    Vector beta_hat;
    Vector theta_diag;  // diag((X^T X)^{-1}), unit noise variance
};

inline OlsNodeSummary ols_node_summary(const NodeData& data) {
    OlsNodeSummary out;
    out.beta_hat = least_squares(data.x, data.y);
    const Matrix gram = data.x.transpose() * data.x;
    out.theta_diag = inverse_spd(0.5 * (gram + gram.transpose())).diagonal();
    for (Eigen::Index j = 0; j < out.theta_diag.size(); ++j) {
        require(out.theta_diag(j) > 0, ErrorCode::singular_design, "ols_node_summary: non-positive marginal variance");
    }
    return out;
}

/// Sum in sorted order so the result does not depend on node order.
inline double order_free_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double acc = 0;
    for (double v : values) acc += v;
    return acc;
}

struct OlsAggregate {
    Vector z;
    Vector pvalues;
    BhqResult selection;
};

/// beta_j = mean_i beta_j^i, Theta_j = m^{-2} sum_i Theta^i_jj, z_j = beta_j / sqrt(Theta_j),
/// two-sided normal p-values, then BHq.
inline OlsAggregate ols_aggregate(std::span<const OlsNodeSummary> summaries, double q) {
    require(!summaries.empty(), ErrorCode::invalid_input, "ols_aggregate: no nodes");
    const Eigen::Index p = summaries.front().beta_hat.size();
    for (const auto& s : summaries) {
        require(s.beta_hat.size() == p && s.theta_diag.size() == p, ErrorCode::invalid_input, "ols_aggregate: p differs across nodes");
    }
    const auto m = static_cast<double>(summaries.size());
    OlsAggregate out;
    out.z.resize(p);
    out.pvalues.resize(p);
    std::vector<double> betas(summaries.size()), thetas(summaries.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < summaries.size(); ++i) {
            betas[i] = summaries[i].beta_hat(j);
            thetas[i] = summaries[i].theta_diag(j);
        }
        const double beta = order_free_sum(betas) / m;
        const double theta = order_free_sum(thetas) / (m * m);
        out.z(j) = beta / std::sqrt(theta);
        out.pvalues(j) = std::erfc(std::abs(out.z(j)) / std::sqrt(2.0));
    }
    out.selection = bhq(out.pvalues, q);
    return out;
}

inline BhqResult ols_aggregate_select(std::span<const OlsNodeSummary> summaries, double q) {
    return ols_aggregate(summaries, q).selection;
}

struct CvOptions {
    int folds = 10;
    LambdaGrid grid{100, 1e-3};
};

struct CvPath {
    std::vector<double> lambdas;
    std::vector<double> cv_error;  // mean over folds of held-out MSE
    std::vector<double> cv_se;     // SD over folds / sqrt(folds)
    std::size_t min_index = 0;
    std::size_t one_se_index = 0;
};

/// K-fold CV for the Lasso path on the full-data lambda grid. Rows are
/// shuffled by the seed and cut into contiguous folds. The training objective
/// has n_train rows, so its penalty is scaled by n_train / n.
inline CvPath lasso_cv_path(const NodeData& data, const CvOptions& options, std::uint64_t seed) {
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    require(options.folds >= 2 && options.folds <= n, ErrorCode::config, "lasso_cv: folds must lie in [2, n]");
    require(data.y.size() == n, ErrorCode::invalid_input, "lasso_cv: response length differs from row count");

    CvPath path;
    const double lambda_max = (data.x.transpose() * data.y).cwiseAbs().maxCoeff();
    const std::size_t g_count = static_cast<std::size_t>(options.grid.points);
    if (!(lambda_max > 0)) {
        path.lambdas.assign(g_count, 0.0);
        path.cv_error.assign(g_count, 0.0);
        path.cv_se.assign(g_count, 0.0);
        return path;
    }
    path.lambdas = options.grid.values(lambda_max);

    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    Rng rng = make_rng(derive_seed(seed, {stream::folds}));
    std::shuffle(rows.begin(), rows.end(), rng);

    const auto k = static_cast<std::size_t>(options.folds);
    std::vector<std::vector<double>> fold_err(g_count, std::vector<double>(k, 0.0));
    for (std::size_t f = 0; f < k; ++f) {
        const auto begin = static_cast<Eigen::Index>(f * static_cast<std::size_t>(n) / k);
        const auto end = static_cast<Eigen::Index>((f + 1) * static_cast<std::size_t>(n) / k);
        const Eigen::Index n_test = end - begin;
        const Eigen::Index n_train = n - n_test;
        Matrix x_train(n_train, p), x_test(n_test, p);
        Vector y_train(n_train), y_test(n_test);
        for (Eigen::Index r = 0, tr = 0, te = 0; r < n; ++r) {
            const Eigen::Index row = rows[static_cast<std::size_t>(r)];
            if (r >= begin && r < end) {
                x_test.row(te) = data.x.row(row);
                y_test(te++) = data.y(row);
            } else {
                x_train.row(tr) = data.x.row(row);
                y_train(tr++) = data.y(row);
            }
        }
        CovarianceLasso solver(x_train, y_train);
        const double scale = static_cast<double>(n_train) / static_cast<double>(n);
        for (std::size_t g = 0; g < g_count; ++g) {
            const Vector& beta = solver.solve(path.lambdas[g] * scale);
            fold_err[g][f] = (y_test - x_test * beta).squaredNorm() / static_cast<double>(n_test);
        }
    }

    path.cv_error.resize(g_count);
    path.cv_se.resize(g_count);
    for (std::size_t g = 0; g < g_count; ++g) {
        const double mean = std::accumulate(fold_err[g].begin(), fold_err[g].end(), 0.0) / static_cast<double>(k);
        double ss = 0;
        for (double e : fold_err[g]) ss += (e - mean) * (e - mean);
        path.cv_error[g] = mean;
        path.cv_se[g] = std::sqrt(ss / static_cast<double>(k - 1)) / std::sqrt(static_cast<double>(k));
    }
    path.min_index = static_cast<std::size_t>(std::min_element(path.cv_error.begin(), path.cv_error.end()) - path.cv_error.begin());
    const double cutoff = path.cv_error[path.min_index] + path.cv_se[path.min_index];
    // grid is decreasing, so the first index under the cutoff is the largest lambda
    for (std::size_t g = 0; g <= path.min_index; ++g) {
        if (path.cv_error[g] <= cutoff) {
            path.one_se_index = g;
            break;
        }
    }
    return path;
}

/// Support of the full-data Lasso at the one-standard-error lambda.
inline std::vector<std::size_t> lasso_cv_support(const NodeData& data, const CvOptions& options, std::uint64_t seed) {
    const CvPath path = lasso_cv_path(data, options, seed);
    std::vector<std::size_t> support;
    if (path.lambdas.empty() || !(path.lambdas.front() > 0)) return support;
    const Vector beta = lasso_solve(data.x, data.y, path.lambdas[path.one_se_index]);
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta(j) != 0) support.push_back(static_cast<std::size_t>(j));
    }
    return support;
}

/// Features appearing in strictly more than m/2 of the supports.
inline std::vector<std::size_t> majority_vote(std::span<const std::vector<std::size_t>> supports, std::size_t m) {
    require(m >= 1, ErrorCode::invalid_input, "majority_vote: m must be >= 1");
    std::vector<std::size_t> counts;
    for (const auto& s : supports) {
        for (std::size_t j : s) {
            if (j >= counts.size()) counts.resize(j + 1, 0);
            ++counts[j];
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (2 * counts[j] > m) out.push_back(j);
    }
    return out;
}

}  // namespace knockagg

#pragma once

// Coordinate-descent Lasso for  1/2 ||y - A b||^2 + lambda ||b||_1  and the
// entry times Z_j = sup{lambda : b_j(lambda) != 0} read off a geometric grid.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "knockagg/numerics.hpp"

namespace knockagg {

struct LassoOptions {
    long max_sweeps = 100000;
    double tolerance = 1e-8;  // max coefficient change over a full sweep
};

/// Geometric grid from lambda_max down to lambda_max * min_ratio.
struct LambdaGrid {
    int points = 200;
    double min_ratio = 1e-3;

    std::vector<double> values(double lambda_max) const {
        require(points >= 2, ErrorCode::config, "lambda grid needs at least 2 points");
        require(min_ratio > 0 && min_ratio < 1, ErrorCode::config, "lambda grid min_ratio must lie in (0, 1)");
        std::vector<double> out(static_cast<std::size_t>(points));
        for (int g = 0; g < points; ++g) {
            out[static_cast<std::size_t>(g)] = lambda_max * std::pow(min_ratio, static_cast<double>(g) / (points - 1));
        }
        return out;
    }
};

inline double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

/// Warm-startable solver working on the Gram matrix A^T A and A^T y. Columns
/// need not be normalized; a zero column keeps a zero coefficient.
class CovarianceLasso {
public:
    CovarianceLasso(const Matrix& a, const Vector& y, LassoOptions options = {})
        : gram_(a.transpose() * a), corr_(a.transpose() * y), options_(options) {
        require(a.rows() == y.size(), ErrorCode::invalid_input, "lasso: row count differs from response length");
        require(all_finite(a) && y.allFinite(), ErrorCode::invalid_input, "lasso: non-finite input");
        reset();
    }

    /// From a precomputed Gram matrix A^T A and correlation A^T y.
    static CovarianceLasso from_gram(Matrix gram, Vector corr, LassoOptions options = {}) {
        require(gram.rows() == gram.cols() && gram.rows() == corr.size(), ErrorCode::invalid_input, "lasso: Gram shape mismatch");
        return CovarianceLasso(std::move(gram), std::move(corr), options, 0);
    }

    void reset() {
        beta_ = Vector::Zero(corr_.size());
        grad_ = corr_;
        active_.assign(static_cast<std::size_t>(corr_.size()), false);
    }

    double lambda_max() const { return corr_.size() == 0 ? 0.0 : corr_.cwiseAbs().maxCoeff(); }

    const Vector& coefficients() const { return beta_; }

    /// Solve at `lambda` starting from the current coefficients.
    const Vector& solve(double lambda) {
        require(lambda >= 0 && std::isfinite(lambda), ErrorCode::invalid_input, "lasso: lambda must be finite and >= 0");
        long sweeps = 0;
        while (true) {
            // full pass; grows the active set
            const double change = sweep(lambda, false);
            ++sweeps;
            if (change < options_.tolerance) return beta_;
            long inner_sweeps = 0;
            while (true) {
                const double inner = sweep(lambda, true);
                ++sweeps;
                if (inner < options_.tolerance) break;
                // slow linear convergence: try the exact solution on the current active set
                if (++inner_sweeps % newton_interval == 0 && newton_step(lambda)) break;
                check_budget(sweeps);
            }
            check_budget(sweeps);
        }
    }

private:
    CovarianceLasso(Matrix gram, Vector corr, LassoOptions options, int)
        : gram_(std::move(gram)), corr_(std::move(corr)), options_(options) {
        reset();
    }

    static constexpr long newton_interval = 8;

    /// Solves G_AA b_A = c_A - lambda sgn(b_A) on the nonzero set and moves
    /// toward b_A. On a fixed sign pattern the objective is a convex quadratic
    /// minimized at b_A, so stopping at the first sign crossing still descends;
    /// the crossing coordinate is set to zero. Returns true for a full step.
    /// The caller's full sweep re-checks the KKT conditions.
    bool newton_step(double lambda) {
        std::vector<Eigen::Index> set;
        for (Eigen::Index j = 0; j < beta_.size(); ++j) {
            if (beta_(j) != 0) set.push_back(j);
        }
        if (set.empty()) return false;
        const auto a = static_cast<Eigen::Index>(set.size());
        Matrix g(a, a);
        Vector rhs(a);
        for (Eigen::Index r = 0; r < a; ++r) {
            const Eigen::Index jr = set[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < a; ++c) g(r, c) = gram_(jr, set[static_cast<std::size_t>(c)]);
            rhs(r) = corr_(jr) - lambda * (beta_(jr) > 0 ? 1.0 : -1.0);
        }
        Eigen::LLT<Matrix> llt(g);
        if (llt.info() != Eigen::Success) return false;
        const Vector solution = llt.solve(rhs);
        if (!solution.allFinite()) return false;
        double t = 1.0;
        Eigen::Index crossing = -1;
        for (Eigen::Index r = 0; r < a; ++r) {
            const double old = beta_(set[static_cast<std::size_t>(r)]);
            if (solution(r) * old <= 0) {
                const double hit = old / (old - solution(r));
                if (hit < t) {
                    t = hit;
                    crossing = r;
                }
            }
        }
        for (Eigen::Index r = 0; r < a; ++r) {
            double& b = beta_(set[static_cast<std::size_t>(r)]);
            b = r == crossing ? 0.0 : b + t * (solution(r) - b);
        }
        grad_ = corr_ - gram_ * beta_;
        return crossing < 0;
    }

    void check_budget(long sweeps) const {
        if (sweeps >= options_.max_sweeps) {
            fail(ErrorCode::convergence, "lasso: no convergence after " + std::to_string(sweeps) + " sweeps");
        }
    }

    double sweep(double lambda, bool active_only) {
        double max_change = 0;
        const Eigen::Index q = corr_.size();
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            if (active_only && !active_[ju]) continue;
            const double diag = gram_(j, j);
            if (!(diag > 0)) continue;
            const double old = beta_(j);
            const double updated = soft_threshold(grad_(j) + diag * old, lambda) / diag;
            const double delta = updated - old;
            if (delta != 0) {
                beta_(j) = updated;
                grad_.noalias() -= delta * gram_.col(j);
                max_change = std::max(max_change, std::abs(delta));
                active_[ju] = true;
            }
        }
        return max_change;
    }

    Matrix gram_;
    Vector corr_;
    LassoOptions options_;
    Vector beta_;
    Vector grad_;  // A^T (y - A beta)
    std::vector<bool> active_;
};

inline Vector lasso_solve(const Matrix& a, const Vector& y, double lambda, LassoOptions options = {}) {
    CovarianceLasso solver(a, y, options);
    return solver.solve(lambda);
}

/// Entry times of the original (first p) and knockoff (last p) coordinates.
struct PilotStats {
    Vector z;
    Vector z_tilde;
};

/// Entry time of every coordinate of A: the largest grid value at which its
/// coefficient is nonzero, 0 when it never enters.
inline Vector entry_times_all(const Matrix& a, const Vector& y, const LambdaGrid& grid = {}, LassoOptions options = {}) {
    CovarianceLasso solver(a, y, options);
    const Eigen::Index q = a.cols();
    Vector entry = Vector::Zero(q);
    const double lambda_max = solver.lambda_max();
    if (!(lambda_max > 0)) return entry;

    Eigen::Index remaining = q;
    std::vector<bool> entered(static_cast<std::size_t>(q), false);
    for (double lambda : grid.values(lambda_max)) {
        const Vector& beta = solver.solve(lambda);
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            if (!entered[ju] && beta(j) != 0) {
                entered[ju] = true;
                entry(j) = lambda;
                --remaining;
            }
        }
        if (remaining == 0) break;
    }
    return entry;
}

inline PilotStats entry_times(const Matrix& a, const Vector& y, const LambdaGrid& grid = {}, LassoOptions options = {}) {
    require(a.cols() % 2 == 0 && a.cols() >= 2, ErrorCode::invalid_input, "entry_times: augmented design needs 2p columns");
    const Eigen::Index p = a.cols() / 2;
    const Vector all = entry_times_all(a, y, grid, options);
    return PilotStats{all.head(p), all.tail(p)};
}

}  // namespace knockagg

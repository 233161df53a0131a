#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "knockagg/numerics.hpp"
#include "knockagg/random.hpp"

namespace knockagg {

/// Knockoff matrix together with the vector s of the Gram constraints
///   Xk^T Xk = X^T X,   X^T Xk = X^T X - diag(s).
struct KnockoffDesign {
    Matrix x_tilde;
    Vector s;
};

struct KnockoffReport {
    double gram_residual = 0;   // max |Xk^T Xk - X^T X|
    double cross_residual = 0;  // max |X^T Xk - (X^T X - diag(s))|
    bool passed = false;
};

inline constexpr double unit_norm_tolerance = 1e-10;

inline Matrix normalize_columns(const Matrix& x) {
    require(all_finite(x), ErrorCode::invalid_input, "normalize_columns: non-finite entry");
    Matrix out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double norm = x.col(j).norm();
        if (!(norm > 0)) fail(ErrorCode::degenerate_feature, "normalize_columns: column " + std::to_string(j) + " is zero");
        out.col(j) /= norm;
    }
    return out;
}

inline bool has_unit_columns(const Matrix& x, double tolerance = unit_norm_tolerance) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (std::abs(x.col(j).norm() - 1.0) > tolerance) return false;
    }
    return true;
}

inline KnockoffReport validate_knockoffs(const Matrix& x, const Matrix& x_tilde, const Vector& s, double tolerance) {
    require(x.rows() == x_tilde.rows() && x.cols() == x_tilde.cols() && s.size() == x.cols(),
            ErrorCode::invalid_input, "validate_knockoffs: shape mismatch");
    const Matrix gram = x.transpose() * x;
    KnockoffReport report;
    report.gram_residual = max_abs(x_tilde.transpose() * x_tilde - gram);
    Matrix target = gram;
    target.diagonal() -= s;
    report.cross_residual = max_abs(x.transpose() * x_tilde - target);
    report.passed = report.gram_residual <= tolerance && report.cross_residual <= tolerance;
    return report;
}

/// Equicorrelated fixed-design knockoffs for n >= 2p:
///   s_j = min(2 lambda_min(Sigma), 1),
///   Xk  = X (I - Sigma^{-1} diag(s)) + U C,   C^T C = 2 diag(s) - diag(s) Sigma^{-1} diag(s),
/// with U an orthonormal complement of X. The seed picks a random rotation of U.
inline KnockoffDesign construct_knockoffs(const Matrix& x, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    require(p >= 1, ErrorCode::invalid_input, "construct_knockoffs: empty design");
    require(n >= 2 * p, ErrorCode::insufficient_rows,
            "construct_knockoffs: knockoffs need n >= 2p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");

    Matrix sigma = x.transpose() * x;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    const double lambda_min = min_eigenvalue(sigma);
    require(lambda_min > tol::rank, ErrorCode::singular_design, "construct_knockoffs: X^T X is singular");

    const double s_value = std::min(2.0 * lambda_min, 1.0);
    const Vector s = Vector::Constant(p, s_value);
    const Matrix sigma_inv = inverse_spd(sigma);

    // diag(s) Sigma^{-1} diag(s) with constant s is s^2 Sigma^{-1}
    Matrix inner = -s_value * s_value * sigma_inv;
    inner.diagonal().array() += 2.0 * s_value;
    inner = 0.5 * (inner + inner.transpose()).eval();
    const Matrix c = factor_psd(inner);

    Rng rng = make_rng(seed);
    const Matrix u = orthonormal_complement(x) * random_orthogonal(p, p, rng);

    Matrix shrink = -s_value * sigma_inv;
    shrink.diagonal().array() += 1.0;
    return KnockoffDesign{x * shrink + u * c, s};
}

}  // namespace knockagg

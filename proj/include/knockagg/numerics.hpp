#pragma once

// Dense linear algebra used by knockoff construction and the estimators.
// Thin wrappers over Eigen that pin the tolerances and error behaviour.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "knockagg/error.hpp"

namespace knockagg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace tol {
inline constexpr double symmetry = 1e-10;
inline constexpr double rank = 1e-10;     // relative pivot floor
inline constexpr double psd_floor = 1e-8; // most negative eigenvalue accepted by factor_psd
}  // namespace tol

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_symmetric(const Matrix& s, const char* what) {
    require(s.rows() == s.cols() && s.rows() > 0, ErrorCode::invalid_input,
            std::string(what) + ": matrix must be square and non-empty");
    require(all_finite(s), ErrorCode::invalid_input, std::string(what) + ": non-finite entry");
    const double asym = max_abs(s - s.transpose());
    require(asym <= tol::symmetry * std::max(1.0, max_abs(s)), ErrorCode::invalid_input,
            std::string(what) + ": matrix is not symmetric");
}

/// Least-squares solution of X b ~ y through column-pivoted Householder QR.
/// Throws singular_design when a pivot falls below 1e-10 of the largest one.
inline Vector least_squares(const Matrix& x, const Vector& y) {
    require(x.rows() >= 1 && x.cols() >= 1, ErrorCode::invalid_input, "least_squares: empty design");
    require(x.rows() == y.size(), ErrorCode::invalid_input, "least_squares: row count differs from response length");
    require(x.rows() >= x.cols(), ErrorCode::singular_design, "least_squares: fewer rows than columns");
    require(all_finite(x) && y.allFinite(), ErrorCode::invalid_input, "least_squares: non-finite input");

    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    const auto& r = qr.matrixR();
    const double largest = std::abs(r(0, 0));
    const Eigen::Index q = x.cols();
    for (Eigen::Index k = 0; k < q; ++k) {
        if (!(std::abs(r(k, k)) > tol::rank * largest)) {
            fail(ErrorCode::singular_design, "least_squares: design is rank deficient");
        }
    }
    return qr.solve(y);
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Matrix& s) {
    require_symmetric(s, "min_eigenvalue");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// n x p matrix U with orthonormal columns spanning a subspace orthogonal to
/// range(X). Needs n >= 2p so that such a subspace exists.
inline Matrix orthonormal_complement(const Matrix& x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    require(p >= 1, ErrorCode::invalid_input, "orthonormal_complement: empty design");
    require(n >= 2 * p, ErrorCode::insufficient_rows,
            "orthonormal_complement: need n >= 2p rows (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
    require(all_finite(x), ErrorCode::invalid_input, "orthonormal_complement: non-finite input");

    Eigen::HouseholderQR<Matrix> qr(x);
    const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const double largest = r.diagonal().cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < p; ++k) {
        require(std::abs(r(k, k)) > tol::rank * largest, ErrorCode::singular_design,
                "orthonormal_complement: design is rank deficient");
    }
    Matrix q = qr.householderQ() * Matrix::Identity(n, 2 * p);
    return q.rightCols(p);
}

/// Returns C with C^T C = S. Eigenvalues in [-1e-8, 0) are clipped to zero.
inline Matrix factor_psd(const Matrix& s) {
    require_symmetric(s, "factor_psd");
    const Matrix sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    Vector values = eig.eigenvalues();
    if (values.minCoeff() < -tol::psd_floor) {
        fail(ErrorCode::not_psd, "factor_psd: eigenvalue " + std::to_string(values.minCoeff()) + " below -1e-8");
    }
    values = values.cwiseMax(0.0);
    return values.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

/// Inverse of a symmetric positive-definite matrix.
inline Matrix inverse_spd(const Matrix& s) {
    Eigen::LLT<Matrix> llt(s);
    require(llt.info() == Eigen::Success, ErrorCode::singular_design, "inverse_spd: matrix is not positive definite");
    return llt.solve(Matrix::Identity(s.rows(), s.cols()));
}

/// Haar-distributed orthogonal matrix from the QR of a Gaussian matrix.
template <class Rng>
Matrix random_orthogonal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal;
    Matrix g(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    const auto& packed = qr.matrixQR();
    for (Eigen::Index k = 0; k < cols; ++k) {
        if (packed(k, k) < 0) q.col(k) = -q.col(k);
    }
    return q;
}

}  // namespace knockagg

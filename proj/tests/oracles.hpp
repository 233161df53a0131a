#pragma once

// Independent reference implementations used by the tests. Each one follows a
// definition literally and avoids the shortcuts of the production code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "knockagg/knockagg.hpp"

namespace oracle {

using knockagg::Matrix;
using knockagg::Vector;

/// C(m, i) from Pascal's triangle in exact integers (m <= 62).
inline std::uint64_t choose(int m, int i) {
    std::vector<std::vector<std::uint64_t>> t(static_cast<std::size_t>(m + 1));
    for (int a = 0; a <= m; ++a) {
        t[a].assign(static_cast<std::size_t>(a + 1), 1);
        for (int b = 1; b < a; ++b) t[a][b] = t[a - 1][b - 1] + t[a - 1][b];
    }
    return t[m][i];
}

/// Numerator of the binomial upper tail over the denominator 2^m.
inline std::uint64_t upper_tail_numerator(int chi, int m) {
    std::uint64_t num = 0;
    for (int i = chi; i <= m; ++i) num += choose(m, i);
    return num;
}

/// Feature order by (-W, index), from a lexicographic sort of pairs.
inline std::vector<std::size_t> rank_order(const Vector& w) {
    std::vector<std::pair<double, std::size_t>> keyed;
    for (Eigen::Index j = 0; j < w.size(); ++j) keyed.emplace_back(-w(j), static_cast<std::size_t>(j));
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> out;
    for (const auto& kv : keyed) out.push_back(kv.second);
    return out;
}

/// k_hat by recomputing every prefix sum from scratch; nullopt when no k qualifies.
inline std::optional<std::size_t> k_hat(const Vector& w, const Vector& pvalues, double q, const knockagg::Confidence& omega) {
    const auto rho = rank_order(w);
    const double bound = q / omega.expected_value() - q;
    std::optional<std::size_t> best;
    for (std::size_t k = 1; k <= rho.size(); ++k) {
        double num = 1.0, den = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            const double o = omega(pvalues(static_cast<Eigen::Index>(rho[r])));
            num += 1.0 - o;
            den += o;
        }
        if (den > 0 && num / den <= bound) best = k;
    }
    return best;
}

/// BH by its counting form: k* = max{k : #{j : p_j <= k q / p} >= k}; reject p_j <= k* q / p.
inline std::set<std::size_t> bhq(const Vector& pvalues, double q) {
    const auto p = static_cast<std::size_t>(pvalues.size());
    std::size_t k_star = 0;
    for (std::size_t k = 1; k <= p; ++k) {
        const double cut = static_cast<double>(k) * q / static_cast<double>(p);
        std::size_t count = 0;
        for (Eigen::Index j = 0; j < pvalues.size(); ++j) count += pvalues(j) <= cut;
        if (count >= k) k_star = k;
    }
    std::set<std::size_t> out;
    if (k_star == 0) return out;
    const double cut = static_cast<double>(k_star) * q / static_cast<double>(p);
    for (Eigen::Index j = 0; j < pvalues.size(); ++j) {
        if (pvalues(j) <= cut) out.insert(static_cast<std::size_t>(j));
    }
    return out;
}

/// n x q matrix with orthonormal columns from a seeded Gaussian draw.
inline Matrix orthonormal_columns(Eigen::Index n, Eigen::Index q, std::uint64_t seed) {
    knockagg::Rng rng = knockagg::make_rng(seed);
    std::normal_distribution<double> normal;
    Matrix g(n, q);
    for (Eigen::Index j = 0; j < q; ++j)
        for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(n, q);
}

inline Vector gaussian_vector(Eigen::Index n, std::uint64_t seed) {
    knockagg::Rng rng = knockagg::make_rng(seed);
    std::normal_distribution<double> normal;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

/// Maximum KKT violation of b for 1/2 ||y - A b||^2 + lambda ||b||_1.
inline double kkt_violation(const Matrix& a, const Vector& y, const Vector& b, double lambda) {
    const Vector g = a.transpose() * (y - a * b);
    double worst = 0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (b(j) != 0) {
            worst = std::max(worst, std::abs(g(j) - lambda * (b(j) > 0 ? 1.0 : -1.0)));
        } else {
            worst = std::max(worst, std::abs(g(j)) - lambda);
        }
    }
    return worst;
}

/// Upper-tail quantiles of the chi-square distribution at alpha = 0.01.
inline double chi_square_crit_001(int df) {
    static const double table[] = {0, 6.634897, 9.210340, 11.344867, 13.276704, 15.086272, 16.811894, 18.475307, 20.090235};
    return table[df];
}

}  // namespace oracle

#pragma once

// Everything a single decentralized model computes before it sends its
// one-shot message: knockoffs, Lasso entry times, and the (W, chi) pair.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "knockagg/knockoff.hpp"
#include "knockagg/lasso.hpp"
#include "knockagg/numerics.hpp"
#include "knockagg/random.hpp"

namespace knockagg {

struct NodeData {
    Matrix x;
    Vector y;
    std::uint32_t node_id = 0;
    std::optional<Vector> truth;  // simulation only

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index p() const { return x.cols(); }
};

/// Checks the preconditions of the knockoff node: n >= 2p and unit columns.
inline void validate_node_data(const NodeData& data) {
    require(data.p() >= 1, ErrorCode::invalid_input, "node data: design has no columns");
    require(data.y.size() == data.n(), ErrorCode::invalid_input, "node data: response length differs from row count");
    require(data.n() >= 2 * data.p(), ErrorCode::insufficient_rows,
            "node data: knockoffs need n >= 2p (n=" + std::to_string(data.n()) + ", p=" + std::to_string(data.p()) + ")");
    require(has_unit_columns(data.x), ErrorCode::invalid_input, "node data: design columns must have unit norm");
}

struct NodeStatistics {
    Vector w;                   // ordering statistics, >= 0
    std::vector<int> chi;       // one-bit p-values in {-1, +1}
    std::uint32_t n = 0;        // rows of the node's design

    std::size_t p() const { return chi.size(); }
};

/// W_j = max(Z_j, Zk_j); chi_j = sgn(Z_j - Zk_j) with a seeded fair coin on ties.
inline NodeStatistics statistics_from_entry_times(const PilotStats& pilot, std::uint32_t n, std::uint64_t coin_seed) {
    require(pilot.z.size() == pilot.z_tilde.size(), ErrorCode::invalid_input, "entry times: length mismatch");
    const Eigen::Index p = pilot.z.size();
    NodeStatistics out;
    out.n = n;
    out.w.resize(p);
    out.chi.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        const double z = pilot.z(j);
        const double zk = pilot.z_tilde(j);
        out.w(j) = std::max(z, zk);
        const auto ju = static_cast<std::size_t>(j);
        if (z > zk) out.chi[ju] = 1;
        else if (z < zk) out.chi[ju] = -1;
        else out.chi[ju] = seeded_coin(coin_seed, ju);
    }
    return out;
}

inline NodeStatistics node_statistics(const NodeData& data, const KnockoffDesign& design, const LambdaGrid& grid,
                                      std::uint64_t coin_seed) {
    validate_node_data(data);
    require(design.x_tilde.rows() == data.n() && design.x_tilde.cols() == data.p(), ErrorCode::invalid_input,
            "node_statistics: knockoff shape differs from design");
    Matrix augmented(data.n(), 2 * data.p());
    augmented << data.x, design.x_tilde;
    const PilotStats pilot = entry_times(augmented, data.y, grid);
    return statistics_from_entry_times(pilot, static_cast<std::uint32_t>(data.n()), coin_seed);
}

/// Full node pipeline from a single node seed: the knockoff rotation and the
/// tie-breaking coins use independent streams derived from it.
inline NodeStatistics run_knockoff_node(const NodeData& data, std::uint64_t node_seed, const LambdaGrid& grid = {}) {
    validate_node_data(data);
    const KnockoffDesign design = construct_knockoffs(data.x, derive_seed(node_seed, {stream::knockoff}));
    return node_statistics(data, design, grid, derive_seed(node_seed, {stream::coin}));
}

/// Median with the midpoint convention for even lengths.
inline double median(std::vector<double> values) {
    require(!values.empty(), ErrorCode::invalid_input, "median of empty sequence");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

/// 1 where a value strictly exceeds the median of all values, else 0.
inline Vector binarize_above_median(const Vector& values) {
    const double med = median(std::vector<double>(values.data(), values.data() + values.size()));
    Vector out(values.size());
    for (Eigen::Index j = 0; j < values.size(); ++j) out(j) = values(j) > med ? 1.0 : 0.0;
    return out;
}

/// Least-squares contrast statistics for a design with orthonormal columns:
/// regress y on [X, U] with U the orthonormal complement, chi_j = sgn(b_j - bk_j),
/// and W_j = 1 iff |b_j - bk_j| is above the median.
inline NodeStatistics ls_contrast_statistics(const NodeData& data, std::uint64_t coin_seed) {
    const Eigen::Index p = data.p();
    require(p >= 1 && data.y.size() == data.n(), ErrorCode::invalid_input, "ls_contrast_statistics: shape mismatch");
    const Matrix gram = data.x.transpose() * data.x;
    require(max_abs(gram - Matrix::Identity(p, p)) <= 1e-8, ErrorCode::invalid_input,
            "ls_contrast_statistics: design columns are not orthonormal");

    Matrix augmented(data.n(), 2 * p);
    augmented << data.x, orthonormal_complement(data.x);
    const Vector beta = least_squares(augmented, data.y);
    const Vector diff = beta.head(p) - beta.tail(p);

    NodeStatistics out;
    out.n = static_cast<std::uint32_t>(data.n());
    out.chi.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (diff(j) > 0) out.chi[ju] = 1;
        else if (diff(j) < 0) out.chi[ju] = -1;
        else out.chi[ju] = seeded_coin(coin_seed, ju);
    }
    out.w = binarize_above_median(diff.cwiseAbs());
    return out;
}

}  // namespace knockagg

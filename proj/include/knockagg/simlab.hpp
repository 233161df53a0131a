#pragma once

// Data generators, metrics and the replicate loop for the simulation studies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "knockagg/baselines.hpp"
#include "knockagg/coordinator.hpp"
#include "knockagg/format.hpp"
#include "knockagg/knockoff.hpp"
#include "knockagg/lasso.hpp"
#include "knockagg/node.hpp"
#include "knockagg/numerics.hpp"
#include "knockagg/random.hpp"
#include "knockagg/wire.hpp"

namespace knockagg {

// ---------------------------------------------------------------------------
// Generators

struct SigmaSpec {
    enum class Kind { identity, equicorr, paper_corr };
    Kind kind = Kind::identity;
    double rho = 0;

    static SigmaSpec identity() { return {Kind::identity, 0}; }
    static SigmaSpec equicorr(double rho) { return {Kind::equicorr, rho}; }
    static SigmaSpec paper_corr() { return {Kind::paper_corr, 0}; }

    /// Off-diagonal correlation for dimension p.
    double off_diagonal(Eigen::Index p) const {
        switch (kind) {
            case Kind::identity: return 0.0;
            case Kind::equicorr: return rho;
            case Kind::paper_corr: return -0.3 / (0.3 * static_cast<double>(p - 2) + 1.0);
        }
        return 0.0;
    }

    Matrix matrix(Eigen::Index p) const {
        Matrix s = Matrix::Constant(p, p, off_diagonal(p));
        s.diagonal().setOnes();
        return s;
    }
};

inline std::string to_string(const SigmaSpec& s) {
    switch (s.kind) {
        case SigmaSpec::Kind::identity: return "identity";
        case SigmaSpec::Kind::equicorr: return "equicorr:" + format_real(s.rho);
        case SigmaSpec::Kind::paper_corr: return "paper_corr";
    }
    return "unknown";
}

/// Rows i.i.d. N(0, Sigma), then columns scaled to unit length.
inline Matrix gen_design(Eigen::Index n, Eigen::Index p, const SigmaSpec& sigma, std::uint64_t seed) {
    require(p >= 1 && n >= p, ErrorCode::invalid_input, "gen_design: need n >= p >= 1");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    Matrix g(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) g(i, j) = normal(rng);
    if (sigma.kind != SigmaSpec::Kind::identity && sigma.off_diagonal(p) != 0.0) {
        Eigen::LLT<Matrix> llt(sigma.matrix(p));
        require(llt.info() == Eigen::Success, ErrorCode::config, "gen_design: Sigma is not positive definite");
        const Matrix upper = llt.matrixU();
        g = g * upper;  // row covariance U^T U = Sigma
    }
    return normalize_columns(g);
}

/// k entries equal to A at uniformly drawn positions, the rest zero.
inline Vector gen_signal(Eigen::Index p, Eigen::Index k, double amplitude, std::uint64_t seed) {
    require(k >= 0 && k <= p, ErrorCode::invalid_input, "gen_signal: need 0 <= k <= p");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    Vector beta = Vector::Zero(p);
    for (Eigen::Index t = 0; t < k; ++t) beta(idx[static_cast<std::size_t>(t)]) = amplitude;
    return beta;
}

/// y = X beta + noise_sd * z, z i.i.d. standard normal.
inline Vector gen_response(const Matrix& x, const Vector& beta, std::uint64_t seed, double noise_sd = 1.0) {
    require(x.cols() == beta.size(), ErrorCode::invalid_input, "gen_response: beta length differs from column count");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    Vector y = x * beta;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += noise_sd * normal(rng);
    return y;
}

/// m designs of size 2p x p with orthonormal columns and a shared beta whose
/// entries are mu = sqrt(ln p / m) or 0 with probability 1/2 each.
struct OrthogonalExample {
    std::vector<Matrix> designs;
    Vector beta;
    double mu = 0;
};

inline OrthogonalExample gen_orthogonal_example(Eigen::Index p, std::size_t m, std::uint64_t seed) {
    require(p >= 2 && m >= 1, ErrorCode::invalid_input, "gen_orthogonal_example: need p >= 2 and m >= 1");
    OrthogonalExample out;
    out.mu = std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
        Rng rng = make_rng(derive_seed(seed, {stream::design, i}));
        out.designs.push_back(random_orthogonal(2 * p, p, rng));
    }
    Rng rng = make_rng(derive_seed(seed, {stream::signal}));
    std::bernoulli_distribution coin(0.5);
    out.beta = Vector::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) out.beta(j) = coin(rng) ? out.mu : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double fdp = 0;
    double power = 0;
    double wfdp = 0;
    double hamming = 0;
    double comm_bits = 0;
};

/// rejected_j: feature selected; truth_j: nonzero in at least one model.
inline Metrics compute_metrics(const std::vector<bool>& rejected, const Vector& omega, const std::vector<bool>& truth,
                               std::uint64_t comm_bits) {
    require(rejected.size() == truth.size() && omega.size() == static_cast<Eigen::Index>(truth.size()),
            ErrorCode::invalid_input, "compute_metrics: length mismatch");
    std::size_t selected = 0, false_sel = 0, true_sel = 0, signals = 0, hamming = 0;
    double w_total = 0, w_null = 0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        const double w = omega(static_cast<Eigen::Index>(j));
        signals += truth[j];
        if (rejected[j]) {
            ++selected;
            if (truth[j]) ++true_sel;
            else ++false_sel;
        }
        if (rejected[j] != truth[j]) ++hamming;
        w_total += w;
        if (!truth[j]) w_null += w;
    }
    Metrics m;
    m.fdp = static_cast<double>(false_sel) / static_cast<double>(std::max<std::size_t>(selected, 1));
    m.power = static_cast<double>(true_sel) / static_cast<double>(std::max<std::size_t>(signals, 1));
    m.wfdp = w_total > 0 ? w_null / w_total : 0.0;
    m.hamming = static_cast<double>(hamming);
    m.comm_bits = static_cast<double>(comm_bits);
    return m;
}

inline Metrics compute_metrics(const SelectionResult& selection, const std::vector<bool>& truth, std::uint64_t comm_bits) {
    std::vector<bool> rejected(truth.size());
    for (std::size_t j = 0; j < truth.size(); ++j) rejected[j] = selection.rejected(j);
    return compute_metrics(rejected, selection.omega, truth, comm_bits);
}

inline Metrics compute_metrics(const std::vector<std::size_t>& selected, const std::vector<bool>& truth, std::uint64_t comm_bits) {
    std::vector<bool> rejected(truth.size(), false);
    Vector omega = Vector::Zero(static_cast<Eigen::Index>(truth.size()));
    for (std::size_t j : selected) {
        require(j < truth.size(), ErrorCode::invalid_input, "compute_metrics: selected index out of range");
        rejected[j] = true;
        omega(static_cast<Eigen::Index>(j)) = 1.0;
    }
    return compute_metrics(rejected, omega, truth, comm_bits);
}

struct MetricSummary {
    Metrics mean;
    Metrics sd;
};

inline MetricSummary summarize_metrics(const std::vector<Metrics>& rows) {
    MetricSummary out;
    if (rows.empty()) return out;
    const auto count = static_cast<double>(rows.size());
    auto column = [&](double Metrics::*field, double& mean, double& sd) {
        double acc = 0;
        for (const auto& r : rows) acc += r.*field;
        mean = acc / count;
        double ss = 0;
        for (const auto& r : rows) ss += (r.*field - mean) * (r.*field - mean);
        sd = rows.size() > 1 ? std::sqrt(ss / (count - 1)) : 0.0;
    };
    column(&Metrics::fdp, out.mean.fdp, out.sd.fdp);
    column(&Metrics::power, out.mean.power, out.sd.power);
    column(&Metrics::wfdp, out.mean.wfdp, out.sd.wfdp);
    column(&Metrics::hamming, out.mean.hamming, out.sd.hamming);
    column(&Metrics::comm_bits, out.mean.comm_bits, out.sd.comm_bits);
    return out;
}

// ---------------------------------------------------------------------------
// Experiments

enum class Method { knockagg, ols_bhq, lasso_vote };
enum class Transport { wire, in_memory };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::knockagg: return "knockagg";
        case Method::ols_bhq: return "ols_bhq";
        case Method::lasso_vote: return "lasso_vote";
    }
    return "unknown";
}

inline Method parse_method(std::string_view name) {
    if (name == "knockagg") return Method::knockagg;
    if (name == "ols_bhq") return Method::ols_bhq;
    if (name == "lasso_vote") return Method::lasso_vote;
    fail(ErrorCode::config, "unknown method '" + std::string(name) + "' (expected knockagg, ols_bhq or lasso_vote)");
}

struct ExperimentConfig {
    std::string name = "experiment";
    Eigen::Index p = 100;
    Eigen::Index n = 300;
    std::size_t m = 5;
    Eigen::Index k = 10;
    double amplitude = 1.0;
    double q = 0.2;
    SigmaSpec sigma = SigmaSpec::identity();
    SummarySpec gamma = SummarySpec::weighted();
    Confidence omega = Confidence::step(0.5);
    WireMode wire_mode = WireMode::raw32;
    Transport transport = Transport::wire;
    std::size_t replicates = 20;
    std::uint64_t seed = 1;
    Method method = Method::knockagg;
    LambdaGrid grid{};
    CvOptions cv{};
    bool redraw_design = false;
    std::vector<double> node_sigmas;  // per-node noise SD; empty = all 1

    void validate() const {
        require(p >= 1, ErrorCode::config, "p must be >= 1");
        require(m >= 1, ErrorCode::config, "m must be >= 1");
        require(n >= p, ErrorCode::config, "n must be >= p");
        require(k >= 0 && k <= p, ErrorCode::config, "k must lie in [0, p]");
        require(q > 0 && q < 1, ErrorCode::config, "q must lie in (0, 1)");
        require(replicates >= 1, ErrorCode::config, "replicates must be >= 1");
        require(std::isfinite(amplitude), ErrorCode::config, "amplitude must be finite");
        require(node_sigmas.empty() || node_sigmas.size() == m, ErrorCode::config, "node_sigmas needs one entry per node");
        for (double s : node_sigmas) require(s > 0 && std::isfinite(s), ErrorCode::config, "node_sigmas must be positive");
        if (method == Method::knockagg) {
            require(n >= 2 * p, ErrorCode::config,
                    "knockagg needs n >= 2p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
            SummarySpec g = gamma;
            if (g.kind == SummarySpec::Kind::weighted_sum && g.weights.empty()) g.weights.assign(m, 1.0);
            g.validate(m);
        }
    }

    double noise_sd(std::size_t node) const { return node_sigmas.empty() ? 1.0 : node_sigmas[node]; }
};

/// Fixed parts of an experiment: designs and signal.
struct ExperimentSetup {
    std::vector<Matrix> designs;
    Vector beta;
    std::vector<bool> truth;
};

inline std::uint64_t design_seed(const ExperimentConfig& c, std::size_t node, std::size_t replicate) {
    return c.redraw_design ? derive_seed(c.seed, {stream::design, node, replicate}) : derive_seed(c.seed, {stream::design, node});
}
inline std::uint64_t noise_seed(const ExperimentConfig& c, std::size_t node, std::size_t replicate) {
    return derive_seed(c.seed, {stream::noise, node, replicate});
}
inline std::uint64_t node_seed(const ExperimentConfig& c, std::size_t node, std::size_t replicate) {
    return derive_seed(c.seed, {stream::node, node, replicate});
}

inline ExperimentSetup make_setup(const ExperimentConfig& c) {
    ExperimentSetup s;
    if (!c.redraw_design) {
        for (std::size_t i = 0; i < c.m; ++i) s.designs.push_back(gen_design(c.n, c.p, c.sigma, design_seed(c, i, 0)));
    }
    s.beta = gen_signal(c.p, c.k, c.amplitude, derive_seed(c.seed, {stream::signal}));
    s.truth.resize(static_cast<std::size_t>(c.p));
    for (Eigen::Index j = 0; j < c.p; ++j) s.truth[static_cast<std::size_t>(j)] = s.beta(j) != 0;
    return s;
}

/// Node datasets of one replicate.
inline std::vector<NodeData> make_nodes(const ExperimentConfig& c, const ExperimentSetup& setup, std::size_t replicate) {
    std::vector<NodeData> nodes;
    for (std::size_t i = 0; i < c.m; ++i) {
        NodeData d;
        d.x = c.redraw_design ? gen_design(c.n, c.p, c.sigma, design_seed(c, i, replicate)) : setup.designs[i];
        d.y = gen_response(d.x, setup.beta, noise_seed(c, i, replicate), c.noise_sd(i));
        d.node_id = static_cast<std::uint32_t>(i);
        d.truth = setup.beta;
        nodes.push_back(std::move(d));
    }
    return nodes;
}

struct KnockaggOutcome {
    std::vector<NodeSummary> summaries;
    AggregateStats stats;
    SelectionResult selection;
    std::uint64_t comm_bits = 0;
};

/// Nodes -> messages -> coordinator. With the wire transport every message is
/// serialized and decoded again.
inline KnockaggOutcome run_knockagg(const ExperimentConfig& c, const std::vector<NodeData>& nodes, std::size_t replicate) {
    KnockaggOutcome out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const NodeStatistics stats = run_knockoff_node(nodes[i], node_seed(c, i, replicate), c.grid);
        NodeSummary summary = summarize(stats, c.wire_mode, nodes[i].node_id);
        if (c.transport == Transport::wire) {
            const auto bytes = serialize_summary(summary);
            out.comm_bits += 8 * bytes.size();
            summary = decode_summary(bytes);
        } else {
            out.comm_bits += message_bits(static_cast<std::uint64_t>(c.p), c.wire_mode);
        }
        out.summaries.push_back(std::move(summary));
    }
    out.stats = aggregate(out.summaries, c.gamma);
    out.selection = knockoff_select(out.stats, c.q, c.omega);
    return out;
}

inline Metrics run_replicate(const ExperimentConfig& c, const ExperimentSetup& setup, std::size_t replicate) {
    const std::vector<NodeData> nodes = make_nodes(c, setup, replicate);
    const auto p = static_cast<std::uint64_t>(c.p);
    switch (c.method) {
        case Method::knockagg: {
            const KnockaggOutcome outcome = run_knockagg(c, nodes, replicate);
            return compute_metrics(outcome.selection, setup.truth, outcome.comm_bits);
        }
        case Method::ols_bhq: {
            std::vector<OlsNodeSummary> summaries;
            for (const auto& d : nodes) summaries.push_back(ols_node_summary(d));
            // two float64 values per feature per node
            return compute_metrics(ols_aggregate_select(summaries, c.q).rejected, setup.truth, c.m * p * 128);
        }
        case Method::lasso_vote: {
            std::vector<std::vector<std::size_t>> supports;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                supports.push_back(lasso_cv_support(nodes[i], c.cv, node_seed(c, i, replicate)));
            }
            // one support bit per feature per node
            return compute_metrics(majority_vote(supports, c.m), setup.truth, c.m * p);
        }
    }
    return {};
}

struct ExperimentTable {
    std::vector<Metrics> rows;  // one per replicate, in replicate order
    MetricSummary summary;
};

inline ExperimentTable run_experiment(const ExperimentConfig& c) {
    c.validate();
    const ExperimentSetup setup = make_setup(c);
    ExperimentTable table;
    for (std::size_t r = 0; r < c.replicates; ++r) table.rows.push_back(run_replicate(c, setup, r));
    table.summary = summarize_metrics(table.rows);
    return table;
}

inline const char* metrics_csv_header() { return "replicate,method,p,n,m,k,A,q,fdp,power,wfdp,hamming,comm_bits\n"; }

inline void write_metrics_row(std::ostream& os, const ExperimentConfig& c, const std::string& label, const Metrics& m) {
    os << label << ',' << to_string(c.method) << ',' << c.p << ',' << c.n << ',' << c.m << ',' << c.k << ','
       << format_real(c.amplitude) << ',' << format_real(c.q) << ',' << format_real(m.fdp) << ',' << format_real(m.power) << ','
       << format_real(m.wfdp) << ',' << format_real(m.hamming) << ',' << format_real(m.comm_bits) << '\n';
}

/// One row per replicate followed by a "mean" row.
inline void write_metrics_csv(std::ostream& os, const ExperimentConfig& c, const ExperimentTable& table, bool header = true) {
    if (header) os << metrics_csv_header();
    for (std::size_t r = 0; r < table.rows.size(); ++r) write_metrics_row(os, c, std::to_string(r), table.rows[r]);
    write_metrics_row(os, c, "mean", table.summary.mean);
}

// ---------------------------------------------------------------------------
// Orthogonal-design recovery study

struct RecoveryOptions {
    std::vector<double> q_list;  // per-m nominal level; empty = the single q for all m
    bool noiseless = false;
};

struct RecoveryRow {
    std::size_t m = 0;
    double q = 0;
    double hamming_frac_mean = 0;
    double hamming_frac_sd = 0;
    double fdp_mean = 0;
    double power_mean = 0;
    std::uint64_t comm_bits = 0;
    std::vector<double> hamming_frac;  // per replicate
};

inline std::uint64_t recovery_seed(std::uint64_t seed, std::size_t m, std::size_t replicate) {
    return derive_seed(seed, {stream::orthogonal, m, replicate});
}

/// One replicate: per-node least-squares contrasts, binary-median messages,
/// Gamma = sum of binary W, Omega = step(0.5).
inline KnockaggOutcome run_recovery_replicate(const OrthogonalExample& ex, double q, std::uint64_t seed, bool noiseless) {
    KnockaggOutcome out;
    for (std::size_t i = 0; i < ex.designs.size(); ++i) {
        NodeData d;
        d.x = ex.designs[i];
        d.node_id = static_cast<std::uint32_t>(i);
        d.y = noiseless ? Vector(d.x * ex.beta) : gen_response(d.x, ex.beta, derive_seed(seed, {stream::noise, i}));
        const NodeStatistics stats = ls_contrast_statistics(d, derive_seed(seed, {stream::coin, i}));
        const auto bytes = encode_summary(stats, WireMode::binary_median, d.node_id);
        out.comm_bits += 8 * bytes.size();
        out.summaries.push_back(decode_summary(bytes));
    }
    const std::size_t m = ex.designs.size();
    const SummarySpec gamma = m >= 2 ? SummarySpec::sum_top(m) : SummarySpec::max();
    out.stats = aggregate(out.summaries, gamma);
    out.selection = knockoff_select(out.stats, q, Confidence::step(0.5));
    return out;
}

inline std::vector<RecoveryRow> run_recovery_study(Eigen::Index p, const std::vector<std::size_t>& m_list, double q,
                                                      std::uint64_t seed, std::size_t replicates, const RecoveryOptions& options = {}) {
    require(p >= 2, ErrorCode::config, "recovery: p must be >= 2");
    require(replicates >= 1, ErrorCode::config, "recovery: replicates must be >= 1");
    require(options.q_list.empty() || options.q_list.size() == m_list.size(), ErrorCode::config, "recovery: q_list needs one q per m");
    std::vector<RecoveryRow> rows;
    for (std::size_t idx = 0; idx < m_list.size(); ++idx) {
        const std::size_t m = m_list[idx];
        require(m >= 1, ErrorCode::config, "recovery: each m must be >= 1");
        RecoveryRow row;
        row.m = m;
        row.q = options.q_list.empty() ? q : options.q_list[idx];
        require(row.q > 0 && row.q < 1, ErrorCode::config, "recovery: q must lie in (0, 1)");
        std::vector<Metrics> metrics;
        for (std::size_t r = 0; r < replicates; ++r) {
            const std::uint64_t rs = recovery_seed(seed, m, r);
            const OrthogonalExample ex = gen_orthogonal_example(p, m, rs);
            const KnockaggOutcome outcome = run_recovery_replicate(ex, row.q, rs, options.noiseless);
            std::vector<bool> truth(static_cast<std::size_t>(p));
            for (Eigen::Index j = 0; j < p; ++j) truth[static_cast<std::size_t>(j)] = ex.beta(j) != 0;
            metrics.push_back(compute_metrics(outcome.selection, truth, outcome.comm_bits));
            row.hamming_frac.push_back(metrics.back().hamming / static_cast<double>(p));
            row.comm_bits = outcome.comm_bits;
        }
        const MetricSummary s = summarize_metrics(metrics);
        row.hamming_frac_mean = s.mean.hamming / static_cast<double>(p);
        row.hamming_frac_sd = s.sd.hamming / static_cast<double>(p);
        row.fdp_mean = s.mean.fdp;
        row.power_mean = s.mean.power;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace knockagg

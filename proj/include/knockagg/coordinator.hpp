#pragma once

// Coordinator side: aggregate the one-shot messages into (chi_j, W_j, P_j)
// and run the weighted sequential selection with a confidence function.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knockagg/error.hpp"
#include "knockagg/format.hpp"
#include "knockagg/numerics.hpp"
#include "knockagg/wire.hpp"

namespace knockagg {

// ---------------------------------------------------------------------------
// Summary functions Gamma

struct SummarySpec {
    enum class Kind { max, sum_top_r, product_top_r, weighted_sum };

    Kind kind = Kind::weighted_sum;
    std::size_t r = 0;            // sum_top_r / product_top_r
    std::vector<double> weights;  // weighted_sum; empty = take n_i from the messages

    static SummarySpec max() { return {Kind::max, 0, {}}; }
    static SummarySpec sum_top(std::size_t r) { return {Kind::sum_top_r, r, {}}; }
    static SummarySpec product_top(std::size_t r) { return {Kind::product_top_r, r, {}}; }
    static SummarySpec weighted(std::vector<double> w = {}) { return {Kind::weighted_sum, 0, std::move(w)}; }

    void validate(std::size_t m) const {
        require(m >= 1, ErrorCode::config, "summary function needs at least one node");
        switch (kind) {
            case Kind::max: break;
            case Kind::sum_top_r:
            case Kind::product_top_r:
                require(r > 1 && r <= m, ErrorCode::config,
                        "summary function: need 1 < r <= m (r=" + std::to_string(r) + ", m=" + std::to_string(m) + ")");
                break;
            case Kind::weighted_sum:
                require(weights.size() == m, ErrorCode::config, "weighted_sum: need one weight per node");
                for (double w : weights) require(std::isfinite(w) && w >= 0, ErrorCode::config, "weighted_sum: weights must be >= 0");
                break;
        }
    }

    /// Gamma(x_1..x_m) for nonnegative inputs.
    double operator()(std::span<const double> x) const {
        switch (kind) {
            case Kind::max: return *std::max_element(x.begin(), x.end());
            case Kind::sum_top_r:
            case Kind::product_top_r: {
                std::vector<double> v(x.begin(), x.end());
                std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r), v.end(), std::greater<>());
                double acc = kind == Kind::sum_top_r ? 0.0 : 1.0;
                for (std::size_t k = 0; k < r; ++k) acc = kind == Kind::sum_top_r ? acc + v[k] : acc * v[k];
                return acc;
            }
            case Kind::weighted_sum: {
                double acc = 0;
                for (std::size_t i = 0; i < x.size(); ++i) acc += weights[i] * x[i];
                return acc;
            }
        }
        return 0;
    }
};

inline std::string to_string(const SummarySpec& g) {
    switch (g.kind) {
        case SummarySpec::Kind::max: return "max";
        case SummarySpec::Kind::sum_top_r: return "sum-top-r:" + std::to_string(g.r);
        case SummarySpec::Kind::product_top_r: return "product-top-r:" + std::to_string(g.r);
        case SummarySpec::Kind::weighted_sum: return "weighted-sum";
    }
    return "unknown";
}

/// "max", "sum-top-r:R", "product-top-r:R", "weighted-sum".
inline SummarySpec parse_summary_spec(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    auto parse_r = [&]() -> std::size_t {
        require(colon != std::string_view::npos, ErrorCode::config, "summary function '" + std::string(text) + "' needs :r");
        const std::string arg(text.substr(colon + 1));
        char* end = nullptr;
        const long v = std::strtol(arg.c_str(), &end, 10);
        require(end && *end == '\0' && v > 0, ErrorCode::config, "summary function: bad r '" + arg + "'");
        return static_cast<std::size_t>(v);
    };
    if (name == "max" && colon == std::string_view::npos) return SummarySpec::max();
    if (name == "sum-top-r") return SummarySpec::sum_top(parse_r());
    if (name == "product-top-r") return SummarySpec::product_top(parse_r());
    if (name == "weighted-sum" && colon == std::string_view::npos) return SummarySpec::weighted();
    fail(ErrorCode::config, "unknown summary function '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Confidence functions Omega

/// Integral of f over [a, b] by adaptive Simpson to the given absolute tolerance.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tolerance) {
    struct Rec {
        const std::function<double(double)>& f;
        double go(double a, double b, double fa, double fm, double fb, double whole, double eps, int depth) const {
            const double m = 0.5 * (a + b);
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6 * (fa + 4 * flm + fm);
            const double right = (b - m) / 6 * (fm + 4 * frm + fb);
            const double delta = left + right - whole;
            if (depth <= 0 || std::abs(delta) <= 15 * eps) return left + right + delta / 15;
            return go(a, m, fa, flm, fm, left, eps / 2, depth - 1) + go(m, b, fm, frm, fb, right, eps / 2, depth - 1);
        }
    } rec{f};
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
    return rec.go(a, b, fa, fm, fb, whole, tolerance, 50);
}

/// Non-increasing map [0,1] -> [0,1] with Omega(0) = 1 and Omega(1) = 0.
class Confidence {
public:
    enum class Kind { step, linear, poly, tabulated, custom };

    static Confidence step(double c) {
        require(c > 0 && c < 1, ErrorCode::invalid_confidence, "step confidence needs 0 < c < 1");
        Confidence out(Kind::step);
        out.param_ = c;
        return out.finish();
    }
    static Confidence linear() { return Confidence(Kind::linear).finish(); }
    static Confidence poly(double degree) {
        require(degree > 0 && std::isfinite(degree), ErrorCode::invalid_confidence, "poly confidence needs degree > 0");
        Confidence out(Kind::poly);
        out.param_ = degree;
        return out.finish();
    }
    /// Piecewise-linear through (x_k, y_k); x from 0 to 1 increasing, y from 1 to 0 non-increasing.
    static Confidence tabulated(std::vector<double> xs, std::vector<double> ys) {
        require(xs.size() == ys.size() && xs.size() >= 2, ErrorCode::invalid_confidence, "tabulated confidence: need >= 2 matching points");
        require(xs.front() == 0.0 && xs.back() == 1.0, ErrorCode::invalid_confidence, "tabulated confidence: x must span [0, 1]");
        require(ys.front() == 1.0 && ys.back() == 0.0, ErrorCode::invalid_confidence, "tabulated confidence: need Omega(0)=1, Omega(1)=0");
        for (std::size_t k = 1; k < xs.size(); ++k) {
            require(xs[k] > xs[k - 1], ErrorCode::invalid_confidence, "tabulated confidence: x must increase");
            require(ys[k] <= ys[k - 1], ErrorCode::invalid_confidence, "tabulated confidence: Omega must not increase");
        }
        Confidence out(Kind::tabulated);
        out.xs_ = std::move(xs);
        out.ys_ = std::move(ys);
        return out.finish();
    }
    /// Arbitrary function; E Omega(U) is found by adaptive quadrature.
    static Confidence custom(std::function<double(double)> fn) {
        require(static_cast<bool>(fn), ErrorCode::invalid_confidence, "custom confidence: empty function");
        require(fn(0.0) == 1.0 && fn(1.0) == 0.0, ErrorCode::invalid_confidence, "custom confidence: need Omega(0)=1, Omega(1)=0");
        // shape checked on a grid; exact only for the sampled points
        double prev = 1.0;
        for (int k = 1; k <= 1024; ++k) {
            const double v = fn(k / 1024.0);
            require(v >= 0 && v <= prev, ErrorCode::invalid_confidence, "custom confidence: Omega must be non-increasing in [0, 1]");
            prev = v;
        }
        Confidence out(Kind::custom);
        out.fn_ = std::move(fn);
        return out.finish();
    }

    Kind kind() const { return kind_; }
    double parameter() const { return param_; }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::step: return x <= param_ ? 1.0 : 0.0;
            case Kind::linear: return std::clamp(1.0 - x, 0.0, 1.0);
            case Kind::poly: return std::pow(std::clamp(1.0 - x, 0.0, 1.0), param_);
            case Kind::tabulated: {
                if (x <= 0) return ys_.front();
                if (x >= 1) return ys_.back();
                const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
                const std::size_t k = static_cast<std::size_t>(it - xs_.begin());
                const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
                return ys_[k - 1] + t * (ys_[k] - ys_[k - 1]);
            }
            case Kind::custom: return fn_(x);
        }
        return 0;
    }

    /// E Omega(U), U ~ Uniform[0, 1].
    double expected_value() const { return expected_; }

private:
    explicit Confidence(Kind kind) : kind_(kind) {}

    Confidence finish() {
        switch (kind_) {
            case Kind::step: expected_ = param_; break;
            case Kind::linear: expected_ = 0.5; break;
            case Kind::poly: expected_ = 1.0 / (param_ + 1.0); break;
            case Kind::tabulated:
                expected_ = 0;
                for (std::size_t k = 1; k < xs_.size(); ++k) expected_ += 0.5 * (ys_[k] + ys_[k - 1]) * (xs_[k] - xs_[k - 1]);
                break;
            case Kind::custom:
                expected_ = adaptive_simpson(fn_, 0.0, 1.0, 1e-10);
                break;
        }
        if (!(expected_ > 0 && expected_ < 1)) {
            fail(ErrorCode::invalid_confidence, "E Omega(U) = " + format_real(expected_) + " is outside (0, 1)");
        }
        return *this;
    }

    Kind kind_;
    double param_ = 0;
    std::vector<double> xs_, ys_;
    std::function<double(double)> fn_;
    double expected_ = 0;
};

inline double expected_omega(const Confidence& omega) { return omega.expected_value(); }

inline std::string to_string(const Confidence& omega) {
    switch (omega.kind()) {
        case Confidence::Kind::step: return "step:" + format_real(omega.parameter());
        case Confidence::Kind::linear: return "linear";
        case Confidence::Kind::poly: return "poly:" + format_real(omega.parameter());
        case Confidence::Kind::tabulated: return "tabulated";
        case Confidence::Kind::custom: return "custom";
    }
    return "unknown";
}

/// "step:C", "linear", "poly:D".
inline Confidence parse_confidence(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    auto arg = [&]() {
        require(colon != std::string_view::npos, ErrorCode::config, "confidence '" + std::string(text) + "' needs a parameter");
        const std::string s(text.substr(colon + 1));
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        require(end && *end == '\0' && !s.empty(), ErrorCode::config, "confidence: bad parameter '" + s + "'");
        return v;
    };
    if (name == "step") return Confidence::step(arg());
    if (name == "linear" && colon == std::string_view::npos) return Confidence::linear();
    if (name == "poly") return Confidence::poly(arg());
    fail(ErrorCode::config, "unknown confidence function '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Aggregation

/// Number of +1 signs per feature.
inline std::vector<int> aggregate_chi(std::span<const std::vector<int>> chi_vectors) {
    require(!chi_vectors.empty(), ErrorCode::invalid_input, "aggregate_chi: no nodes");
    const std::size_t p = chi_vectors.front().size();
    std::vector<int> out(p, 0);
    for (const auto& chi : chi_vectors) {
        require(chi.size() == p, ErrorCode::invalid_input, "aggregate_chi: length mismatch across nodes");
        for (std::size_t j = 0; j < p; ++j) {
            require(chi[j] == 1 || chi[j] == -1, ErrorCode::invalid_input, "aggregate_chi: entries must be +1 or -1");
            if (chi[j] == 1) ++out[j];
        }
    }
    return out;
}

/// W_j = Gamma(W_j^1, ..., W_j^m).
inline Vector aggregate_w(std::span<const Vector> w_vectors, const SummarySpec& gamma) {
    require(!w_vectors.empty(), ErrorCode::invalid_input, "aggregate_w: no nodes");
    gamma.validate(w_vectors.size());
    const Eigen::Index p = w_vectors.front().size();
    for (const auto& w : w_vectors) require(w.size() == p, ErrorCode::invalid_input, "aggregate_w: length mismatch across nodes");
    Vector out(p);
    std::vector<double> column(w_vectors.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < w_vectors.size(); ++i) column[i] = w_vectors[i](j);
        out(j) = gamma(column);
    }
    return out;
}

/// P(Binomial(m, 1/2) >= chi). Exact integer sums up to m = 64, log-space above.
inline double binomial_pvalue(int chi, int m) {
    require(m >= 1, ErrorCode::invalid_input, "binomial_pvalue: m must be >= 1");
    require(chi >= 0 && chi <= m, ErrorCode::invalid_input, "binomial_pvalue: chi outside [0, m]");
    if (chi == 0) return 1.0;
    if (m <= 64) {
        unsigned __int128 sum = 0;
        unsigned __int128 term = 1;  // C(m, i), built upward from C(m, 0)
        for (int i = 0; i <= m; ++i) {
            if (i >= chi) sum += term;
            term = term * static_cast<unsigned>(m - i) / static_cast<unsigned>(i + 1);
        }
        // sum < 2^65, so split into exact hi/lo halves before scaling
        const auto hi = static_cast<std::uint64_t>(sum >> 32);
        const auto lo = static_cast<std::uint64_t>(sum & 0xffffffffu);
        return std::ldexp(static_cast<double>(hi), 32 - m) + std::ldexp(static_cast<double>(lo), -m);
    }
    const double log_half = -static_cast<double>(m) * std::log(2.0);
    std::vector<double> logs;
    logs.reserve(static_cast<std::size_t>(m - chi + 1));
    for (int i = chi; i <= m; ++i) {
        logs.push_back(std::lgamma(m + 1.0) - std::lgamma(i + 1.0) - std::lgamma(m - i + 1.0) + log_half);
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double acc = 0;
    for (double l : logs) acc += std::exp(l - top);
    return std::min(1.0, std::exp(top + std::log(acc)));
}

struct AggregateStats {
    std::vector<int> chi;  // number of +1 signs, in [0, m]
    Vector w;
    Vector p_values;
    std::size_t m = 0;

    std::size_t p() const { return chi.size(); }
};

inline AggregateStats make_aggregate(std::vector<int> chi, Vector w, std::size_t m) {
    require(static_cast<Eigen::Index>(chi.size()) == w.size(), ErrorCode::invalid_input, "aggregate: length mismatch");
    AggregateStats out;
    out.p_values.resize(w.size());
    for (std::size_t j = 0; j < chi.size(); ++j) out.p_values(static_cast<Eigen::Index>(j)) = binomial_pvalue(chi[j], static_cast<int>(m));
    out.chi = std::move(chi);
    out.w = std::move(w);
    out.m = m;
    return out;
}

/// One-shot aggregation of decoded messages. A weighted_sum without explicit
/// weights uses each node's n_i.
inline AggregateStats aggregate(std::span<const NodeSummary> summaries, SummarySpec gamma) {
    require(!summaries.empty(), ErrorCode::invalid_input, "aggregate: no summaries");
    const std::uint32_t p = summaries.front().p;
    const WireMode mode = summaries.front().mode;
    std::vector<std::vector<int>> chis;
    std::vector<Vector> ws;
    for (const auto& s : summaries) {
        require(s.p == p, ErrorCode::invalid_input, "aggregate: summaries disagree on p");
        require(s.mode == mode, ErrorCode::invalid_input, "aggregate: summaries use different wire modes");
        chis.push_back(s.chi);
        ws.push_back(Eigen::Map<const Vector>(s.w.data(), static_cast<Eigen::Index>(s.w.size())));
    }
    if (gamma.kind == SummarySpec::Kind::weighted_sum && gamma.weights.empty()) {
        for (const auto& s : summaries) gamma.weights.push_back(static_cast<double>(s.n));
    }
    return make_aggregate(aggregate_chi(chis), aggregate_w(ws, gamma), summaries.size());
}

// ---------------------------------------------------------------------------
// Selection

struct SelectionResult {
    std::vector<std::size_t> rho;   // rho[r] = feature at rank r (0-based)
    std::optional<std::size_t> k_hat;  // number of ranks kept; nullopt is max(empty) = -infinity
    Vector omega;                   // per-feature weight, indexed by feature
    double q = 0;

    bool rejected(std::size_t j) const { return omega(static_cast<Eigen::Index>(j)) > 0; }
    std::size_t rejection_count() const {
        std::size_t c = 0;
        for (Eigen::Index j = 0; j < omega.size(); ++j) c += omega(j) > 0;
        return c;
    }
};

/// Features sorted by W descending, ties by ascending index.
inline std::vector<std::size_t> order_by_w(const Vector& w) {
    std::vector<std::size_t> rho(static_cast<std::size_t>(w.size()));
    std::iota(rho.begin(), rho.end(), std::size_t{0});
    std::stable_sort(rho.begin(), rho.end(), [&](std::size_t a, std::size_t b) {
        return w(static_cast<Eigen::Index>(a)) > w(static_cast<Eigen::Index>(b));
    });
    return rho;
}

/// k_hat = max{k : (1 + sum_{j<=k} (1 - Omega(P_rho(j)))) / sum_{j<=k} Omega(P_rho(j)) <= q / E Omega(U) - q};
/// ranks up to k_hat are rejected with weight Omega(P).
inline SelectionResult knockoff_select(const AggregateStats& stats, double q, const Confidence& omega) {
    require(q > 0 && q < 1, ErrorCode::config, "nominal level q must lie in (0, 1)");
    require(static_cast<Eigen::Index>(stats.p()) == stats.w.size() && stats.p_values.size() == stats.w.size(),
            ErrorCode::invalid_input, "knockoff_select: inconsistent aggregate lengths");
    const std::size_t p = stats.p();
    const double bound = q / omega.expected_value() - q;

    SelectionResult out;
    out.q = q;
    out.rho = order_by_w(stats.w);
    out.omega = Vector::Zero(static_cast<Eigen::Index>(p));

    std::vector<double> weight(p);
    double numerator = 1.0;
    double denominator = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        weight[k] = omega(stats.p_values(static_cast<Eigen::Index>(out.rho[k])));
        numerator += 1.0 - weight[k];
        denominator += weight[k];
        if (denominator > 0 && numerator / denominator <= bound) out.k_hat = k + 1;
    }
    if (out.k_hat) {
        for (std::size_t k = 0; k < *out.k_hat; ++k) out.omega(static_cast<Eigen::Index>(out.rho[k])) = weight[k];
    }
    return out;
}

/// Weighted false discovery proportion; 0 when nothing carries weight.
inline double wfdp(const SelectionResult& result, const std::vector<bool>& null_mask) {
    require(static_cast<Eigen::Index>(null_mask.size()) == result.omega.size(), ErrorCode::invalid_input,
            "wfdp: mask length differs from p");
    double total = 0, null_weight = 0;
    for (std::size_t j = 0; j < null_mask.size(); ++j) {
        const double w = result.omega(static_cast<Eigen::Index>(j));
        total += w;
        if (null_mask[j]) null_weight += w;
    }
    return total > 0 ? null_weight / total : 0.0;
}

/// feature_index,W,chi,P,omega,rejected
inline void write_selection_csv(std::ostream& os, const AggregateStats& stats, const SelectionResult& result) {
    os << "feature_index,W,chi,P,omega,rejected\n";
    for (std::size_t j = 0; j < stats.p(); ++j) {
        const auto e = static_cast<Eigen::Index>(j);
        os << j << ',' << format_real(stats.w(e)) << ',' << stats.chi[j] << ',' << format_real(stats.p_values(e)) << ','
           << format_real(result.omega(e)) << ',' << (result.rejected(j) ? 1 : 0) << '\n';
    }
}

}  // namespace knockagg

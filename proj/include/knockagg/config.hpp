#pragma once

// JSON experiment configs. A config holds base settings plus an optional
// "sweep" object whose keys each list values; the cartesian product of the
// lists yields one experiment point per combination, first key outermost.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knockagg/error.hpp"
#include "knockagg/format.hpp"
#include "knockagg/simlab.hpp"

namespace knockagg {

using Json = nlohmann::ordered_json;

namespace detail {

inline const std::set<std::string>& fdr_keys() {
    static const std::set<std::string> keys{"name", "kind", "full_scale", "p", "n", "m", "k", "A", "q", "sigma", "gamma",
                                            "omega", "wire_mode", "transport", "replicates", "seed", "method", "grid_points",
                                            "grid_min_ratio", "cv_folds", "cv_grid_points", "redraw_design", "node_sigmas",
                                            "sweep", "description"};
    return keys;
}

inline const std::set<std::string>& recovery_keys() {
    static const std::set<std::string> keys{"name", "kind", "full_scale", "p", "m_list", "q", "q_list", "seed",
                                            "replicates", "noiseless", "description"};
    return keys;
}

inline const std::set<std::string>& sweepable_keys() {
    static const std::set<std::string> keys{"p", "n", "m", "k", "A", "A_factor", "q", "sigma", "gamma", "omega", "wire_mode", "method"};
    return keys;
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("config key '") + key + "': " + e.what());
    }
}

inline std::uint64_t get_count(const Json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    require(v.is_number_integer() && v.get<long long>() >= 0, ErrorCode::config, std::string("config key '") + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

inline std::string get_string(const Json& j, const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    require(j.at(key).is_string(), ErrorCode::config, std::string("config key '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        require(allowed.count(key) > 0, ErrorCode::config, "unknown config key '" + key + "'");
    }
}

inline SigmaSpec parse_sigma(const std::string& text) {
    if (text == "identity") return SigmaSpec::identity();
    if (text == "paper_corr") return SigmaSpec::paper_corr();
    if (text.rfind("equicorr:", 0) == 0) {
        const std::string arg = text.substr(9);
        char* end = nullptr;
        const double rho = std::strtod(arg.c_str(), &end);
        require(end && *end == '\0' && !arg.empty() && rho > -1 && rho < 1, ErrorCode::config, "sigma: bad equicorr value '" + arg + "'");
        return SigmaSpec::equicorr(rho);
    }
    fail(ErrorCode::config, "unknown sigma '" + text + "' (expected identity, paper_corr or equicorr:RHO)");
}

/// A number, or {"factor": c, "divisor": d} meaning c * sqrt(2 ln p / d).
inline double parse_amplitude(const Json& a, Eigen::Index p) {
    if (a.is_number()) return a.get<double>();
    require(a.is_object(), ErrorCode::config, "A must be a number or {\"factor\", \"divisor\"}");
    for (const auto& [key, value] : a.items()) {
        require(key == "factor" || key == "divisor", ErrorCode::config, "unknown amplitude key '" + key + "'");
    }
    const double factor = get_or<double>(a, "factor", 1.0);
    const double divisor = get_or<double>(a, "divisor", 1.0);
    require(divisor > 0, ErrorCode::config, "amplitude divisor must be > 0");
    return factor * std::sqrt(2.0 * std::log(static_cast<double>(p)) / divisor);
}

}  // namespace detail

/// One experiment point from a flat JSON object (no sweep).
inline ExperimentConfig config_from_json(const Json& j) {
    require(j.is_object(), ErrorCode::config, "config must be a JSON object");
    detail::reject_unknown(j, detail::fdr_keys());
    ExperimentConfig c;
    c.name = detail::get_string(j, "name", c.name);
    c.p = static_cast<Eigen::Index>(detail::get_count(j, "p", static_cast<std::uint64_t>(c.p)));
    c.n = static_cast<Eigen::Index>(detail::get_count(j, "n", static_cast<std::uint64_t>(c.n)));
    c.m = detail::get_count(j, "m", c.m);
    c.k = static_cast<Eigen::Index>(detail::get_count(j, "k", static_cast<std::uint64_t>(c.k)));
    if (j.contains("A")) c.amplitude = detail::parse_amplitude(j.at("A"), c.p);
    c.q = detail::get_or<double>(j, "q", c.q);
    c.sigma = detail::parse_sigma(detail::get_string(j, "sigma", "identity"));
    c.gamma = parse_summary_spec(detail::get_string(j, "gamma", "weighted-sum"));
    c.omega = parse_confidence(detail::get_string(j, "omega", "step:0.5"));
    c.wire_mode = parse_wire_mode(detail::get_string(j, "wire_mode", "raw32"));
    const std::string transport = detail::get_string(j, "transport", "wire");
    require(transport == "wire" || transport == "in_memory", ErrorCode::config, "transport must be wire or in_memory");
    c.transport = transport == "wire" ? Transport::wire : Transport::in_memory;
    c.replicates = detail::get_count(j, "replicates", c.replicates);
    c.seed = detail::get_count(j, "seed", c.seed);
    c.method = parse_method(detail::get_string(j, "method", "knockagg"));
    c.grid.points = static_cast<int>(detail::get_count(j, "grid_points", static_cast<std::uint64_t>(c.grid.points)));
    c.grid.min_ratio = detail::get_or<double>(j, "grid_min_ratio", c.grid.min_ratio);
    c.cv.folds = static_cast<int>(detail::get_count(j, "cv_folds", static_cast<std::uint64_t>(c.cv.folds)));
    c.cv.grid.points = static_cast<int>(detail::get_count(j, "cv_grid_points", static_cast<std::uint64_t>(c.cv.grid.points)));
    c.redraw_design = detail::get_or<bool>(j, "redraw_design", c.redraw_design);
    c.node_sigmas = detail::get_or<std::vector<double>>(j, "node_sigmas", {});
    c.validate();
    return c;
}

struct ExperimentPoint {
    ExperimentConfig config;
    std::vector<std::pair<std::string, Json>> coordinates;  // sweep key -> value
};

struct ExperimentPlan {
    std::string name = "experiment";
    std::string kind = "fdr";
    bool full_scale = false;
    std::vector<std::string> sweep_keys;
    std::vector<ExperimentPoint> points;

    // kind == "recovery"
    Eigen::Index p = 200;
    std::vector<std::size_t> m_list;
    double q = 0.2;
    std::uint64_t seed = 1;
    std::size_t replicates = 20;
    RecoveryOptions recovery;
};

inline ExperimentPlan plan_from_json(const Json& root, std::optional<std::uint64_t> seed_override = std::nullopt) {
    require(root.is_object(), ErrorCode::config, "config must be a JSON object");
    ExperimentPlan plan;
    plan.name = detail::get_string(root, "name", plan.name);
    plan.kind = detail::get_string(root, "kind", plan.kind);
    plan.full_scale = detail::get_or<bool>(root, "full_scale", false);

    if (plan.kind == "recovery") {
        detail::reject_unknown(root, detail::recovery_keys());
        plan.p = static_cast<Eigen::Index>(detail::get_count(root, "p", static_cast<std::uint64_t>(plan.p)));
        for (auto m : detail::get_or<std::vector<std::uint64_t>>(root, "m_list", {4, 16, 64})) plan.m_list.push_back(m);
        plan.q = detail::get_or<double>(root, "q", plan.q);
        plan.recovery.q_list = detail::get_or<std::vector<double>>(root, "q_list", {});
        plan.recovery.noiseless = detail::get_or<bool>(root, "noiseless", false);
        plan.seed = seed_override.value_or(detail::get_count(root, "seed", plan.seed));
        plan.replicates = detail::get_count(root, "replicates", plan.replicates);
        require(plan.p >= 2 && !plan.m_list.empty(), ErrorCode::config, "recovery: need p >= 2 and a non-empty m_list");
        require(plan.q > 0 && plan.q < 1, ErrorCode::config, "recovery: q must lie in (0, 1)");
        require(plan.recovery.q_list.empty() || plan.recovery.q_list.size() == plan.m_list.size(), ErrorCode::config,
                "recovery: q_list needs one q per m");
        require(plan.replicates >= 1, ErrorCode::config, "recovery: replicates must be >= 1");
        return plan;
    }
    require(plan.kind == "fdr", ErrorCode::config, "config kind must be fdr or recovery");
    detail::reject_unknown(root, detail::fdr_keys());

    Json base = root;
    base.erase("sweep");
    base.erase("kind");
    base.erase("full_scale");
    base.erase("description");
    if (seed_override) base["seed"] = *seed_override;

    std::vector<std::vector<Json>> axes;
    if (root.contains("sweep")) {
        const Json& sweep = root.at("sweep");
        require(sweep.is_object(), ErrorCode::config, "sweep must be an object of value lists");
        for (const auto& [key, values] : sweep.items()) {
            require(detail::sweepable_keys().count(key) > 0, ErrorCode::config, "key '" + key + "' cannot be swept");
            require(values.is_array() && !values.empty(), ErrorCode::config, "sweep '" + key + "' must be a non-empty list");
            plan.sweep_keys.push_back(key);
            axes.emplace_back(values.begin(), values.end());
        }
    }
    std::vector<std::size_t> index(axes.size(), 0);
    while (true) {
        Json point = base;
        ExperimentPoint ep;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const std::string& key = plan.sweep_keys[a];
            const Json& value = axes[a][index[a]];
            ep.coordinates.emplace_back(key, value);
            if (key == "A_factor") {
                Json amp = {{"factor", value}, {"divisor", 1.0}};
                if (base.contains("A") && base.at("A").is_object() && base.at("A").contains("divisor")) amp["divisor"] = base.at("A").at("divisor");
                point["A"] = amp;
            } else {
                point[key] = value;
            }
        }
        ep.config = config_from_json(point);
        plan.points.push_back(std::move(ep));

        bool wrapped = true;
        for (std::size_t a = axes.size(); a-- > 0;) {
            if (++index[a] < axes[a].size()) {
                wrapped = false;
                break;
            }
            index[a] = 0;
        }
        if (wrapped) break;
    }
    return plan;
}

/// Text of every output file keyed by file name, plus a human summary.
struct ExperimentOutputs {
    std::map<std::string, std::string> files;
    std::string report;
};

namespace detail {

inline std::string json_label(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_real(v.get<double>());
    return v.dump();
}

inline std::string summary_header() {
    return "point,method,p,n,m,k,A,q,sigma,gamma,omega,wire_mode,replicates,fdp_mean,fdp_sd,power_mean,power_sd,wfdp_mean,"
           "wfdp_sd,hamming_mean,comm_bits\n";
}

}  // namespace detail

inline ExperimentOutputs run_plan(const ExperimentPlan& plan) {
    ExperimentOutputs out;
    std::ostringstream report;
    if (plan.kind == "recovery") {
        const auto rows = run_recovery_study(plan.p, plan.m_list, plan.q, plan.seed, plan.replicates, plan.recovery);
        std::ostringstream csv, dat;
        csv << "m,q,hamming_frac_mean,hamming_frac_sd,fdp_mean,power_mean,comm_bits\n";
        dat << "# m hamming_frac_mean hamming_frac_sd\n";
        for (const auto& r : rows) {
            csv << r.m << ',' << format_real(r.q) << ',' << format_real(r.hamming_frac_mean) << ',' << format_real(r.hamming_frac_sd)
                << ',' << format_real(r.fdp_mean) << ',' << format_real(r.power_mean) << ',' << r.comm_bits << '\n';
            dat << r.m << ' ' << format_real(r.hamming_frac_mean) << ' ' << format_real(r.hamming_frac_sd) << '\n';
            report << plan.name << ": m=" << r.m << " hamming/p=" << format_real(r.hamming_frac_mean) << " fdp=" << format_real(r.fdp_mean)
                   << " power=" << format_real(r.power_mean) << " comm_bits=" << r.comm_bits << '\n';
        }
        out.files[plan.name + "_recovery.csv"] = csv.str();
        out.files[plan.name + "_hamming.dat"] = dat.str();
        out.report = report.str();
        return out;
    }

    std::ostringstream metrics, summary;
    metrics << metrics_csv_header();
    summary << detail::summary_header();
    // plot series: first sweep key on the x axis, remaining keys label the series
    std::map<std::string, std::ostringstream> fdp_dat, power_dat;
    for (std::size_t idx = 0; idx < plan.points.size(); ++idx) {
        const auto& point = plan.points[idx];
        const ExperimentConfig& c = point.config;
        const ExperimentTable table = run_experiment(c);
        write_metrics_csv(metrics, c, table, false);
        const auto& mean = table.summary.mean;
        const auto& sd = table.summary.sd;
        summary << idx << ',' << to_string(c.method) << ',' << c.p << ',' << c.n << ',' << c.m << ',' << c.k << ','
                << format_real(c.amplitude) << ',' << format_real(c.q) << ',' << to_string(c.sigma) << ',' << to_string(c.gamma) << ','
                << to_string(c.omega) << ',' << to_string(c.wire_mode) << ',' << c.replicates << ',' << format_real(mean.fdp) << ','
                << format_real(sd.fdp) << ',' << format_real(mean.power) << ',' << format_real(sd.power) << ',' << format_real(mean.wfdp)
                << ',' << format_real(sd.wfdp) << ',' << format_real(mean.hamming) << ',' << format_real(mean.comm_bits) << '\n';

        std::string label, coords;
        std::string x = std::to_string(idx);
        for (std::size_t a = 0; a < point.coordinates.size(); ++a) {
            const auto& [key, value] = point.coordinates[a];
            coords += (coords.empty() ? "" : " ") + key + "=" + detail::json_label(value);
            if (a == 0) {
                x = value.is_number() ? detail::json_label(value) : std::to_string(idx);
            } else {
                label += "_" + key + detail::json_label(value);
            }
        }
        auto line = [&](double m_, double s_) { return x + ' ' + format_real(m_) + ' ' + format_real(s_) + '\n'; };
        fdp_dat[label] << line(mean.fdp, sd.fdp);
        power_dat[label] << line(mean.power, sd.power);
        report << plan.name << " [" << (coords.empty() ? "base" : coords) << "] method=" << to_string(c.method)
               << " mean_fdp=" << format_real(mean.fdp) << " sd_fdp=" << format_real(sd.fdp) << " mean_power=" << format_real(mean.power)
               << '\n';
    }
    out.files[plan.name + "_metrics.csv"] = metrics.str();
    out.files[plan.name + "_summary.csv"] = summary.str();
    const std::string x_name = plan.sweep_keys.empty() ? "point" : plan.sweep_keys.front();
    for (auto& [label, stream] : fdp_dat) out.files[plan.name + "_fdp" + label + ".dat"] = "# " + x_name + " mean sd\n" + stream.str();
    for (auto& [label, stream] : power_dat) out.files[plan.name + "_power" + label + ".dat"] = "# " + x_name + " mean sd\n" + stream.str();
    out.report = report.str();
    return out;
}

}  // namespace knockagg

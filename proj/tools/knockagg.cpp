// knockagg: batch front end for the one-shot aggregation pipeline.
//
//   knockagg node --design X.csv --response y.csv --out node0.kag
//   knockagg aggregate node*.kag --q 0.2 --out selection.csv
//   knockagg baseline --method ols_bhq --design X0.csv --response y0.csv ...
//   knockagg experiment configs/fig1_iid_small.json --out-dir results
//   knockagg validate-knockoffs --design X.csv
//
// Exit status: 0 success, 1 validation or parse error, 2 runtime or I/O error.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knockagg/knockagg.hpp"

namespace fs = std::filesystem;
using namespace knockagg;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;

std::uint64_t parse_seed_text(const std::string& text, const char* source) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used, 10);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == text.size() && !text.empty() && text.front() != '-', ErrorCode::config,
            std::string(source) + ": seed must be a nonnegative integer, got '" + text + "'");
    return v;
}

/// --seed wins over KNOCKAGG_SEED; nullopt leaves the caller's default.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::string>& flag) {
    if (flag) return parse_seed_text(*flag, "--seed");
    if (const char* env = std::getenv("KNOCKAGG_SEED"); env && *env) return parse_seed_text(env, "KNOCKAGG_SEED");
    return std::nullopt;
}

std::string selection_csv(const AggregateStats& stats, const SelectionResult& selection) {
    std::ostringstream os;
    write_selection_csv(os, stats, selection);
    return os.str();
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_file_atomic(out, text);
    }
}

struct NodeArgs {
    std::string design, response, mode = "raw32", out;
    std::optional<std::string> seed;
    std::uint32_t node_id = 0;
    int grid_points = 200;
};

int cmd_node(const NodeArgs& a) {
    NodeData data;
    data.x = read_matrix_file(a.design);
    data.y = read_vector_file(a.response);
    data.node_id = a.node_id;
    require(data.y.size() == data.n(), ErrorCode::invalid_input,
            "response has " + std::to_string(data.y.size()) + " entries but the design has " + std::to_string(data.n()) + " rows");
    require(data.n() >= 2 * data.p(), ErrorCode::insufficient_rows,
            "knockoffs need n >= 2p rows (n=" + std::to_string(data.n()) + ", p=" + std::to_string(data.p()) + ")");
    if (!has_unit_columns(data.x)) data.x = normalize_columns(data.x);
    LambdaGrid grid;
    grid.points = a.grid_points;
    const std::uint64_t seed = resolve_seed(a.seed).value_or(1);
    const NodeStatistics stats = run_knockoff_node(data, seed, grid);
    write_file_atomic(a.out, encode_summary(stats, parse_wire_mode(a.mode), a.node_id));
    return exit_ok;
}

struct AggregateArgs {
    std::vector<std::string> inputs;
    double q = 0.2;
    std::string gamma = "weighted-sum", omega = "step:0.5", out;
};

int cmd_aggregate(const AggregateArgs& a) {
    require(a.q > 0 && a.q < 1, ErrorCode::config, "--q must lie in (0, 1)");
    const SummarySpec gamma = parse_summary_spec(a.gamma);
    const Confidence omega = parse_confidence(a.omega);
    std::vector<NodeSummary> summaries;
    for (const auto& path : a.inputs) {
        const auto bytes = read_binary_file(path);
        try {
            for (auto& s : read_summaries(bytes)) summaries.push_back(std::move(s));
        } catch (const Error& e) {
            const std::string what = e.what();
            const std::string prefix = std::string(to_string(e.code())) + ": ";
            throw Error(e.code(), path + ": " + (what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what));
        }
    }
    require(!summaries.empty(), ErrorCode::invalid_input, "no summaries given");
    if (gamma.kind != SummarySpec::Kind::weighted_sum || !gamma.weights.empty()) gamma.validate(summaries.size());
    const AggregateStats stats = aggregate(summaries, gamma);
    emit(a.out, selection_csv(stats, knockoff_select(stats, a.q, omega)));
    return exit_ok;
}

struct BaselineArgs {
    std::string method;
    std::vector<std::string> designs, responses;
    double q = 0.2;
    std::optional<std::string> seed;
    std::string out;
};

int cmd_baseline(const BaselineArgs& a) {
    require(a.q > 0 && a.q < 1, ErrorCode::config, "--q must lie in (0, 1)");
    require(!a.designs.empty() && a.designs.size() == a.responses.size(), ErrorCode::config,
            "give one --response per --design");
    const Method method = parse_method(a.method);
    require(method != Method::knockagg, ErrorCode::config, "baseline: method must be ols_bhq or lasso_vote");
    std::vector<NodeData> nodes;
    for (std::size_t i = 0; i < a.designs.size(); ++i) {
        NodeData d;
        d.x = read_matrix_file(a.designs[i]);
        d.y = read_vector_file(a.responses[i]);
        d.node_id = static_cast<std::uint32_t>(i);
        require(d.y.size() == d.n(), ErrorCode::invalid_input, a.responses[i] + ": length differs from the design's row count");
        nodes.push_back(std::move(d));
    }
    const std::size_t m = nodes.size();
    const auto p = static_cast<std::size_t>(nodes.front().p());
    for (const auto& d : nodes) require(static_cast<std::size_t>(d.p()) == p, ErrorCode::invalid_input, "designs disagree on p");

    // W, chi and P hold the method's own evidence: |z|, 0 and the normal
    // p-value for OLS; the vote count twice and no p-value for the Lasso vote.
    std::vector<double> w(p, 0.0), pv(p, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> chi(p, 0);
    std::vector<bool> rejected(p, false);
    if (method == Method::ols_bhq) {
        std::vector<OlsNodeSummary> summaries;
        for (const auto& d : nodes) summaries.push_back(ols_node_summary(d));
        const OlsAggregate agg = ols_aggregate(summaries, a.q);
        for (std::size_t j = 0; j < p; ++j) {
            w[j] = std::abs(agg.z(static_cast<Eigen::Index>(j)));
            pv[j] = agg.pvalues(static_cast<Eigen::Index>(j));
        }
        for (std::size_t j : agg.selection.rejected) rejected[j] = true;
    } else {
        const std::uint64_t seed = resolve_seed(a.seed).value_or(1);
        std::vector<std::vector<std::size_t>> supports;
        for (std::size_t i = 0; i < m; ++i) supports.push_back(lasso_cv_support(nodes[i], CvOptions{}, derive_seed(seed, {stream::node, i})));
        for (const auto& s : supports)
            for (std::size_t j : s) ++chi[j];
        for (std::size_t j = 0; j < p; ++j) w[j] = chi[j];
        for (std::size_t j : majority_vote(supports, m)) rejected[j] = true;
    }
    std::ostringstream os;
    os << "feature_index,W,chi,P,omega,rejected\n";
    for (std::size_t j = 0; j < p; ++j) {
        os << j << ',' << format_real(w[j]) << ',' << chi[j] << ',' << format_real(pv[j]) << ',' << (rejected[j] ? 1 : 0) << ','
           << (rejected[j] ? 1 : 0) << '\n';
    }
    emit(a.out, os.str());
    return exit_ok;
}

struct ExperimentArgs {
    std::string config, out_dir = ".";
    std::optional<std::string> seed;
    std::optional<std::size_t> replicates;
    bool full_scale = false;
};

int cmd_experiment(const ExperimentArgs& a) {
    Json root;
    try {
        root = Json::parse(read_text_file(a.config));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::config, a.config + ": " + e.what());
    }
    if (a.replicates) {
        require(root.is_object(), ErrorCode::config, "config must be a JSON object");
        root["replicates"] = *a.replicates;
    }
    const ExperimentPlan plan = plan_from_json(root, resolve_seed(a.seed));
    require(!plan.full_scale || a.full_scale, ErrorCode::config,
            a.config + " is a full-scale config; pass --full-scale to run it");
    const ExperimentOutputs outputs = run_plan(plan);
    fs::create_directories(a.out_dir);
    for (const auto& [name, text] : outputs.files) write_file_atomic(fs::path(a.out_dir) / name, text);
    std::cout << outputs.report;
    return exit_ok;
}

struct ValidateArgs {
    std::string design, knockoffs, s_file, out;
    std::optional<std::string> seed;
    double tolerance = 1e-8;
};

int cmd_validate(const ValidateArgs& a) {
    Matrix x = read_matrix_file(a.design);
    if (!has_unit_columns(x)) x = normalize_columns(x);
    Matrix xk;
    Vector s;
    if (a.knockoffs.empty()) {
        require(a.s_file.empty(), ErrorCode::config, "--s needs --knockoffs");
        const KnockoffDesign design = construct_knockoffs(x, resolve_seed(a.seed).value_or(1));
        xk = design.x_tilde;
        s = design.s;
        if (!a.out.empty()) write_file_atomic(a.out, format_matrix(xk));
    } else {
        require(!a.s_file.empty(), ErrorCode::config, "--knockoffs needs --s");
        xk = read_matrix_file(a.knockoffs);
        s = read_vector_file(a.s_file);
    }
    const KnockoffReport report = validate_knockoffs(x, xk, s, a.tolerance);
    std::cout << "gram_residual " << format_real(report.gram_residual) << "\ncross_residual " << format_real(report.cross_residual)
              << "\n" << (report.passed ? "ok" : "FAILED") << "\n";
    return report.passed ? exit_ok : exit_validation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Communication-efficient FDR control from decentralized knockoff summaries"};
    app.require_subcommand(1);

    NodeArgs node;
    auto* node_cmd = app.add_subcommand("node", "run the knockoff filter on one node and write its message");
    node_cmd->add_option("--design", node.design, "design matrix (CSV or whitespace)")->required();
    node_cmd->add_option("--response", node.response, "response vector")->required();
    node_cmd->add_option("--mode", node.mode, "wire mode: binary-median, fixed16 or raw32")->capture_default_str();
    node_cmd->add_option("--seed", node.seed, "node seed (overrides KNOCKAGG_SEED)");
    node_cmd->add_option("--node-id", node.node_id, "node id written into the header")->capture_default_str();
    node_cmd->add_option("--grid-points", node.grid_points, "lambda grid size")->capture_default_str();
    node_cmd->add_option("--out", node.out, "output message file")->required();

    AggregateArgs agg;
    auto* agg_cmd = app.add_subcommand("aggregate", "combine node messages and select features");
    agg_cmd->add_option("summaries", agg.inputs, "message files (bare or length-prefixed streams)")->required();
    agg_cmd->add_option("--q", agg.q, "nominal level in (0, 1)")->capture_default_str();
    agg_cmd->add_option("--gamma", agg.gamma, "max | sum-top-r:R | product-top-r:R | weighted-sum")->capture_default_str();
    agg_cmd->add_option("--omega", agg.omega, "step:C | linear | poly:D")->capture_default_str();
    agg_cmd->add_option("--out", agg.out, "selection CSV (stdout when omitted)");

    BaselineArgs base;
    auto* base_cmd = app.add_subcommand("baseline", "OLS + BHq or Lasso-CV majority vote over node files");
    base_cmd->add_option("--method", base.method, "ols_bhq or lasso_vote")->required();
    base_cmd->add_option("--design", base.designs, "design file, once per node")->required();
    base_cmd->add_option("--response", base.responses, "response file, once per node")->required();
    base_cmd->add_option("--q", base.q, "nominal level in (0, 1)")->capture_default_str();
    base_cmd->add_option("--seed", base.seed, "fold-shuffle seed for lasso_vote");
    base_cmd->add_option("--out", base.out, "selection CSV (stdout when omitted)");

    ExperimentArgs exp;
    auto* exp_cmd = app.add_subcommand("experiment", "run a JSON experiment config");
    exp_cmd->add_option("config", exp.config, "config file")->required();
    exp_cmd->add_option("--out-dir", exp.out_dir, "directory for CSV and plot-data files")->capture_default_str();
    exp_cmd->add_option("--seed", exp.seed, "seed override (beats KNOCKAGG_SEED and the config)");
    exp_cmd->add_option("--replicates", exp.replicates, "replicate count override")->check(CLI::PositiveNumber);
    exp_cmd->add_flag("--full-scale", exp.full_scale, "allow configs marked full_scale");

    ValidateArgs val;
    auto* val_cmd = app.add_subcommand("validate-knockoffs", "check the knockoff Gram identities");
    val_cmd->add_option("--design", val.design, "design matrix")->required();
    val_cmd->add_option("--knockoffs", val.knockoffs, "knockoff matrix; constructed from the seed when omitted");
    val_cmd->add_option("--s", val.s_file, "vector s used to build the knockoffs");
    val_cmd->add_option("--seed", val.seed, "construction seed");
    val_cmd->add_option("--tol", val.tolerance, "residual tolerance")->capture_default_str();
    val_cmd->add_option("--out", val.out, "write the constructed knockoffs here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }

    try {
        if (*node_cmd) return cmd_node(node);
        if (*agg_cmd) return cmd_aggregate(agg);
        if (*base_cmd) return cmd_baseline(base);
        if (*exp_cmd) return cmd_experiment(exp);
        if (*val_cmd) return cmd_validate(val);
    } catch (const Error& e) {
        std::cerr << "knockagg: " << e.what() << '\n';
        return e.is_runtime() ? exit_runtime : exit_validation;
    } catch (const IoError& e) {
        std::cerr << "knockagg: " << e.what() << '\n';
        return exit_runtime;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "knockagg: " << e.what() << '\n';
        return exit_runtime;
    } catch (const std::exception& e) {
        std::cerr << "knockagg: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_validation;
}

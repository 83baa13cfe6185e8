#pragma once
#include <rgw/rgw.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rgw::cli {

enum ExitCode : int { exit_ok = 0, exit_input = 1, exit_not_converged = 2, exit_selfcheck = 3 };

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

struct Logger
{
    std::ostream& sink;
    LogLevel level = LogLevel::warn;

    static LogLevel from_env()
    {
        const char* raw = std::getenv("RGW_LOG");
        if (!raw) return LogLevel::warn;
        const std::string v = raw;
        if (v == "error") return LogLevel::error;
        if (v == "info") return LogLevel::info;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::warn;
    }

    void operator()(LogLevel at, const std::string& message) const
    {
        static constexpr const char* names[] = {"error", "warn", "info", "debug"};
        if (at <= level) sink << "[rgw " << names[static_cast<int>(at)] << "] " << message << '\n';
    }
};

struct SolverFlags
{
    RgwParams params{};
    std::string step_mode = "practical";
    std::uint64_t seed = 0;

    void attach(CLI::App* app)
    {
        app->add_option("--rho1", params.rho1, "source marginal KL radius")->capture_default_str();
        app->add_option("--rho2", params.rho2, "target marginal KL radius")->capture_default_str();
        app->add_option("--tau1", params.tau1, "source marginal penalty")->capture_default_str();
        app->add_option("--tau2", params.tau2, "target marginal penalty")->capture_default_str();
        app->add_option("--step-t", params.t, "coupling step size")->capture_default_str();
        app->add_option("--step-c", params.c, "alpha step size")->capture_default_str();
        app->add_option("--step-r", params.r, "beta step size")->capture_default_str();
        app->add_option("--max-iters", params.max_outer_iterations, "outer iteration budget")->capture_default_str();
        app->add_option("--tol", params.outer_tolerance, "stop when the iterate change falls below this")
            ->capture_default_str();
        app->add_option("--inner-iters", params.inner.max_inner_iterations, "scaling iteration cap")
            ->capture_default_str();
        app->add_option("--inner-tol", params.inner.inner_tolerance, "scaling tolerance")->capture_default_str();
        app->add_option("--step-mode", step_mode, "practical or theoretical")
            ->check(CLI::IsMember({"practical", "theoretical"}))
            ->capture_default_str();
        app->add_option("--seed", seed, "random seed")->capture_default_str();
    }

    RgwParams resolved() const
    {
        RgwParams p = params;
        p.step_mode = step_mode == "theoretical" ? StepMode::theoretical : StepMode::practical;
        return p;
    }
};

namespace detail {

inline std::string json_to_arg(const nlohmann::json& v)
{
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_array()) {
        std::string out;
        for (const auto& item : v) out += (out.empty() ? "" : ",") + json_to_arg(item);
        return out;
    }
    return v.dump();
}

/// Fills options the command line left unset from a JSON object keyed by flag name.
inline void merge_config(CLI::App* sub, const std::string& path)
{
    std::ifstream in(path);
    rgw::detail::require(in.good(), ErrorCode::io_error, "cannot open config " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::parse_error, "config " + path + ": " + e.what());
    }
    rgw::detail::require(doc.is_object(), ErrorCode::parse_error, "config " + path + " must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
        const std::string flag = key.starts_with("--") ? key : "--" + key;
        CLI::Option* opt = nullptr;
        try {
            opt = sub->get_option(flag);
        } catch (const CLI::OptionNotFound&) {
            throw Error(ErrorCode::invalid_params, "config " + path + ": unknown key '" + key + "'");
        }
        if (opt->count() > 0) continue;
        if (value.is_array()) {
            std::vector<std::string> parts;
            for (const auto& item : value) parts.push_back(json_to_arg(item));
            opt->add_result(parts);
        } else {
            opt->add_result(json_to_arg(value));
        }
        opt->run_callback();
    }
}

inline std::string join(const std::vector<double>& xs)
{
    std::string out;
    for (double x : xs) out += (out.empty() ? "" : ",") + format_double(x);
    return out;
}

inline ProbabilityVector marginal_for(const std::string& kind, const std::optional<Graph>& graph, Eigen::Index size,
                                      const std::string& weights_path, const std::string& side)
{
    if (kind == "uniform") return ProbabilityVector::uniform(size);
    if (kind == "degree") {
        rgw::detail::require(graph.has_value(), ErrorCode::invalid_params,
                             "--marginals degree needs edge-list inputs");
        return degree_marginal(*graph);
    }
    rgw::detail::require(!weights_path.empty(), ErrorCode::invalid_params,
                         "--marginals file needs --" + side + "-weights");
    auto w = load_weights(weights_path);
    rgw::detail::require(w.size() == size, ErrorCode::dimension_mismatch,
                         weights_path + " has " + std::to_string(w.size()) + " weights for " + std::to_string(size)
                             + " points");
    return w;
}

struct LoadedSpace
{
    CostMatrix cost;
    std::optional<Graph> graph;
};

inline LoadedSpace load_space(const std::string& kind, const std::string& path)
{
    rgw::detail::require(std::filesystem::exists(path), ErrorCode::io_error, "input file not found: " + path);
    if (kind == "edges") {
        Graph g = load_edge_list(path);
        rgw::detail::require(g.node_count >= 1, ErrorCode::empty_file, path + " has no nodes");
        return {adjacency_cost(g), std::move(g)};
    }
    if (kind == "points") return {pairwise_distances(load_point_cloud(path)), std::nullopt};
    return {load_dense_matrix(path), std::nullopt};
}

} // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    Logger log{err, Logger::from_env()};
    CLI::App app{"Robust Gromov-Wasserstein solver"};
    app.require_subcommand(1);
    std::string config_path;

    // solve
    auto* solve = app.add_subcommand("solve", "solve one robust GW instance");
    SolverFlags solve_flags;
    solve_flags.attach(solve);
    std::string source_path, target_path, input_kind = "edges", marginals = "uniform", out_prefix = "rgw";
    std::string source_weights, target_weights, ground_truth;
    solve->add_option("--source", source_path, "source input file")->required();
    solve->add_option("--target", target_path, "target input file")->required();
    solve->add_option("--input-kind", input_kind, "edges, points or matrix")
        ->check(CLI::IsMember({"edges", "points", "matrix"}))
        ->capture_default_str();
    solve->add_option("--marginals", marginals, "uniform, degree or file")
        ->check(CLI::IsMember({"uniform", "degree", "file"}))
        ->capture_default_str();
    solve->add_option("--source-weights", source_weights, "weights file for --marginals file");
    solve->add_option("--target-weights", target_weights, "weights file for --marginals file");
    solve->add_option("--out", out_prefix, "output prefix")->capture_default_str();
    solve->add_option("--ground-truth", ground_truth, "report matching accuracy against a known alignment")
        ->check(CLI::IsMember({"identity"}));
    solve->add_option("--config", config_path, "JSON file with flag defaults");

    // toy2d
    auto* toy = app.add_subcommand("toy2d", "contamination and bound sweeps on a 2D shape");
    SolverFlags toy_flags;
    toy_flags.attach(toy);
    std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2};
    std::vector<double> rhos{0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
    double rho_epsilon = 0.2;
    int n_source = 60, n_target = 80, n_outliers = 10, toy_jobs = 1;
    double overlap = 1e-3;
    std::string toy_out = ".";
    toy->add_option("--epsilons", epsilons, "outlier fractions")->delimiter(',')->capture_default_str();
    toy->add_option("--rhos", rhos, "source radii for the bound sweep")->delimiter(',')->capture_default_str();
    toy->add_option("--rho-epsilon", rho_epsilon, "outlier fraction of the bound sweep")->capture_default_str();
    toy->add_option("--n-source", n_source, "clean source points")->capture_default_str();
    toy->add_option("--n-target", n_target, "target points")->capture_default_str();
    toy->add_option("--n-outliers", n_outliers, "outlier atoms")->capture_default_str();
    toy->add_option("--overlap", overlap, "cross mass between clean and outlier weights")->capture_default_str();
    toy->add_option("--jobs", toy_jobs, "worker threads")->capture_default_str();
    toy->add_option("--out", toy_out, "output directory")->capture_default_str();
    toy->add_option("--config", config_path, "JSON file with flag defaults");

    // bench
    auto* bench = app.add_subcommand("bench", "synthetic subgraph alignment benchmark");
    SolverFlags bench_flags;
    bench_flags.attach(bench);
    BenchConfig bench_cfg;
    std::vector<std::uint64_t> bench_seeds{0, 1, 2, 3, 4};
    std::string bench_marginals = "uniform", bench_out = "bench.csv";
    bench->add_option("--nodes", bench_cfg.nodes, "target graph sizes")->delimiter(',')->capture_default_str();
    bench->add_option("--fractions", bench_cfg.fractions, "subgraph fractions")->delimiter(',')->capture_default_str();
    bench->add_option("--seeds", bench_seeds, "graph seeds")->delimiter(',')->capture_default_str();
    bench->add_option("--attachment", bench_cfg.attachment, "edges per new BA node")->capture_default_str();
    bench->add_option("--marginals", bench_marginals, "uniform or degree")
        ->check(CLI::IsMember({"uniform", "degree"}))
        ->capture_default_str();
    bench->add_option("--jobs", bench_cfg.jobs, "worker threads")->capture_default_str();
    bench->add_option("--out", bench_out, "CSV output path")->capture_default_str();
    bench->add_option("--config", config_path, "JSON file with flag defaults");

    auto* selfcheck = app.add_subcommand("selfcheck", "run the brute-force oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_input;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        if (!config_path.empty()) detail::merge_config(active, config_path);

        if (active == selfcheck) return run_selfcheck(out) ? exit_ok : exit_selfcheck;

        if (active == solve) {
            const RgwParams params = solve_flags.resolved();
            params.validate();
            auto src = detail::load_space(input_kind, source_path);
            auto tgt = detail::load_space(input_kind, target_path);
            const auto mu = detail::marginal_for(marginals, src.graph, src.cost.size(), source_weights, "source");
            const auto nu = detail::marginal_for(marginals, tgt.graph, tgt.cost.size(), target_weights, "target");
            log(LogLevel::info, "solve " + std::to_string(src.cost.size()) + "x" + std::to_string(tgt.cost.size())
                                    + " params " + params_json(params).dump() + " seed "
                                    + std::to_string(solve_flags.seed));
            const auto sol = solve_rgw(src.cost, tgt.cost, mu, nu, Coupling::product(mu, nu), params);
            RunMetadata meta{params, solve_flags.seed, "solve"};
            meta.extra["marginals"] = marginals;
            meta.extra["source"] = source_path;
            meta.extra["target"] = target_path;
            if (ground_truth == "identity") {
                const auto match = predicted_matching(sol.pi);
                int hits = 0;
                for (std::size_t i = 0; i < match.size(); ++i) hits += match[i] == static_cast<int>(i);
                const double accuracy = 100.0 * hits / static_cast<double>(match.size());
                meta.extra["accuracy"] = accuracy;
                out << "accuracy " << format_double(accuracy) << '\n';
            }
            write_solution(out_prefix, sol.pi, sol.alpha, sol.beta, sol.report, meta);
            for (const auto& w : sol.report.warnings) log(LogLevel::warn, w);
            out << "objective " << format_double(sol.report.final_objective()) << " iterations "
                << sol.report.iterations << " converged " << (sol.report.converged ? "true" : "false") << '\n';
            return sol.report.converged ? exit_ok : exit_not_converged;
        }

        if (active == toy) {
            const RgwParams params = toy_flags.resolved();
            params.validate();
            rgw::detail::require(!epsilons.empty(), ErrorCode::invalid_params, "--epsilons is empty");
            rgw::detail::require(!rhos.empty(), ErrorCode::invalid_params, "--rhos is empty");
            for (double e : epsilons)
                rgw::detail::require(e >= 0.0 && e < 1.0, ErrorCode::invalid_params, "--epsilons entries must lie in [0, 1)");
            for (double r : rhos) rgw::detail::require(r >= 0.0, ErrorCode::invalid_params, "--rhos entries must be >= 0");
            rgw::detail::require(rho_epsilon >= 0.0 && rho_epsilon < 1.0, ErrorCode::invalid_params,
                                 "--rho-epsilon must lie in [0, 1)");
            rgw::detail::require(n_source >= 1 && n_target >= 1 && n_outliers >= 1, ErrorCode::invalid_params,
                                 "--n-source, --n-target and --n-outliers must be positive");
            SweepOptions options;
            options.params = params;
            options.balanced = balanced_from(params);
            options.n_outliers = n_outliers;
            options.overlap = overlap;
            options.seed = toy_flags.seed;
            options.jobs = toy_jobs;
            log(LogLevel::info, "toy2d params " + params_json(params).dump() + " seed " + std::to_string(options.seed));
            const auto clouds = make_toy_clouds(n_source, n_target, options.seed);
            const auto by_eps = contamination_sweep(clouds.source, clouds.target, OutlierBox{}, epsilons, options);
            const auto by_rho = rho_sweep(clouds.source, clouds.target, OutlierBox{}, rho_epsilon, rhos, options);
            std::filesystem::create_directories(toy_out);
            const auto dir = std::filesystem::path(toy_out);
            {
                auto f = rgw::detail::open_output((dir / "values_vs_epsilon.csv").string());
                write_sweep_csv(f, by_eps);
            }
            {
                auto f = rgw::detail::open_output((dir / "bound_vs_rho.csv").string());
                write_rho_csv(f, by_rho);
            }
            for (const auto& r : by_eps)
                if (!r.error.empty()) log(LogLevel::warn, "epsilon " + format_double(r.epsilon) + ": " + r.error);
            for (const auto& r : by_rho)
                if (!r.error.empty()) log(LogLevel::warn, "rho " + format_double(r.rho1) + ": " + r.error);
            out << "wrote " << (dir / "values_vs_epsilon.csv").string() << " and " << (dir / "bound_vs_rho.csv").string()
                << '\n';
            return exit_ok;
        }

        // bench
        bench_cfg.params = bench_flags.resolved();
        bench_cfg.seeds = bench_seeds;
        bench_cfg.marginals = bench_marginals == "degree" ? MarginalKind::degree : MarginalKind::uniform;
        log(LogLevel::info, "bench params " + params_json(bench_cfg.params).dump());
        const auto rows = run_alignment_benchmark(bench_cfg);
        {
            auto f = rgw::detail::open_output(bench_out);
            write_bench_csv(f, rows);
        }
        std::map<std::tuple<int, double, std::string>, std::pair<double, int>> summary;
        int succeeded = 0;
        for (const auto& r : rows) {
            if (!r.error.empty()) {
                log(LogLevel::warn, r.method + " nodes " + std::to_string(r.nodes) + " seed " + std::to_string(r.seed)
                                        + ": " + r.error);
                continue;
            }
            ++succeeded;
            auto& [sum, count] = summary[{r.nodes, r.fraction, r.method}];
            sum += r.accuracy;
            ++count;
        }
        out << std::left << std::setw(8) << "nodes" << std::setw(10) << "fraction" << std::setw(10) << "method"
            << "mean_accuracy\n";
        for (const auto& [key, acc] : summary) {
            const auto& [nodes, fraction, method] = key;
            out << std::left << std::setw(8) << nodes << std::setw(10) << format_double(fraction) << std::setw(10)
                << method << format_double(acc.first / acc.second) << '\n';
        }
        return succeeded > 0 ? exit_ok : exit_input;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }
}

} // namespace rgw::cli

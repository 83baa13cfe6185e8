#pragma once
#include <rgw/bpalm.hpp>
#include <rgw/error.hpp>
#include <rgw/graph_bench.hpp>
#include <rgw/robustness.hpp>

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace rgw {

inline constexpr std::string_view version = "0.1.0";
inline constexpr int report_schema_version = 1;

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot write " + path);
    return out;
}

template <class T>
bool parse_number(std::string_view token, T& value)
{
    token = trim(token);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    return ec == std::errc{} && ptr == token.data() + token.size() && !token.empty();
}

} // namespace detail

/// Shortest decimal round-trip text for x ("nan"/"inf" for non-finite); locale-independent.
inline std::string format_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Fixed 17-significant-digit scientific form, as used in coupling files.
inline std::string format_scientific(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific, 16);
    return std::string(buf, res.ptr);
}

// Edge lists --------------------------------------------------------------------------

/// `u v` per line, `#` comments. A `# nodes=N` comment fixes the node count.
inline Graph parse_edge_list(std::istream& in, const std::string& name = "<stream>")
{
    std::vector<Edge> edges;
    int declared = -1;
    int max_index = -1;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            auto body = detail::trim(view.substr(1));
            if (body.starts_with("nodes=")) {
                detail::require(detail::parse_number(body.substr(6), declared) && declared >= 0,
                                ErrorCode::parse_error,
                                name + ":" + std::to_string(lineno) + ": bad nodes header");
            }
            continue;
        }
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = detail::trim(view.substr(0, hash));
        std::istringstream fields{std::string(view)};
        std::string a, b, extra;
        fields >> a >> b;
        int u = 0, v = 0;
        const bool ok = detail::parse_number(a, u) && detail::parse_number(b, v) && !(fields >> extra) && u >= 0
                        && v >= 0;
        detail::require(ok, ErrorCode::parse_error,
                        name + ":" + std::to_string(lineno) + ": expected two node indices, got '" + std::string(view)
                            + "'");
        detail::require(u != v, ErrorCode::self_loop,
                        name + ":" + std::to_string(lineno) + ": self loop at node " + std::to_string(u));
        edges.emplace_back(u, v);
        max_index = std::max({max_index, u, v});
    }
    int nodes = max_index + 1;
    if (declared >= 0) {
        detail::require(declared >= nodes, ErrorCode::parse_error,
                        name + ": nodes=" + std::to_string(declared) + " but index " + std::to_string(max_index)
                            + " appears");
        nodes = declared;
    }
    return make_graph(nodes, std::move(edges));
}

inline Graph load_edge_list(const std::string& path)
{
    auto in = detail::open_input(path);
    return parse_edge_list(in, path);
}

inline void write_edge_list(std::ostream& out, const Graph& g)
{
    out << "# nodes=" << g.node_count << '\n';
    for (const auto& [u, v] : g.edges) out << u << ' ' << v << '\n';
}

inline void write_edge_list(const std::string& path, const Graph& g)
{
    auto out = detail::open_output(path);
    write_edge_list(out, g);
    detail::require(out.good(), ErrorCode::io_error, "failed writing " + path);
}

// Dense CSV matrices ----------------------------------------------------------------

/// Comma-separated rows of reals; blank lines and `#` lines are skipped.
inline Matrix parse_csv_matrix(std::istream& in, const std::string& name = "<stream>")
{
    std::vector<std::vector<double>> rows;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const std::string_view view = detail::trim(line);
        if (view.empty() || view.front() == '#') continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (true) {
            const auto comma = view.find(',', pos);
            const auto token = view.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
            double value = 0.0;
            detail::require(detail::parse_number(token, value), ErrorCode::parse_error,
                            name + ":" + std::to_string(lineno) + ": bad number '" + std::string(detail::trim(token))
                                + "'");
            row.push_back(value);
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(ErrorCode::ragged_rows, name + ": row " + std::to_string(rows.size()) + " has "
                                                    + std::to_string(row.size()) + " columns, expected "
                                                    + std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
    }
    detail::require(!rows.empty(), ErrorCode::empty_file, name + " contains no data rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline Matrix load_point_cloud(const std::string& path)
{
    auto in = detail::open_input(path);
    return parse_csv_matrix(in, path);
}

/// Square distance matrix; symmetry and the zero diagonal are checked by CostMatrix.
inline CostMatrix load_dense_matrix(const std::string& path)
{
    auto in = detail::open_input(path);
    return CostMatrix(parse_csv_matrix(in, path));
}

/// One weight per line (or one CSV row/column); renormalized explicitly.
inline ProbabilityVector load_weights(const std::string& path)
{
    auto in = detail::open_input(path);
    const Matrix m = parse_csv_matrix(in, path);
    detail::require(m.rows() == 1 || m.cols() == 1, ErrorCode::parse_error, path + ": weights must be a vector");
    return ProbabilityVector::normalized(Eigen::Map<const Vector>(m.data(), m.size()));
}

inline void write_matrix(std::ostream& out, const Matrix& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_scientific(m(i, j));
        }
        out << '\n';
    }
}

inline void write_matrix(const std::string& path, const Matrix& m)
{
    auto out = detail::open_output(path);
    write_matrix(out, m);
    detail::require(out.good(), ErrorCode::io_error, "failed writing " + path);
}

// Reports ---------------------------------------------------------------------------

using Json = nlohmann::ordered_json;

inline Json params_json(const RgwParams& p)
{
    return Json{{"rho1", p.rho1},
                {"rho2", p.rho2},
                {"tau1", p.tau1},
                {"tau2", p.tau2},
                {"step_t", p.t},
                {"step_c", p.c},
                {"step_r", p.r},
                {"max_iters", p.max_outer_iterations},
                {"tol", p.outer_tolerance},
                {"step_mode", std::string(to_string(p.step_mode))},
                {"theoretical_fraction", p.theoretical_fraction},
                {"inner",
                 {{"max_inner_iterations", p.inner.max_inner_iterations},
                  {"inner_tolerance", p.inner.inner_tolerance},
                  {"log_domain", p.inner.log_domain}}}};
}

inline Json report_json(const SolveReport& r)
{
    Json diffs = Json::array();
    for (const auto& d : r.iterate_diffs) diffs.push_back({{"pi", d.pi}, {"alpha", d.alpha}, {"beta", d.beta}});
    return Json{{"converged", r.converged},
                {"iterations", r.iterations},
                {"final_objective", r.final_objective()},
                {"objective_trace", r.objective_trace},
                {"iterate_diffs", std::move(diffs)},
                {"stationarity_measure", r.stationarity_measure},
                {"residuals",
                 {{"kl_mu_alpha", r.final_kl_mu_alpha},
                  {"kl_nu_beta", r.final_kl_nu_beta},
                  {"descent_violations", r.descent_violations},
                  {"max_objective_increase", r.max_objective_increase},
                  {"max_pi_entry", r.max_pi_entry}}},
                {"timings", {{"wall_time_s", r.wall_time}}},
                {"step_t", r.step_t},
                {"lipschitz", r.lipschitz},
                {"inner_iterations", r.inner_iterations},
                {"inner_unconverged", r.inner_unconverged},
                {"warnings", r.warnings}};
}

struct RunMetadata
{
    RgwParams params{};
    std::uint64_t seed = 0;
    std::string command;
    Json extra = Json::object();
};

/// Writes `<prefix>.coupling.csv` and `<prefix>.report.json`.
inline void write_solution(const std::string& prefix, const Coupling& pi, const ProbabilityVector& alpha,
                           const ProbabilityVector& beta, const SolveReport& report, const RunMetadata& meta = {})
{
    write_matrix(prefix + ".coupling.csv", pi.entries());
    Json doc{{"schema_version", report_schema_version},
             {"tool", "rgw"},
             {"version", std::string(version)},
             {"command", meta.command},
             {"seed", meta.seed},
             {"params", params_json(meta.params)},
             {"dims", {{"rows", pi.rows()}, {"cols", pi.cols()}}},
             {"alpha", std::vector<double>(alpha.weights().begin(), alpha.weights().end())},
             {"beta", std::vector<double>(beta.weights().begin(), beta.weights().end())},
             {"report", report_json(report)}};
    if (!meta.extra.empty()) doc["extra"] = meta.extra;
    auto out = detail::open_output(prefix + ".report.json");
    out << doc.dump(2) << '\n';
    detail::require(out.good(), ErrorCode::io_error, "failed writing " + prefix + ".report.json");
}

// Tables ----------------------------------------------------------------------------

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows)
{
    out << "nodes,fraction,seed,method,accuracy,iterations,wall_time_s,objective\n";
    for (const auto& r : rows) {
        out << r.nodes << ',' << format_double(r.fraction) << ',' << r.seed << ',' << r.method << ','
            << format_double(r.accuracy) << ',' << r.iterations << ',' << format_double(r.wall_time_s) << ','
            << format_double(r.objective) << '\n';
    }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows)
{
    out << "epsilon,rgw_value,balanced_value,bound,converged_rgw,converged_balanced,seed\n";
    for (const auto& r : rows) {
        out << format_double(r.epsilon) << ',' << format_double(r.rgw_value) << ','
            << format_double(r.balanced_value) << ',' << (r.bound ? format_double(*r.bound) : "unbounded") << ','
            << (r.converged_rgw ? "true" : "false") << ',' << (r.converged_balanced ? "true" : "false") << ','
            << r.seed << '\n';
    }
}

inline void write_rho_csv(std::ostream& out, const std::vector<SweepRow>& rows)
{
    out << "rho,epsilon,rgw_value,bound,gw_clean,converged_rgw,seed\n";
    for (const auto& r : rows) {
        out << format_double(r.rho1) << ',' << format_double(r.epsilon) << ',' << format_double(r.rgw_value) << ','
            << (r.bound ? format_double(*r.bound) : "unbounded") << ',' << format_double(r.gw_clean) << ','
            << (r.converged_rgw ? "true" : "false") << ',' << r.seed << '\n';
    }
}

} // namespace rgw

// gevrey-kit: batch front-end for the gevrey library.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
// 3 bound violation (verify-bounds) or failed selftest check.

#include "gevrey/gevrey.hpp"
#include "gevrey/testing/selftest.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace gevrey;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int exit_config = 1;
constexpr int exit_numerical = 2;
constexpr int exit_violation = 3;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Writes to a temporary sibling and renames it over `path`; "-" or empty
/// means stdout.
void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        std::cout.flush();
        return;
    }
    const std::filesystem::path target(path);
    const auto tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open output file " + tmp);
        out << content;
        out.flush();
        if (!out) throw ConfigError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ConfigError("cannot move output into place at " + path + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

/// A number is a constant field; an array [c0, c1, ...] is c0 + c1 x + ...
pde1d::ScalarField field_from(const json& j, const std::string& key) {
    if (j.is_number()) {
        const double c = j.get<double>();
        return [c](double) { return c; };
    }
    if (j.is_array()) {
        std::vector<double> c;
        for (const auto& v : j) {
            if (!v.is_number()) throw ConfigError("'" + key + "' polynomial coefficients must be numbers");
            c.push_back(v.get<double>());
        }
        return [c](double x) {
            double acc = 0.0;
            for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
            return acc;
        };
    }
    throw ConfigError("'" + key + "' must be a number or an array of polynomial coefficients in x");
}

pde1d::Nonlinearity nonlinearity_from(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "cubic") return pde1d::Nonlinearity::cubic();
        if (s == "none" || s == "linear-free") return pde1d::Nonlinearity::none();
        if (s == "tanh") return pde1d::Nonlinearity::tanh_shifted();
        if (s == "exp") pde1d::Nonlinearity::exponential();
        throw ConfigError("unknown nonlinearity '" + s + "' (cubic, none, tanh, exp or an object)");
    }
    reject_unknown(j, {"kind", "theta", "q"}, "nonlinearity");
    const auto kind = get_or<std::string>(j, "kind", "polynomial");
    if (kind == "tanh") return pde1d::Nonlinearity::tanh_shifted();
    if (kind == "exp") pde1d::Nonlinearity::exponential();
    if (kind != "polynomial") throw ConfigError("unknown nonlinearity kind '" + kind + "'");
    const auto theta = get_or<std::vector<double>>(j, "theta", {});
    if (j.contains("q")) return pde1d::Nonlinearity::polynomial(theta, get_or<double>(j, "q", 2.0));
    return pde1d::Nonlinearity::polynomial(theta);
}

pde1d::RightBoundary boundary_from(const json& j) {
    const auto s = get_or<std::string>(j, "bc", "dirichlet");
    if (s == "dirichlet") return pde1d::RightBoundary::dirichlet;
    if (s == "neumann") return pde1d::RightBoundary::neumann;
    throw ConfigError("bc must be 'dirichlet' or 'neumann'");
}

unsigned positive(const json& j, const std::string& key, unsigned fallback, unsigned hi) {
    const auto v = get_or<long long>(j, key, fallback);
    if (v < 1 || v > static_cast<long long>(hi))
        throw ConfigError("'" + key + "' must be in 1.." + std::to_string(hi));
    return static_cast<unsigned>(v);
}

struct Problem {
    std::unique_ptr<pde1d::PdeOracle> owner;
    const pde1d::PdeOracle& oracle;
    pde1d::PdeData data;
};

const std::set<std::string> problem_keys{"mesh_n", "bc", "a", "b", "f", "g", "nonlinearity", "tol", "seed", "output"};

Problem problem_from(const json& j) {
    const unsigned n = positive(j, "mesh_n", 256, 1u << 20);
    auto owner = std::make_unique<pde1d::PdeOracle>(
        pde1d::Mesh1D::uniform(n, boundary_from(j)),
        nonlinearity_from(j.contains("nonlinearity") ? j.at("nonlinearity") : json("cubic")));
    const auto& oracle = *owner;
    const auto& sp = oracle.space();
    auto field = [&](const char* key, double fallback) {
        return j.contains(key) ? field_from(j.at(key), key) : pde1d::ScalarField([fallback](double) { return fallback; });
    };
    auto data = pde1d::PdeData::sample(sp, field("a", 1.0), field("b", 1.0), field("f", 1.0), get_or<double>(j, "g", 0.0));
    if (!oracle.neumann() && data.g != 0.0) throw ConfigError("g is only meaningful with bc = neumann");
    data.validate(sp);
    return Problem{std::move(owner), oracle, std::move(data)};
}

unsigned thread_cap() {
    const char* env = std::getenv("GEVREY_KIT_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw ConfigError("GEVREY_KIT_THREADS must be an integer in 1..1024");
    return static_cast<unsigned>(v);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_kappa(unsigned max_n, unsigned check_n, bool asymptotic, const std::string& output) {
    if (max_n < 1) throw ConfigError("--max-n must be >= 1");
    const auto seq = schroeder_hipparchus_sequence(max_n);
    const unsigned top = std::min(max_n, check_n);
    for (unsigned n = 1; n <= top; ++n)
        if (schroeder_hipparchus_by_compositions(n) != seq[n])
            throw NumericalFailure("kappa recursions disagree at n = " + std::to_string(n), 0.0);
    // ratio_to_bound = kappa_n / c_kappa^(n-1), which never exceeds 1.
    const double log_c = std::log(c_kappa);
    bool within = true;
    std::string csv = asymptotic ? "n,kappa,ratio_to_bound,ratio_to_asymptotic\n" : "n,kappa,ratio_to_bound\n";
    for (unsigned n = 1; n <= max_n; ++n) {
        const double log_k = log_of(seq[n]);
        const double ratio = std::exp(log_k - (n - 1) * log_c);
        within = within && log_k <= (n - 1) * log_c + 1e-12;
        csv += std::to_string(n) + "," + seq[n].str() + "," + fmt(ratio);
        if (asymptotic) csv += "," + fmt(std::exp(log_k - log_schroeder_asymptotic(n)));
        csv += "\n";
    }
    write_output(output, csv);
    return within ? 0 : exit_violation;
}

struct EnvelopeArgs {
    double alpha = 1.0;
    double sigma = 1.0;
    double digamma = 1.0;
    double s = 1.0;
    std::vector<unsigned> n;
};

int cmd_envelope(const std::string& config_path, EnvelopeArgs args, const CLI::App& sub, std::string output) {
    if (!config_path.empty()) {
        const auto j = load_config(config_path);
        reject_unknown(j, {"s", "alpha", "sigma", "digamma", "n", "seed", "output", "tol"}, "envelope config");
        // Command-line flags win over the file.
        if (!sub.count("--alpha")) args.alpha = get_or<double>(j, "alpha", args.alpha);
        if (!sub.count("--sigma")) args.sigma = get_or<double>(j, "sigma", args.sigma);
        if (!sub.count("--digamma")) args.digamma = get_or<double>(j, "digamma", args.digamma);
        if (!sub.count("--s")) args.s = get_or<double>(j, "s", args.s);
        if (!sub.count("--n")) args.n = get_or<std::vector<unsigned>>(j, "n", args.n);
        if (output.empty()) output = get_or<std::string>(j, "output", "");
    }
    if (args.n.empty())
        for (unsigned k = 1; k <= 10; ++k) args.n.push_back(k);
    const GevreyEnvelope residual{args.s, args.sigma, args.digamma};
    const StabilityConstant alpha(args.alpha);
    const auto env = implicit_envelope(alpha, residual);
    std::string csv = "quantity,n,value\n";
    csv += "scale,," + fmt(env.scale) + "\n";
    csv += "rate,," + fmt(env.rate) + "\n";
    if (args.s == 1.0) csv += "radius,," + fmt(convergence_radius(env)) + "\n";
    for (unsigned n : args.n) {
        if (n == 0) throw ConfigError("requested orders n must be >= 1");
        csv += "bound," + std::to_string(n) + "," + fmt(env.bound(n)) + "\n";
        csv += "log_bound," + std::to_string(n) + "," + fmt(env.log_bound(n)) + "\n";
        csv += "log_lemma_bound," + std::to_string(n) + "," + fmt(lemma_bound(n, alpha, residual)) + "\n";
    }
    write_output(output, csv);
    return 0;
}

int cmd_solve(const std::string& config_path, std::string output, const std::string& report_path) {
    const auto j = load_config(config_path);
    reject_unknown(j, problem_keys, "solve config");
    if (output.empty()) output = get_or<std::string>(j, "output", "");
    const auto tol = get_or<double>(j, "tol", 1e-12);
    auto prob = problem_from(j);
    const auto& o = prob.oracle;
    const auto res = pde1d::newton_solve(o, prob.data, std::nullopt, tol);
    const Vector d = o.pack(prob.data);
    const auto c = pde1d::estimate_constants(o, d, res.u);

    std::string csv = "x,u\n";
    const Vector full = o.space().full_nodal(res.u);
    for (std::size_t i = 0; i < o.mesh().nodes().size(); ++i)
        csv += fmt(o.mesh().nodes()[i]) + "," + fmt(full[static_cast<Eigen::Index>(i)]) + "\n";
    write_output(output, csv);

    ojson rep;
    rep["residual_norm"] = res.residual_norm;
    rep["iterations"] = res.iterations;
    rep["solution_norm"] = res.solution_norm;
    rep["nonlinearity"] = o.nonlinearity().describe();
    rep["constants"] = {{"c_pf", c.c_pf},
                        {"c_a", c.c_a},
                        {"c_inf", c.c_inf},
                        {"alpha_guaranteed", c.alpha_guaranteed},
                        {"alpha_measured", c.alpha_measured},
                        {"sigma", c.sigma},
                        {"digamma", c.digamma}};
    const bool alpha_ok = c.alpha_measured <= c.alpha_guaranteed * (1.0 + 1e-10);
    rep["bound_checks"] = {
        {"injectivity", {{"solution_norm", res.solution_norm}, {"bound", res.injectivity_bound}, {"ok", res.injectivity_ok}}},
        {"stability", {{"measured", c.alpha_measured}, {"guaranteed", c.alpha_guaranteed}, {"ok", alpha_ok}}},
        {"residual", {{"norm", res.residual_norm}, {"tol", tol}, {"ok", res.residual_norm <= tol}}}};
    if (!report_path.empty()) write_output(report_path, rep.dump(2) + "\n");
    return res.injectivity_ok && alpha_ok ? 0 : exit_violation;
}

template <class Oracle, class Map>
std::string derivative_csv(const Oracle& oracle, const Vector& d, const Vector& u, const std::vector<Vector>& dirs,
                           unsigned order, bool fd, std::vector<double> steps, Map&& solve_map) {
    const auto table = derivative_table(oracle, d, u, dirs, order);
    std::string csv = "key,norm,fd_norm,fd_error_indicator\n";
    for (unsigned k = 1; k <= order; ++k)
        for (const auto& key : keys_of_order(static_cast<unsigned>(dirs.size()), k)) {
            const Vector& v = table.at(key);
            csv += key_to_string(key) + "," + fmt(oracle.state_norm(v));
            if (fd) {
                std::vector<Vector> h;
                for (auto i : key) h.push_back(dirs[i]);
                std::vector<double> st;
                for (double s : steps) st.push_back(s / k);
                const auto est = finite_difference_check(solve_map, d, h, st,
                                                         [&](const Vector& x) { return oracle.state_norm(x); });
                csv += "," + fmt(oracle.state_norm(est.estimate)) + "," + fmt(est.error_indicator);
            } else {
                csv += ",,";
            }
            csv += "\n";
        }
    return csv;
}

int cmd_derivatives(const std::string& problem, unsigned order, const std::string& dir_path, bool fd,
                    std::vector<double> steps, const std::string& output) {
    if (order < 1) throw ConfigError("--order must be >= 1");
    const auto j = load_config(dir_path);
    if (problem == "scalar-quadratic" || problem == "scalar-cubic") {
        reject_unknown(j, {"d", "directions", "seed", "output", "tol"}, "directions file");
        const Vector d = Vector::Constant(1, get_or<double>(j, "d", 0.0));
        std::vector<Vector> dirs;
        for (double h : get_or<std::vector<double>>(j, "directions", {1.0})) dirs.push_back(Vector::Constant(1, h));
        if (steps.empty()) steps = {0.04, 0.02, 0.01};
        auto run = [&](const auto& oracle) {
            const NewtonOptions opts{1e-15};
            const Vector u = solve_residual(oracle, d, Vector::Zero(1), opts).u;
            auto map = [&](const Vector& x) { return solve_residual(oracle, x, u, opts).u; };
            return derivative_csv(oracle, d, u, dirs, order, fd, steps, map);
        };
        write_output(output, problem == "scalar-quadratic" ? run(ScalarQuadraticOracle{}) : run(ScalarCubicOracle{}));
        return 0;
    }
    if (problem != "pde1d") throw ConfigError("--problem must be scalar-quadratic, scalar-cubic or pde1d");
    reject_unknown(j, {"problem", "directions", "seed", "output", "tol"}, "directions file");
    if (!j.contains("problem")) throw ConfigError("directions file for pde1d needs a 'problem' object");
    reject_unknown(j.at("problem"), problem_keys, "problem");
    auto prob = problem_from(j.at("problem"));
    const auto& o = prob.oracle;
    const auto& sp = o.space();
    const auto nq = sp.qp_count();
    std::vector<Vector> dirs;
    if (!j.contains("directions") || !j.at("directions").is_array() || j.at("directions").empty())
        throw ConfigError("'directions' must be a nonempty array of {a, b, f, g} objects");
    for (const auto& h : j.at("directions")) {
        reject_unknown(h, {"a", "b", "f", "g"}, "direction");
        Vector v = Vector::Zero(o.data_dim());
        if (h.contains("a")) v.segment(0, nq) = sp.sample(field_from(h.at("a"), "a"));
        if (h.contains("b")) v.segment(nq, nq) = sp.sample(field_from(h.at("b"), "b"));
        if (h.contains("f")) v.segment(2 * nq, nq) = sp.sample(field_from(h.at("f"), "f"));
        v[3 * nq] = get_or<double>(h, "g", 0.0);
        dirs.push_back(std::move(v));
    }
    const Vector d = o.pack(prob.data);
    const auto res = pde1d::newton_solve(o, prob.data, std::nullopt, get_or<double>(j.at("problem"), "tol", 1e-12));
    if (steps.empty()) steps = {0.2, 0.1, 0.05};
    auto map = [&](const Vector& x) {
        Vector u = solve_residual(o, x, res.u).u;
        u -= o.solve_linearized(x, u, o.eval(x, u));
        return u;
    };
    write_output(output, derivative_csv(o, d, res.u, dirs, order, fd, steps, map));
    return 0;
}

int cmd_verify_bounds(const std::string& config_path, std::string output, const std::string& report_path) {
    const auto j = load_config(config_path);
    reject_unknown(j,
                   {"mesh_n", "bc", "p", "c", "vartheta", "nonlinearity", "max_order", "y_samples", "seed", "a", "b",
                    "f", "g", "mu_scale", "output", "tol"},
                   "verify-bounds config");
    if (output.empty()) output = get_or<std::string>(j, "output", "");
    json problem = json::object();
    for (const char* k : {"mesh_n", "bc", "nonlinearity", "a", "b", "f", "g"})
        if (j.contains(k)) problem[k] = j.at(k);
    if (!problem.contains("a")) problem["a"] = json::array({1.0, 0.5});
    if (!problem.contains("f")) problem["f"] = json::array({1.0, 1.0});
    auto prob = problem_from(problem);
    const unsigned p = positive(j, "p", 4, parametric::max_parameters);
    const parametric::DomainMap1D map(p, get_or<double>(j, "c", 0.5), get_or<double>(j, "vartheta", 2.0));
    const unsigned max_order = positive(j, "max_order", 4, 12);
    const unsigned count = positive(j, "y_samples", 5, 100000);
    const auto seed = get_or<std::uint64_t>(j, "seed", 1);
    const double mu_scale = get_or<double>(j, "mu_scale", 1.0);
    if (!(mu_scale > 0.0)) throw ConfigError("mu_scale must be positive");

    const auto samples = parametric::sample_parameters(p, count, seed);
    auto run = parametric::run_dubounds(prob.oracle, map, prob.data, samples, max_order, thread_cap());
    auto env = run.envelope.envelope;
    if (mu_scale != 1.0) {
        env.base.scale *= mu_scale;
        run.rows = parametric::verify_dubounds(run.norms, env, run.passed, run.worst_ratio);
    }

    std::string csv = "alpha,y_id,measured_norm,bound,ratio\n";
    for (const auto& r : run.rows)
        csv += r.alpha.to_string() + "," + std::to_string(r.y_id) + "," + fmt(r.measured) + "," + fmt(r.bound) + "," +
               fmt(r.ratio) + "\n";
    write_output(output, csv);

    if (!report_path.empty()) {
        ojson rep;
        rep["passed"] = run.passed;
        rep["worst_ratio"] = run.worst_ratio;
        rep["s"] = env.base.s;
        rep["mu"] = env.base.scale;
        rep["kappa"] = env.base.rate;
        rep["alpha"] = run.envelope.alpha;
        rep["sigma"] = run.envelope.sigma;
        rep["solution_bound"] = run.envelope.solution_bound;
        rep["weights"] = env.weights;
        ojson ys = ojson::array();
        for (const auto& y : samples) ys.push_back(y);
        rep["y"] = ys;
        write_output(report_path, rep.dump(2) + "\n");
    }
    return run.passed ? 0 : exit_violation;
}

int cmd_selftest(const std::string& output) {
    const auto results = selftest::run_all();
    std::string text;
    unsigned failed = 0;
    for (const auto& r : results) {
        text += std::string(r.passed ? "PASS " : "FAIL ") + r.name + " (" + r.detail + ")\n";
        if (!r.passed) ++failed;
    }
    text += std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) + " checks passed\n";
    write_output(output, text);
    return failed == 0 ? 0 : exit_violation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gevrey-kit: implicit-derivative recursions, derivative envelopes and a parametric 1D "
                 "semilinear elliptic model problem.\n"
                 "Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 bound violation.\n"
                 "GEVREY_KIT_THREADS caps worker threads (default 1; used by verify-bounds)."};
    app.set_version_flag("--version", std::string(gevrey::version));
    app.require_subcommand(1);

    std::string output;
    std::string report;

    auto* kappa = app.add_subcommand("kappa", "Schroeder-Hipparchus numbers as CSV (n,kappa,ratio_to_bound)");
    unsigned max_n = 20;
    unsigned check_n = 16;
    bool asymptotic = false;
    kappa->add_option("--max-n", max_n, "largest n")->capture_default_str();
    kappa->add_option("--check-n", check_n, "cross-check both recursions up to this n")->capture_default_str();
    kappa->add_flag("--check-asymptotic", asymptotic, "add kappa_n over its leading asymptotic term");
    kappa->add_option("-o,--output", output, "output CSV (default stdout)");

    auto* envelope = app.add_subcommand(
        "envelope", "implicit-map envelope as CSV (quantity,n,value): scale, rate, radius (s = 1 only) and bound(n)");
    EnvelopeArgs env_args;
    std::string env_config;
    envelope->add_option("config", env_config, "optional JSON {s=1, alpha=1, sigma=1, digamma=1, n=[1..10]}");
    envelope->add_option("--alpha", env_args.alpha, "stability constant (>= 1)")->capture_default_str();
    envelope->add_option("--sigma", env_args.sigma, "residual scale (>= 1)")->capture_default_str();
    envelope->add_option("--digamma", env_args.digamma, "residual rate (>= 1)")->capture_default_str();
    envelope->add_option("--s", env_args.s, "Gevrey index (>= 1)")->capture_default_str();
    envelope->add_option("--n", env_args.n, "orders to tabulate (default 1..10)");
    envelope->add_option("-o,--output", output, "output CSV (default stdout)");

    auto* solve = app.add_subcommand("solve", "Newton solve of the 1D model problem");
    std::string config;
    solve->add_option("config", config, "JSON problem: {mesh_n=256, bc=dirichlet|neumann, a=1, b=1, f=1, g=0, "
                                        "nonlinearity=cubic, tol=1e-12}; fields are numbers or polynomial "
                                        "coefficient arrays in x; nonlinearity is cubic|none|tanh|exp or "
                                        "{kind: polynomial, theta: [...], q}")
        ->required();
    solve->add_option("-o,--output", output, "solution CSV (x,u) (default stdout)");
    solve->add_option("--report", report, "JSON report with residual norm, constants and bound checks");

    auto* deriv = app.add_subcommand("derivatives", "solution-map derivative table as CSV");
    std::string problem = "scalar-cubic";
    unsigned order = 3;
    std::string directions;
    bool fd = false;
    std::vector<double> steps;
    deriv->add_option("--problem", problem, "scalar-quadratic | scalar-cubic | pde1d")
        ->capture_default_str()
        ->check(CLI::IsMember({"scalar-quadratic", "scalar-cubic", "pde1d"}));
    deriv->add_option("--order", order, "highest derivative order")->capture_default_str();
    deriv->add_option("--directions", directions,
                      "JSON: scalar problems {d=0, directions=[1]}; pde1d {problem: {solve schema}, "
                      "directions: [{a, b, f, g}, ...]}")
        ->required();
    deriv->add_flag("--fd-check", fd, "add Richardson finite-difference norms and error indicators");
    deriv->add_option("--fd-steps", steps,
                      "FD steps before division by the order (default 0.04 0.02 0.01 scalar, 0.2 0.1 0.05 pde1d)");
    deriv->add_option("-o,--output", output, "output CSV (default stdout)");

    auto* verify = app.add_subcommand("verify-bounds", "check parametric derivative norms against the envelope");
    verify->add_option("config", config,
                       "JSON: {mesh_n=256, bc=dirichlet, p=4, c=0.5, vartheta=2, nonlinearity=cubic, max_order=4, "
                       "y_samples=5, seed=1, a=[1,0.5], b=1, f=[1,1], g=0, mu_scale=1}")
        ->required();
    verify->add_option("-o,--output", output, "CSV alpha,y_id,measured_norm,bound,ratio (default stdout)");
    verify->add_option("--report", report, "JSON report with envelope constants");

    auto* self = app.add_subcommand("selftest", "run the built-in reference checks");
    self->add_option("-o,--output", output, "output text (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (*kappa) return cmd_kappa(max_n, check_n, asymptotic, output);
        if (*envelope) return cmd_envelope(env_config, env_args, *envelope, output);
        if (*solve) return cmd_solve(config, output, report);
        if (*deriv) return cmd_derivatives(problem, order, directions, fd, steps, output);
        if (*verify) return cmd_verify_bounds(config, output, report);
        if (*self) return cmd_selftest(output);
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const ContractViolation& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {  // includes ConfigError
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    }
    return exit_config;
}

#include "ntdlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ntdlab/error.hpp"
#include "ntdlab/operators.hpp"

namespace ntdlab {

namespace {

using nlohmann::json;

json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string join_header(const std::vector<std::string>& header) {
    std::string out;
    for (const std::string& line : header) out += "# " + line + "\n";
    return out;
}

json problem_summary(const ProblemSpec& problem) {
    const EvaluationSetup& s = problem.setup;
    return json{{"name", problem.name},
                {"source", problem.source},
                {"hash", problem_hash(s)},
                {"num_states", s.num_states()},
                {"num_actions", s.num_actions()},
                {"num_features", s.num_features()},
                {"gamma", s.gamma()}};
}

json tool_summary() { return json{{"name", "ntdlab"}, {"version", std::string(kToolVersion)}}; }

std::vector<std::string> base_header(const ProblemSpec& problem, Algorithm algo, int n) {
    return {"tool=ntdlab " + std::string(kToolVersion),
            "problem=" + problem.name + " hash=" + problem_hash(problem.setup),
            "algorithm=" + std::string(to_string(algo)) + " n=" + std::to_string(n)};
}

struct SystemStep {
    double alpha = 0.0;
    bool certified = false;
    double spectral_radius = 0.0;
};

SystemStep choose_system_step(const EvaluationSetup& setup, int n, std::optional<double> alpha) {
    if (alpha) {
        const SchurCertificate c = schur_certificate(setup, n, *alpha);
        return {*alpha, c.stable, c.spectral_radius};
    }
    if (const auto cert = certify_step_size(setup, n)) {
        return {cert->alpha, true, cert->spectral_radius};
    }
    // No stable step exists; run anyway so the divergence shows up in the trace.
    const double norm2 = Eigen::JacobiSVD<Matrix>(system_matrix(setup, n)).singularValues()(0);
    const double fallback = norm2 > 0.0 ? 1.0 / norm2 : 1.0;
    return {fallback, false, schur_certificate(setup, n, fallback).spectral_radius};
}

std::string cell_file_name(Algorithm algo, int n, std::optional<std::uint64_t> seed) {
    std::string name = std::string(to_string(algo));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    name += "_n" + std::to_string(n);
    if (seed) name += "_seed" + std::to_string(*seed);
    return name + ".csv";
}

}  // namespace

std::string_view to_string(Algorithm algo) {
    switch (algo) {
        case Algorithm::Npvi: return "NPVI";
        case Algorithm::GdI: return "GD_I";
        case Algorithm::GdII: return "GD_II";
        case Algorithm::System: return "SYSTEM";
        case Algorithm::Ntd: return "NTD";
        case Algorithm::Ngtd: return "NGTD";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (Algorithm a : {Algorithm::Npvi, Algorithm::GdI, Algorithm::GdII, Algorithm::System,
                        Algorithm::Ntd, Algorithm::Ngtd}) {
        if (upper == to_string(a)) return a;
    }
    throw ConfigError("unknown algorithm '" + std::string(name) +
                      "' (expected NPVI, GD_I, GD_II, SYSTEM, NTD or NGTD)");
}

bool is_stochastic(Algorithm algo) { return algo == Algorithm::Ntd || algo == Algorithm::Ngtd; }

std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

json analyze_problem(const ProblemSpec& problem, int n_max, const std::vector<int>& extra_n) {
    const EvaluationSetup& setup = problem.setup;
    const HorizonReport horizon = hurwitz_horizon(setup, n_max);
    const TrueSolution truth = true_solution(setup);
    const ProjectionData proj = projection(setup);

    json per_n = json::array();
    for (const HorizonRecord& r : horizon.per_n) {
        per_n.push_back(json{{"n", r.n},
                             {"contraction_bound", r.contraction_bound},
                             {"sym_part_max_eigenvalue", r.sym_part_max_eigenvalue},
                             {"a_n_condition", nullable(r.a_n_condition)},
                             {"a_n_nonsingular", r.a_n_nonsingular}});
    }

    std::set<int> ns{1, horizon.n_star};
    if (horizon.n_bar_star) ns.insert(*horizon.n_bar_star);
    for (int n : extra_n) {
        if (n < 1) throw ConfigError("extra horizons must be >= 1");
        ns.insert(n);
    }

    json solutions = json::array();
    for (int n : ns) {
        json entry{{"n", n},
                   {"contraction_factor", std::pow(setup.gamma(), n) * proj.inf_norm}};
        try {
            const Vector theta = fixed_point(setup, n);
            const Vector fitted = setup.phi() * theta;
            entry["theta_star_n"] = to_json(theta);
            entry["fixed_point_residual"] = fixed_point_residual(setup, n, theta);
            entry["actual_value_error"] = (fitted - truth.v_pi).lpNorm<Eigen::Infinity>();
            entry["actual_gap"] =
                (fitted - setup.phi() * truth.theta_star_inf).lpNorm<Eigen::Infinity>();
            if (n >= horizon.n_star) {
                const SolutionReport rep = error_bounds(setup, n);
                entry["bound_value"] = rep.bound_value;
                entry["bound_gap"] = rep.bound_gap;
            } else {
                entry["bound_value"] = nullptr;
                entry["bound_gap"] = nullptr;
                entry["note"] = "n below contraction horizon n*; bounds not applicable";
            }
        } catch (const SingularError& e) {
            entry["theta_star_n"] = nullptr;
            entry["error"] = e.what();
        }
        solutions.push_back(std::move(entry));
    }

    return json{
        {"tool", tool_summary()},
        {"problem", problem_summary(problem)},
        {"horizon",
         {{"n_star", horizon.n_star},
          {"n_bar_star", horizon.n_bar_star ? json(*horizon.n_bar_star) : json(nullptr)},
          {"n_min_contracting", horizon.n_min_contracting},
          {"pi_inf_norm", horizon.pi_inf_norm},
          {"n_max", horizon.n_max},
          {"per_n", std::move(per_n)}}},
        {"true_solution",
         {{"v_pi", to_json(truth.v_pi)}, {"theta_star_inf", to_json(truth.theta_star_inf)}}},
        {"solutions", std::move(solutions)}};
}

std::string iter_trace_csv(const IterTrace& trace, const std::vector<std::string>& header) {
    std::ostringstream out;
    out << join_header(header);
    const std::size_t m = trace.thetas.empty() ? 0 : trace.thetas.front().size();
    out << "iter";
    for (std::size_t j = 0; j < m; ++j) out << ",theta_" << j;
    out << ",residual_inf,dist_to_fixed_point\n";
    for (std::size_t k = 0; k < trace.thetas.size(); ++k) {
        out << k;
        for (std::size_t j = 0; j < m; ++j) out << ',' << format_number(trace.thetas[k](j));
        out << ',' << format_number(trace.residual_inf[k]) << ','
            << format_number(trace.dist_to_fixed_point[k]) << '\n';
    }
    return out.str();
}

std::string stoch_trace_csv(const StochTrace& trace, const std::vector<std::string>& header) {
    std::ostringstream out;
    out << join_header(header);
    const std::size_t m = trace.thetas.empty() ? 0 : trace.thetas.front().size();
    const bool gtd = !trace.lambdas.empty();
    out << "iter";
    for (std::size_t j = 0; j < m; ++j) out << ",theta_" << j;
    if (gtd) {
        for (std::size_t j = 0; j < m; ++j) out << ",lambda_" << j;
    }
    out << ",dist_to_theta_star_n\n";
    for (std::size_t k = 0; k < trace.thetas.size(); ++k) {
        out << trace.iters[k];
        for (std::size_t j = 0; j < m; ++j) out << ',' << format_number(trace.thetas[k](j));
        if (gtd) {
            for (std::size_t j = 0; j < m; ++j) out << ',' << format_number(trace.lambdas[k](j));
        }
        out << ',' << format_number(trace.dist_to_theta_star_n[k]) << '\n';
    }
    return out.str();
}

RunOutcome run_algorithm(const ProblemSpec& problem, const RunOptions& options) {
    const EvaluationSetup& setup = problem.setup;
    if (options.n < 1) throw ConfigError("n must be >= 1, got " + std::to_string(options.n));
    if (options.iters < 1) throw ConfigError("iters must be >= 1");
    const int m = setup.num_features();
    std::vector<std::string> header = base_header(problem, options.algo, options.n);
    json summary{{"algorithm", std::string(to_string(options.algo))},
                 {"n", options.n},
                 {"problem", problem_summary(problem)},
                 {"tool", tool_summary()}};
    RunOutcome out;

    if (is_stochastic(options.algo)) {
        StochasticConfig cfg;
        cfg.algo = options.algo == Algorithm::Ntd ? StochasticAlgo::Ntd : StochasticAlgo::Ngtd;
        cfg.schedule = options.schedule;
        cfg.iters = options.iters;
        cfg.seed = options.seed;
        cfg.log_every = options.log_every;
        cfg.theta0 = Vector::Constant(m, options.theta0.value_or(1.0));
        const StochTrace tr = run_stochastic(setup, options.n, cfg);

        header.push_back("schedule=" + format_number(cfg.schedule.a) + "," +
                         format_number(cfg.schedule.b) + "," + format_number(cfg.schedule.c) +
                         " iters=" + std::to_string(cfg.iters) +
                         " seed=" + std::to_string(cfg.seed) +
                         " rng=" + std::string(Rng::kAlgorithmId));
        out.csv = stoch_trace_csv(tr, header);

        const double dist = tr.dist_to_theta_star_n.back();
        std::string verdict = "not_converged";
        if (tr.diverged) verdict = "diverged";
        else if (std::isfinite(dist) && dist <= options.stochastic_tolerance) verdict = "converged";
        summary["seed"] = options.seed;
        summary["schedule"] = {cfg.schedule.a, cfg.schedule.b, cfg.schedule.c};
        summary["rng"] = std::string(Rng::kAlgorithmId);
        summary["iterations"] = tr.iters.back();
        summary["diverged"] = tr.diverged;
        summary["final_theta"] = to_json(tr.final_theta);
        if (cfg.algo == StochasticAlgo::Ngtd) summary["final_lambda"] = to_json(tr.final_lambda);
        summary["final_distance"] = nullable(dist);
        summary["verdict"] = verdict;
        out.summary = std::move(summary);
        return out;
    }

    const Vector theta0 = Vector::Constant(m, options.theta0.value_or(0.0));
    SolverOptions sopts;
    sopts.max_iters = static_cast<int>(std::min<std::int64_t>(options.iters, 1'000'000'000));
    sopts.tol = options.tol;
    IterTrace tr;
    switch (options.algo) {
        case Algorithm::Npvi:
            tr = npvi_run(setup, options.n, theta0, sopts);
            break;
        case Algorithm::GdI:
        case Algorithm::GdII: {
            const ObjectiveKind kind =
                options.algo == Algorithm::GdI ? ObjectiveKind::MspbeI : ObjectiveKind::CompositeII;
            const CurvatureReport curv = curvature(setup, options.n, kind);
            summary["mu"] = curv.mu;
            summary["L"] = curv.lip;
            summary["regime"] = curv.strongly_convex ? "strongly_convex" : "convex";
            tr = gradient_descent_run(setup, options.n, kind, theta0, sopts);
            break;
        }
        case Algorithm::System: {
            const SystemStep step = choose_system_step(setup, options.n, options.alpha);
            summary["alpha"] = step.alpha;
            summary["alpha_certified_stable"] = step.certified;
            summary["spectral_radius"] = step.spectral_radius;
            tr = system_iteration_run(setup, options.n, step.alpha, theta0, sopts);
            break;
        }
        default:
            break;
    }
    header.push_back("step_size=" + format_number(tr.step_size) + " tol=" +
                     format_number(sopts.tol) + " max_iters=" + std::to_string(sopts.max_iters));
    out.csv = iter_trace_csv(tr, header);
    summary["iterations"] = tr.iterations_used;
    summary["step_size"] = tr.step_size;
    summary["final_theta"] = to_json(tr.thetas.back());
    summary["final_residual"] = nullable(tr.residual_inf.back());
    summary["final_distance"] = nullable(tr.dist_to_fixed_point.back());
    summary["converged"] = tr.converged;
    summary["diverged"] = tr.diverged;
    summary["verdict"] = tr.diverged ? "diverged" : (tr.converged ? "converged" : "max_iters");
    out.summary = std::move(summary);
    return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write '" + tmp.string() + "'");
        f << content;
        if (!f) throw ConfigError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

void validate(const SweepConfig& config) {
    if (config.n_values.empty()) throw ConfigError("sweep needs at least one n");
    if (config.algorithms.empty()) throw ConfigError("sweep needs at least one algorithm");
    if (config.seeds.empty()) throw ConfigError("sweep needs at least one seed");
    for (int n : config.n_values) {
        if (n < 1) throw ConfigError("sweep n values must be >= 1");
    }
    if (config.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (config.output_dir.empty()) throw ConfigError("sweep needs an output directory");
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec || !std::filesystem::is_directory(config.output_dir)) {
        throw ConfigError("output directory '" + config.output_dir.string() + "' is not usable");
    }
    const auto probe = config.output_dir / ".ntdlab_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory '" + config.output_dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

json run_sweep(const ProblemSpec& problem, const SweepConfig& config) {
    validate(config);
    const EvaluationSetup& setup = problem.setup;

    struct Cell {
        Algorithm algo;
        int n;
        std::optional<std::uint64_t> seed;
        json result;
    };
    std::vector<Cell> cells;
    for (Algorithm algo : config.algorithms) {
        for (int n : config.n_values) {
            if (is_stochastic(algo)) {
                for (std::uint64_t seed : config.seeds) cells.push_back({algo, n, seed, {}});
            } else {
                cells.push_back({algo, n, std::nullopt, {}});
            }
        }
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            Cell& cell = cells[i];
            const std::string file = cell_file_name(cell.algo, cell.n, cell.seed);
            json entry{{"algorithm", std::string(to_string(cell.algo))},
                       {"n", cell.n},
                       {"seed", cell.seed ? json(*cell.seed) : json(nullptr)},
                       {"file", file}};
            try {
                RunOptions opts = config.base;
                opts.algo = cell.algo;
                opts.n = cell.n;
                opts.seed = cell.seed.value_or(0);
                RunOutcome run = run_algorithm(problem, opts);
                write_file_atomic(config.output_dir / file, run.csv);
                entry["verdict"] = run.summary["verdict"];
                entry["final_distance"] = run.summary["final_distance"];
                entry["iterations"] = run.summary["iterations"];
            } catch (const std::exception& e) {
                entry["verdict"] = "error";
                entry["error"] = e.what();
            }
            cell.result = std::move(entry);
        }
    };
    const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    const ProjectionData proj = projection(setup);
    json certificates = json::array();
    for (int n : config.n_values) {
        const Matrix b = system_matrix(setup, n);
        Eigen::SelfAdjointEigenSolver<Matrix> sym(b + b.transpose(), Eigen::EigenvaluesOnly);
        const SystemStep step = choose_system_step(setup, n, config.base.alpha);
        json curv = json::object();
        for (ObjectiveKind kind : {ObjectiveKind::MspbeI, ObjectiveKind::CompositeII}) {
            const CurvatureReport c = curvature(setup, n, kind);
            curv[std::string(to_string(kind))] = {{"mu", c.mu}, {"L", c.lip}};
        }
        certificates.push_back(
            json{{"n", n},
                 {"contraction_factor", std::pow(setup.gamma(), n) * proj.inf_norm},
                 {"sym_part_max_eigenvalue", sym.eigenvalues().maxCoeff()},
                 {"schur",
                  {{"alpha", step.alpha},
                   {"spectral_radius", step.spectral_radius},
                   {"stable", step.certified}}},
                 {"curvature", std::move(curv)}});
    }

    json cell_results = json::array();
    for (Cell& c : cells) cell_results.push_back(std::move(c.result));
    json algos = json::array();
    for (Algorithm a : config.algorithms) algos.push_back(std::string(to_string(a)));
    const RunOptions& b = config.base;
    json summary{
        {"tool", tool_summary()},
        {"problem", problem_summary(problem)},
        {"config",
         {{"n_values", config.n_values},
          {"algorithms", std::move(algos)},
          {"seeds", config.seeds},
          {"iters", b.iters},
          {"log_every", b.log_every},
          {"tol", b.tol},
          {"schedule", {b.schedule.a, b.schedule.b, b.schedule.c}},
          {"alpha", b.alpha ? json(*b.alpha) : json(nullptr)},
          {"theta0", b.theta0 ? json(*b.theta0) : json(nullptr)},
          {"rng", std::string(Rng::kAlgorithmId)}}},
        {"certificates", std::move(certificates)},
        {"cells", std::move(cell_results)}};
    write_file_atomic(config.output_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace ntdlab

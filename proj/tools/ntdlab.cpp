// ntdlab: analyze, run and sweep n-step TD experiments from the command line.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ntdlab/error.hpp"
#include "ntdlab/harness.hpp"

namespace {

using namespace ntdlab;

StepSizeSchedule parse_schedule(const std::string& text) {
    std::vector<double> parts;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--schedule expects a,b,c with numbers, got '" + text + "'");
        }
    }
    if (parts.size() != 3) throw ConfigError("--schedule expects three values a,b,c");
    StepSizeSchedule s{parts[0], parts[1], parts[2]};
    s.validate();
    return s;
}

std::filesystem::path resolve_out(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return {};
}

void emit(const std::string& text, const std::filesystem::path& file) {
    if (file.empty()) {
        std::cout << text;
        return;
    }
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    write_file_atomic(file, text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"n-step temporal difference laboratory"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    std::string problem_src;
    int n_max = 10000;
    std::vector<int> extra_n;
    std::string out;

    auto* analyze = app.add_subcommand("analyze", "horizon certificates and fixed-point reports");
    analyze->add_option("--problem", problem_src, "builtin id or JSON file")->required();
    analyze->add_option("--n-max", n_max, "largest n searched for the Hurwitz horizon");
    analyze->add_option("--n", extra_n, "extra horizons to report");
    analyze->add_option("--out", out, "write the JSON report here instead of stdout");

    RunOptions run_opts;
    std::string algo_name;
    std::string schedule_text;
    auto* run = app.add_subcommand("run", "run one algorithm and write its trace CSV");
    run->add_option("--problem", problem_src, "builtin id or JSON file")->required();
    run->add_option("--algo", algo_name, "NPVI, GD_I, GD_II, SYSTEM, NTD or NGTD")->required();
    run->add_option("--n", run_opts.n, "horizon")->required();
    run->add_option("--alpha", run_opts.alpha, "system iteration step size");
    run->add_option("--schedule", schedule_text, "stochastic step sizes a,b,c for a/(b+i)^c");
    run->add_option("--iters", run_opts.iters, "iteration budget");
    run->add_option("--seed", run_opts.seed, "stochastic seed");
    run->add_option("--log-every", run_opts.log_every, "stochastic logging cadence");
    run->add_option("--tol", run_opts.tol, "deterministic residual tolerance");
    run->add_option("--theta0", run_opts.theta0, "fill value for the initial parameter");
    run->add_option("--out", out, "CSV path; defaults to <$NTDLAB_OUT_DIR>/<algo>_n<n>.csv");

    SweepConfig sweep_cfg;
    std::vector<std::string> sweep_algos;
    auto* sweep = app.add_subcommand("sweep", "grid of runs with a summary JSON");
    sweep->add_option("--problem", problem_src, "builtin id or JSON file")->required();
    sweep->add_option("--n", sweep_cfg.n_values, "horizons")->required()->delimiter(',');
    sweep->add_option("--algo", sweep_algos, "algorithms")->required()->delimiter(',');
    sweep->add_option("--seeds", sweep_cfg.seeds, "seeds for stochastic cells")->delimiter(',');
    sweep->add_option("--alpha", sweep_cfg.base.alpha, "system iteration step size");
    sweep->add_option("--schedule", schedule_text, "stochastic step sizes a,b,c");
    sweep->add_option("--iters", sweep_cfg.base.iters, "iteration budget per cell");
    sweep->add_option("--log-every", sweep_cfg.base.log_every, "stochastic logging cadence");
    sweep->add_option("--theta0", sweep_cfg.base.theta0, "fill value for the initial parameter");
    sweep->add_option("--jobs", sweep_cfg.jobs, "parallel cells");
    sweep->add_option("--out", out, "output directory; defaults to $NTDLAB_OUT_DIR");

    CLI11_PARSE(app, argc, argv);

    try {
        const ProblemSpec problem = load_problem(problem_src);

        if (*analyze) {
            const auto report = analyze_problem(problem, n_max, extra_n);
            emit(report.dump(2) + "\n", out);
            return 0;
        }

        if (*run) {
            run_opts.algo = parse_algorithm(algo_name);
            if (!schedule_text.empty()) run_opts.schedule = parse_schedule(schedule_text);
            std::filesystem::path file = out;
            if (file.empty()) {
                std::string name = std::string(to_string(run_opts.algo)) + "_n" +
                                   std::to_string(run_opts.n) + ".csv";
                file = resolve_out("") / name;
            }
            const RunOutcome outcome = run_algorithm(problem, run_opts);
            emit(outcome.csv, file);
            auto summary = outcome.summary;
            summary["file"] = file.string();
            std::cout << summary.dump(2) << "\n";
            return 0;
        }

        if (*sweep) {
            for (const std::string& a : sweep_algos) sweep_cfg.algorithms.push_back(parse_algorithm(a));
            if (!schedule_text.empty()) sweep_cfg.base.schedule = parse_schedule(schedule_text);
            sweep_cfg.output_dir = resolve_out(out);
            const auto summary = run_sweep(problem, sweep_cfg);
            int errors = 0;
            for (const auto& cell : summary["cells"]) {
                std::cout << cell["algorithm"].get<std::string>() << " n=" << cell["n"].get<int>();
                if (!cell["seed"].is_null()) std::cout << " seed=" << cell["seed"].get<std::uint64_t>();
                std::cout << " " << cell["verdict"].get<std::string>() << "\n";
                if (cell["verdict"] == "error") ++errors;
            }
            std::cout << "summary: " << (sweep_cfg.output_dir / "summary.json").string() << "\n";
            if (errors > 0) std::cerr << "ntdlab: " << errors << " cell(s) failed, see summary\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "ntdlab: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "ntdlab: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ntdlab: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

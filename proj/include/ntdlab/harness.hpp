#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ntdlab/problems.hpp"
#include "ntdlab/solvers.hpp"
#include "ntdlab/stochastic.hpp"

namespace ntdlab {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Environment variable naming the default output directory for run/sweep.
inline constexpr const char* kOutputDirEnv = "NTDLAB_OUT_DIR";

enum class Algorithm { Npvi, GdI, GdII, System, Ntd, Ngtd };

std::string_view to_string(Algorithm algo);
/// Accepts NPVI, GD_I, GD_II, SYSTEM, NTD, NGTD (case-insensitive).
Algorithm parse_algorithm(std::string_view name);
bool is_stochastic(Algorithm algo);

/// Horizon certificates plus per-n solution reports for n in {1, n*, n_bar*}
/// and any extras. Singular or out-of-range cases are reported inline.
nlohmann::json analyze_problem(const ProblemSpec& problem, int n_max,
                               const std::vector<int>& extra_n = {});

struct RunOptions {
    Algorithm algo = Algorithm::Npvi;
    int n = 1;
    std::optional<double> alpha;  // system iteration; certified by search if absent
    StepSizeSchedule schedule;
    std::int64_t iters = 100000;
    std::uint64_t seed = 0;
    std::int64_t log_every = 1000;
    double tol = 1e-10;
    /// Fill value for theta_0. Deterministic solvers default to 0, the
    /// stochastic ones to 1.
    std::optional<double> theta0;
    /// Final distance below which a stochastic run is called converged.
    double stochastic_tolerance = 0.05;
};

struct RunOutcome {
    std::string csv;
    nlohmann::json summary;
};

RunOutcome run_algorithm(const ProblemSpec& problem, const RunOptions& options);

std::string iter_trace_csv(const IterTrace& trace, const std::vector<std::string>& header);
std::string stoch_trace_csv(const StochTrace& trace, const std::vector<std::string>& header);

struct SweepConfig {
    std::vector<int> n_values;
    std::vector<Algorithm> algorithms;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;
    int jobs = 1;
    RunOptions base;  // everything except algo, n and seed
};

/// Throws ConfigError on empty lists, bad n, or an unusable output directory.
void validate(const SweepConfig& config);

/// One CSV per cell (stochastic cells per seed; deterministic cells once per n)
/// plus summary.json. Returns the summary. Cell failures are recorded, not thrown.
nlohmann::json run_sweep(const ProblemSpec& problem, const SweepConfig& config);

/// Writes to a sibling temporary and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// %.17g, the CSV number format.
std::string format_number(double value);

}  // namespace ntdlab

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "ntdlab/mdp.hpp"

namespace ntdlab {

/// Seeded 64-bit generator. Streams are derived from (seed, stream) through
/// splitmix64, and all draws are built from raw engine output, so traces are
/// identical on every platform. Bump kAlgorithmId if any of that changes.
class Rng {
public:
    static constexpr std::string_view kAlgorithmId = "mt19937_64+splitmix64/v1";

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Index drawn from a discrete distribution given as probabilities.
    int categorical(std::span<const double> probs);

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct TrajectorySample {
    std::vector<int> states;       // s_0 .. s_n
    std::vector<int> actions;      // a_0 .. a_{n-1}
    std::vector<double> rewards;   // r_1 .. r_n, r_{k+1} = r(s_k, a_k, s_{k+1})
    double rho = 1.0;              // prod_k pi(a_k|s_k) / beta(a_k|s_k)
};

/// The restart oracle: s_0 ~ d^beta, then n behaviour-policy steps.
TrajectorySample sample_trajectory(const EvaluationSetup& setup, int n, Rng& rng);

/// n-step return G = sum_{k<n} gamma^k r_{k+1} + gamma^n phi(s_n)^T theta.
double n_step_return(const EvaluationSetup& setup, const TrajectorySample& sample,
                     const Vector& theta);

/// theta + alpha rho (G - phi(s_0)^T theta) phi(s_0).
Vector ntd_step(const EvaluationSetup& setup, int n, const Vector& theta,
                const TrajectorySample& sample, double alpha);

struct PrimalDual {
    Vector theta;
    Vector lambda;
};

/// theta' = theta + alpha rho (phi(s_0) - gamma^n phi(s_n)) phi(s_0)^T lambda
/// lambda' = lambda + alpha rho (G - phi(s_0)^T theta - phi(s_0)^T lambda) phi(s_0)
PrimalDual ngtd_step(const EvaluationSetup& setup, int n, const Vector& theta,
                     const Vector& lambda, const TrajectorySample& sample, double alpha);

/// alpha_i = a / (b + i)^c.
struct StepSizeSchedule {
    double a = 0.5;
    double b = 1000.0;
    double c = 1.0;

    double operator()(std::int64_t i) const;
    /// Throws ConfigError unless a, b > 0 and c in (0.5, 1].
    void validate() const;
    /// sum alpha_i diverges iff c <= 1; sum alpha_i^2 converges iff 2c > 1.
    bool sum_diverges() const { return c <= 1.0; }
    bool sum_of_squares_converges() const { return 2.0 * c > 1.0; }
};

enum class StochasticAlgo { Ntd, Ngtd };

std::string_view to_string(StochasticAlgo algo);

struct StochasticConfig {
    StochasticAlgo algo = StochasticAlgo::Ntd;
    StepSizeSchedule schedule;
    std::int64_t iters = 100000;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::int64_t log_every = 1000;
    /// Defaults: theta_0 = 1 (all ones), lambda_0 = 0.
    std::optional<Vector> theta0;
    std::optional<Vector> lambda0;
};

struct StochTrace {
    std::uint64_t seed = 0;
    std::vector<std::int64_t> iters;
    std::vector<Vector> thetas;
    std::vector<Vector> lambdas;              // n-GTD only
    std::vector<double> dist_to_theta_star_n; // NaN when theta*^n does not exist
    std::optional<Vector> theta_star_n;
    bool diverged = false;
    Vector final_theta;
    Vector final_lambda;
};

/// Runs n-TD or n-GTD with fresh i.i.d. trajectories each iteration. Logs at
/// i = 0, every log_every iterations, and at the final (or diverging) iterate.
StochTrace run_stochastic(const EvaluationSetup& setup, int n, const StochasticConfig& config);

/// Deterministic mean field of n-TD: Phi^T D (T^n(Phi theta) - Phi theta).
Vector ntd_mean_field(const EvaluationSetup& setup, int n, const Vector& theta);

/// Primal-dual gradient field of n-GTD:
/// theta: -(gamma^n P^n Phi - Phi)^T D Phi lambda
/// lambda: Phi^T D (T^n(Phi theta) - Phi theta - Phi lambda)
PrimalDual ngtd_mean_field(const EvaluationSetup& setup, int n, const Vector& theta,
                           const Vector& lambda);

/// Exact expectation of the per-sample update direction (step divided by
/// alpha), by enumerating every start state, action and successor path.
/// Refuses when |S| |A|^n exceeds kMaxEnumeratedPaths.
inline constexpr double kMaxEnumeratedPaths = 1e7;

PrimalDual expected_update(const EvaluationSetup& setup, int n, const Vector& theta,
                           const std::optional<Vector>& lambda, StochasticAlgo algo);

}  // namespace ntdlab

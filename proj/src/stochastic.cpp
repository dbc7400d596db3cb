#include "ntdlab/stochastic.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ntdlab/error.hpp"
#include "ntdlab/operators.hpp"
#include "ntdlab/solvers.hpp"

namespace ntdlab {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int Rng::categorical(std::span<const double> probs) {
    const double u = uniform();
    double cumulative = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cumulative += probs[i];
        last_positive = static_cast<int>(i);
        if (u < cumulative) return last_positive;
    }
    // Only reachable when rounding leaves the total a hair under one.
    return last_positive;
}

namespace {

/// Row-major copies of the behaviour policy, transitions and d^beta so the
/// sampling loop works on contiguous spans.
class TrajectorySampler {
public:
    explicit TrajectorySampler(const EvaluationSetup& setup) : setup_(setup) {
        const int ns = setup.num_states();
        const int na = setup.num_actions();
        d_.assign(setup.d_beta().data(), setup.d_beta().data() + ns);
        behavior_.resize(static_cast<std::size_t>(ns) * na);
        next_.resize(static_cast<std::size_t>(ns) * na * ns);
        for (int s = 0; s < ns; ++s) {
            for (int a = 0; a < na; ++a) {
                behavior_[s * na + a] = setup.behavior_policy()(s, a);
                for (int t = 0; t < ns; ++t) {
                    next_[(static_cast<std::size_t>(s) * na + a) * ns + t] =
                        setup.mdp().probability(s, a, t);
                }
            }
        }
    }

    void sample(int n, Rng& rng, TrajectorySample& out) const {
        const int ns = setup_.num_states();
        const int na = setup_.num_actions();
        out.states.clear();
        out.actions.clear();
        out.rewards.clear();
        out.rho = 1.0;
        int s = rng.categorical(d_);
        out.states.push_back(s);
        for (int k = 0; k < n; ++k) {
            const int a = rng.categorical(std::span<const double>(&behavior_[s * na], na));
            const int next = rng.categorical(std::span<const double>(
                &next_[(static_cast<std::size_t>(s) * na + a) * ns], ns));
            out.rho *= setup_.target_policy()(s, a) / behavior_[s * na + a];
            out.actions.push_back(a);
            out.rewards.push_back(setup_.mdp().reward(s, a, next));
            out.states.push_back(next);
            s = next;
        }
    }

private:
    const EvaluationSetup& setup_;
    std::vector<double> d_;
    std::vector<double> behavior_;
    std::vector<double> next_;
};

void check_sample(const EvaluationSetup& setup, int n, const TrajectorySample& sample) {
    if (n < 1 || static_cast<int>(sample.states.size()) != n + 1 ||
        static_cast<int>(sample.rewards.size()) != n) {
        throw ConfigError("trajectory sample does not have horizon " + std::to_string(n));
    }
    for (int st : sample.states) {
        if (st < 0 || st >= setup.num_states()) throw ConfigError("trajectory sample state out of range");
    }
}

}  // namespace

TrajectorySample sample_trajectory(const EvaluationSetup& setup, int n, Rng& rng) {
    if (n < 1) throw ConfigError("horizon n must be >= 1");
    TrajectorySample out;
    TrajectorySampler(setup).sample(n, rng, out);
    return out;
}

double n_step_return(const EvaluationSetup& setup, const TrajectorySample& sample,
                     const Vector& theta) {
    const double g = setup.gamma();
    double discount = 1.0;
    double ret = 0.0;
    for (double r : sample.rewards) {
        ret += discount * r;
        discount *= g;
    }
    return ret + discount * setup.phi().row(sample.states.back()).dot(theta);
}

Vector ntd_step(const EvaluationSetup& setup, int n, const Vector& theta,
                const TrajectorySample& sample, double alpha) {
    check_sample(setup, n, sample);
    if (sample.rho == 0.0) return theta;
    const auto phi0 = setup.phi().row(sample.states.front());
    const double td = n_step_return(setup, sample, theta) - phi0.dot(theta);
    return theta + (alpha * sample.rho * td) * phi0.transpose();
}

PrimalDual ngtd_step(const EvaluationSetup& setup, int n, const Vector& theta,
                     const Vector& lambda, const TrajectorySample& sample, double alpha) {
    check_sample(setup, n, sample);
    if (sample.rho == 0.0) return {theta, lambda};
    const Matrix& phi = setup.phi();
    const auto phi0 = phi.row(sample.states.front());
    const auto phin = phi.row(sample.states.back());
    const double gn = std::pow(setup.gamma(), n);
    const double h = phi0.dot(lambda);
    const double ret = n_step_return(setup, sample, theta);
    const double scale = alpha * sample.rho;
    PrimalDual out;
    out.theta = theta + (scale * h) * (phi0 - gn * phin).transpose();
    out.lambda = lambda + (scale * (ret - phi0.dot(theta) - h)) * phi0.transpose();
    return out;
}

double StepSizeSchedule::operator()(std::int64_t i) const {
    return a / std::pow(b + static_cast<double>(i), c);
}

void StepSizeSchedule::validate() const {
    if (!(a > 0.0) || !(b > 0.0) || !(c > 0.5 && c <= 1.0)) {
        throw ConfigError("step-size schedule needs a > 0, b > 0 and c in (0.5, 1]");
    }
}

std::string_view to_string(StochasticAlgo algo) {
    return algo == StochasticAlgo::Ntd ? "NTD" : "NGTD";
}

StochTrace run_stochastic(const EvaluationSetup& setup, int n, const StochasticConfig& config) {
    if (n < 1) throw ConfigError("horizon n must be >= 1");
    if (config.iters < 1) throw ConfigError("iters must be >= 1");
    if (config.log_every < 1) throw ConfigError("log_every must be >= 1");
    config.schedule.validate();
    const int m = setup.num_features();
    const bool gtd = config.algo == StochasticAlgo::Ngtd;

    StochTrace tr;
    tr.seed = config.seed;
    try {
        tr.theta_star_n = fixed_point(setup, n);
    } catch (const SingularError&) {
    }
    Vector theta = config.theta0.value_or(Vector::Ones(m));
    Vector lambda = config.lambda0.value_or(Vector::Zero(m));
    if (theta.size() != m || lambda.size() != m) throw ConfigError("initial iterate has wrong length");

    const auto log = [&](std::int64_t i) {
        tr.iters.push_back(i);
        tr.thetas.push_back(theta);
        if (gtd) tr.lambdas.push_back(lambda);
        tr.dist_to_theta_star_n.push_back(tr.theta_star_n
                                              ? (theta - *tr.theta_star_n).norm()
                                              : std::numeric_limits<double>::quiet_NaN());
    };

    const TrajectorySampler sampler(setup);
    Rng rng(config.seed, config.stream);
    TrajectorySample sample;
    log(0);
    for (std::int64_t i = 0; i < config.iters; ++i) {
        sampler.sample(n, rng, sample);
        const double alpha = config.schedule(i);
        if (gtd) {
            PrimalDual next = ngtd_step(setup, n, theta, lambda, sample, alpha);
            theta = std::move(next.theta);
            lambda = std::move(next.lambda);
        } else {
            theta = ntd_step(setup, n, theta, sample, alpha);
        }
        const std::int64_t done = i + 1;
        const bool blown = !theta.allFinite() || !lambda.allFinite() ||
                           theta.lpNorm<Eigen::Infinity>() > kDivergenceThreshold ||
                           lambda.lpNorm<Eigen::Infinity>() > kDivergenceThreshold;
        if (blown) {
            tr.diverged = true;
            log(done);
            break;
        }
        if (done % config.log_every == 0 || done == config.iters) log(done);
    }
    tr.final_theta = theta;
    tr.final_lambda = lambda;
    return tr;
}

Vector ntd_mean_field(const EvaluationSetup& setup, int n, const Vector& theta) {
    const Vector v = setup.phi() * theta;
    return setup.phi().transpose() * setup.d_beta().cwiseProduct(bellman_n(setup, n, v) - v);
}

PrimalDual ngtd_mean_field(const EvaluationSetup& setup, int n, const Vector& theta,
                           const Vector& lambda) {
    const Matrix& phi = setup.phi();
    const Vector& d = setup.d_beta();
    const Matrix shifted = discounted_power_apply(setup, n, phi) - phi;
    PrimalDual out;
    out.theta = -(shifted.transpose() * d.cwiseProduct(phi * lambda));
    const Vector v = phi * theta;
    out.lambda = phi.transpose() * d.cwiseProduct(bellman_n(setup, n, v) - v - phi * lambda);
    return out;
}

namespace {

using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

/// Depth-first walk over every (a_k, s_{k+1}) continuation. Zero-probability
/// branches and branches with a zero importance ratio contribute nothing and
/// are skipped.
class PathEnumerator {
public:
    PathEnumerator(const EvaluationSetup& setup, int n, const Vector& theta, const Vector& lambda,
                   StochasticAlgo algo)
        : setup_(setup), n_(n), theta_(theta), lambda_(lambda), algo_(algo),
          gn_(std::pow(setup.gamma(), n)),
          theta_acc_(LongVector::Zero(setup.num_features())),
          lambda_acc_(LongVector::Zero(setup.num_features())) {}

    void run() {
        for (int s0 = 0; s0 < setup_.num_states(); ++s0) {
            start_ = s0;
            walk(0, s0, setup_.d_beta()(s0), 1.0, 0.0, 1.0);
        }
    }

    PrimalDual result() const {
        return {theta_acc_.cast<double>(), lambda_acc_.cast<double>()};
    }

private:
    void walk(int depth, int s, double weight, double rho, double rewards, double discount) {
        if (depth == n_) {
            leaf(s, weight, rho, rewards);
            return;
        }
        const FiniteMdp& mdp = setup_.mdp();
        for (int a = 0; a < setup_.num_actions(); ++a) {
            const double b = setup_.behavior_policy()(s, a);
            const double p = setup_.target_policy()(s, a);
            if (b == 0.0 || p == 0.0) continue;
            for (int t = 0; t < setup_.num_states(); ++t) {
                const double pt = mdp.probability(s, a, t);
                if (pt == 0.0) continue;
                walk(depth + 1, t, weight * b * pt, rho * (p / b),
                     rewards + discount * mdp.reward(s, a, t), discount * setup_.gamma());
            }
        }
    }

    void leaf(int sn, double weight, double rho, double rewards) {
        const Matrix& phi = setup_.phi();
        const auto phi0 = phi.row(start_);
        const auto phin = phi.row(sn);
        const double ret = rewards + gn_ * phin.dot(theta_);
        const long double w = static_cast<long double>(weight) * rho;
        if (algo_ == StochasticAlgo::Ntd) {
            const double td = ret - phi0.dot(theta_);
            for (Eigen::Index j = 0; j < phi0.size(); ++j) {
                theta_acc_(j) += w * static_cast<long double>(td * phi0(j));
            }
            return;
        }
        const double h = phi0.dot(lambda_);
        const double dual = ret - phi0.dot(theta_) - h;
        for (Eigen::Index j = 0; j < phi0.size(); ++j) {
            theta_acc_(j) += w * static_cast<long double>((phi0(j) - gn_ * phin(j)) * h);
            lambda_acc_(j) += w * static_cast<long double>(dual * phi0(j));
        }
    }

    const EvaluationSetup& setup_;
    int n_;
    const Vector& theta_;
    const Vector& lambda_;
    StochasticAlgo algo_;
    double gn_;
    int start_ = 0;
    LongVector theta_acc_;
    LongVector lambda_acc_;
};

}  // namespace

PrimalDual expected_update(const EvaluationSetup& setup, int n, const Vector& theta,
                           const std::optional<Vector>& lambda, StochasticAlgo algo) {
    if (n < 1) throw ConfigError("horizon n must be >= 1");
    const double paths = setup.num_states() * std::pow(setup.num_actions(), n);
    if (paths > kMaxEnumeratedPaths) {
        throw PreconditionError("enumeration guard: |S||A|^n = " + std::to_string(paths) +
                                " exceeds " + std::to_string(kMaxEnumeratedPaths));
    }
    const int m = setup.num_features();
    if (theta.size() != m) throw ConfigError("theta has wrong length");
    const Vector lam = lambda.value_or(Vector::Zero(m));
    if (lam.size() != m) throw ConfigError("lambda has wrong length");
    PathEnumerator walker(setup, n, theta, lam, algo);
    walker.run();
    return walker.result();
}

}  // namespace ntdlab

#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace ntdlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerance for row sums of stochastic matrices held in memory.
inline constexpr double kProbabilityTolerance = 1e-12;

/// Tabular MDP with deterministic rewards r(s, a, s').
///
/// Transitions and rewards are stored per action as |S|x|S| matrices, so
/// transition(a)(s, s') = P(s'|s, a). The constructor validates every row and
/// the discount factor and throws ConfigError on violation.
class FiniteMdp {
public:
    FiniteMdp(std::vector<Matrix> transition, std::vector<Matrix> reward, double gamma);

    int num_states() const { return static_cast<int>(transition_.front().rows()); }
    int num_actions() const { return static_cast<int>(transition_.size()); }
    double gamma() const { return gamma_; }

    const Matrix& transition(int action) const { return transition_.at(action); }
    const Matrix& reward(int action) const { return reward_.at(action); }

    double probability(int s, int a, int next) const { return transition_[a](s, next); }
    double reward(int s, int a, int next) const { return reward_[a](s, next); }

private:
    std::vector<Matrix> transition_;
    std::vector<Matrix> reward_;
    double gamma_;
};

/// Stochastic policy, probs(s, a) = pi(a|s).
class Policy {
public:
    explicit Policy(Matrix probs);

    double operator()(int s, int a) const { return probs_(s, a); }
    const Matrix& probs() const { return probs_; }
    int num_states() const { return static_cast<int>(probs_.rows()); }
    int num_actions() const { return static_cast<int>(probs_.cols()); }

    static Policy uniform(int num_states, int num_actions);
    static Policy deterministic(int num_states, int num_actions, int action);

private:
    Matrix probs_;
};

/// Feature matrix Phi (|S| x m). Must have full column rank.
class FeatureMap {
public:
    explicit FeatureMap(Matrix phi);

    const Matrix& phi() const { return phi_; }
    int num_features() const { return static_cast<int>(phi_.cols()); }
    int num_states() const { return static_cast<int>(phi_.rows()); }

private:
    Matrix phi_;
};

struct PolicyKernel {
    Matrix p_pi;
    Vector r_pi;
};

/// P^pi(s, s') = sum_a pi(a|s) P(s'|s,a) and the expected one-step reward R^pi.
PolicyKernel policy_kernel(const FiniteMdp& mdp, const Policy& policy);

/// Stationary distribution of the chain induced by `policy`, via damped power
/// iteration. Throws ConfigError if the chain is not irreducible enough to give
/// a strictly positive distribution.
Vector stationary_distribution(const FiniteMdp& mdp, const Policy& policy);

/// Everything the evaluation operators consume: the target kernel, the
/// features, the behaviour weighting d^beta and the off-policy pair.
class EvaluationSetup {
public:
    EvaluationSetup(FiniteMdp mdp, Policy target, Policy behavior, FeatureMap features,
                    Vector d_beta);

    const FiniteMdp& mdp() const { return mdp_; }
    const Policy& target_policy() const { return target_; }
    const Policy& behavior_policy() const { return behavior_; }
    const FeatureMap& features() const { return features_; }
    const Matrix& phi() const { return features_.phi(); }
    const PolicyKernel& kernel() const { return kernel_; }
    const Matrix& p_pi() const { return kernel_.p_pi; }
    const Vector& r_pi() const { return kernel_.r_pi; }
    const Vector& d_beta() const { return d_beta_; }
    double gamma() const { return mdp_.gamma(); }
    int num_states() const { return mdp_.num_states(); }
    int num_actions() const { return mdp_.num_actions(); }
    int num_features() const { return features_.num_features(); }

    /// Phi^T D^beta Phi.
    const Matrix& gram() const { return gram_; }

private:
    FiniteMdp mdp_;
    Policy target_;
    Policy behavior_;
    FeatureMap features_;
    Vector d_beta_;
    PolicyKernel kernel_;
    Matrix gram_;
};

/// Validates shapes and support, and fills d^beta from the behaviour chain
/// unless an override is given.
EvaluationSetup build_setup(const FiniteMdp& mdp, const Policy& target, const Policy& behavior,
                            const FeatureMap& features,
                            const std::optional<Vector>& d_beta_override = std::nullopt);

/// Weighted norm sqrt(x^T diag(d) x).
double weighted_norm(const Vector& x, const Vector& d);

}  // namespace ntdlab

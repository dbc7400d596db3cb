#include "ntdlab/mdp.hpp"

#include <cmath>
#include <string>

#include "ntdlab/error.hpp"

namespace ntdlab {

namespace {

void check_stochastic_rows(const Matrix& m, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            if (!std::isfinite(v) || v < 0.0) {
                throw ConfigError(what + ": row " + std::to_string(r) +
                                  " has a negative or non-finite entry");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kProbabilityTolerance) {
            throw ConfigError(what + ": row " + std::to_string(r) + " sums to " +
                              std::to_string(sum));
        }
    }
}

constexpr double kRankThreshold = 1e-10;
constexpr int kStationaryMaxIters = 100000;
constexpr double kStationaryTol = 1e-12;
constexpr double kStationaryResidual = 1e-10;

}  // namespace

FiniteMdp::FiniteMdp(std::vector<Matrix> transition, std::vector<Matrix> reward, double gamma)
    : transition_(std::move(transition)), reward_(std::move(reward)), gamma_(gamma) {
    if (transition_.empty()) throw ConfigError("mdp needs at least one action");
    if (reward_.size() != transition_.size()) {
        throw ConfigError("reward and transition disagree on the number of actions");
    }
    const Eigen::Index ns = transition_.front().rows();
    if (ns == 0) throw ConfigError("mdp needs at least one state");
    for (std::size_t a = 0; a < transition_.size(); ++a) {
        if (transition_[a].rows() != ns || transition_[a].cols() != ns ||
            reward_[a].rows() != ns || reward_[a].cols() != ns) {
            throw ConfigError("action " + std::to_string(a) + ": expected " +
                              std::to_string(ns) + "x" + std::to_string(ns) + " blocks");
        }
        check_stochastic_rows(transition_[a], "transition for action " + std::to_string(a));
        if (!reward_[a].allFinite()) {
            throw ConfigError("reward for action " + std::to_string(a) + " is not finite");
        }
    }
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) {
        throw ConfigError("gamma must lie strictly inside (0, 1), got " + std::to_string(gamma_));
    }
}

Policy::Policy(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw ConfigError("empty policy");
    check_stochastic_rows(probs_, "policy");
}

Policy Policy::uniform(int num_states, int num_actions) {
    return Policy(Matrix::Constant(num_states, num_actions, 1.0 / num_actions));
}

Policy Policy::deterministic(int num_states, int num_actions, int action) {
    Matrix probs = Matrix::Zero(num_states, num_actions);
    probs.col(action).setOnes();
    return Policy(std::move(probs));
}

FeatureMap::FeatureMap(Matrix phi) : phi_(std::move(phi)) {
    if (phi_.rows() == 0 || phi_.cols() == 0) throw ConfigError("empty feature matrix");
    if (phi_.cols() > phi_.rows()) {
        throw RankError("feature matrix has more columns (" + std::to_string(phi_.cols()) +
                        ") than states (" + std::to_string(phi_.rows()) + ")");
    }
    if (!phi_.allFinite()) throw ConfigError("feature matrix is not finite");
    Eigen::JacobiSVD<Matrix> svd(phi_);
    const Vector& sv = svd.singularValues();
    if (sv(0) == 0.0 || sv(sv.size() - 1) <= kRankThreshold * sv(0)) {
        throw RankError("feature matrix is not of full column rank");
    }
}

PolicyKernel policy_kernel(const FiniteMdp& mdp, const Policy& policy) {
    const int ns = mdp.num_states();
    const int na = mdp.num_actions();
    if (policy.num_states() != ns || policy.num_actions() != na) {
        throw ConfigError("policy is " + std::to_string(policy.num_states()) + "x" +
                          std::to_string(policy.num_actions()) + " but mdp has " +
                          std::to_string(ns) + " states and " + std::to_string(na) + " actions");
    }
    PolicyKernel k{Matrix::Zero(ns, ns), Vector::Zero(ns)};
    for (int a = 0; a < na; ++a) {
        const Vector w = policy.probs().col(a);
        k.p_pi.noalias() += w.asDiagonal() * mdp.transition(a);
        k.r_pi += w.cwiseProduct(mdp.transition(a).cwiseProduct(mdp.reward(a)).rowwise().sum());
    }
    return k;
}

Vector stationary_distribution(const FiniteMdp& mdp, const Policy& policy) {
    const Matrix p = policy_kernel(mdp, policy).p_pi;
    const int ns = mdp.num_states();
    Vector d = Vector::Constant(ns, 1.0 / ns);
    const Matrix pt = p.transpose();
    bool settled = false;
    for (int it = 0; it < kStationaryMaxIters; ++it) {
        Vector next = 0.5 * d + 0.5 * (pt * d);
        next /= next.sum();
        const double change = (next - d).lpNorm<Eigen::Infinity>();
        d = std::move(next);
        if (change <= kStationaryTol) {
            settled = true;
            break;
        }
    }
    const double residual = (pt * d - d).lpNorm<Eigen::Infinity>();
    if (!settled || residual > kStationaryResidual) {
        throw ConfigError("behaviour chain did not reach a stationary distribution; "
                          "supply d_beta explicitly");
    }
    if (d.minCoeff() <= kStationaryResidual) {
        throw ConfigError("behaviour chain is not irreducible (a state has zero stationary "
                          "mass); supply d_beta explicitly");
    }
    return d;
}

EvaluationSetup::EvaluationSetup(FiniteMdp mdp, Policy target, Policy behavior,
                                 FeatureMap features, Vector d_beta)
    : mdp_(std::move(mdp)),
      target_(std::move(target)),
      behavior_(std::move(behavior)),
      features_(std::move(features)),
      d_beta_(std::move(d_beta)),
      kernel_(policy_kernel(mdp_, target_)) {
    const int ns = mdp_.num_states();
    if (behavior_.num_states() != ns || behavior_.num_actions() != mdp_.num_actions()) {
        throw ConfigError("behaviour policy shape does not match the mdp");
    }
    if (features_.num_states() != ns) {
        throw ConfigError("feature matrix has " + std::to_string(features_.num_states()) +
                          " rows but mdp has " + std::to_string(ns) + " states");
    }
    if (d_beta_.size() != ns) throw ConfigError("d_beta has the wrong length");
    for (int s = 0; s < ns; ++s) {
        if (!(d_beta_(s) > 0.0) || !std::isfinite(d_beta_(s))) {
            throw ConfigError("d_beta(" + std::to_string(s) + ") must be strictly positive");
        }
    }
    if (std::abs(d_beta_.sum() - 1.0) > 1e-9) throw ConfigError("d_beta must sum to one");
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < mdp_.num_actions(); ++a) {
            if (target_(s, a) > 0.0 && behavior_(s, a) == 0.0) {
                throw ConfigError("behaviour policy has no support for action " +
                                  std::to_string(a) + " in state " + std::to_string(s) +
                                  " where the target policy is positive");
            }
        }
    }
    const Matrix& phi = features_.phi();
    gram_ = phi.transpose() * d_beta_.asDiagonal() * phi;
}

EvaluationSetup build_setup(const FiniteMdp& mdp, const Policy& target, const Policy& behavior,
                            const FeatureMap& features,
                            const std::optional<Vector>& d_beta_override) {
    if (target.num_states() != mdp.num_states() || target.num_actions() != mdp.num_actions()) {
        throw ConfigError("target policy shape does not match the mdp");
    }
    Vector d = d_beta_override ? *d_beta_override : stationary_distribution(mdp, behavior);
    return EvaluationSetup(mdp, target, behavior, features, std::move(d));
}

double weighted_norm(const Vector& x, const Vector& d) {
    return std::sqrt(x.dot(d.cwiseProduct(x)));
}

}  // namespace ntdlab

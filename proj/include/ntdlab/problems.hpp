#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ntdlab/mdp.hpp"

namespace ntdlab {

struct RandomProblemParams {
    int states = 5;
    int actions = 2;
    int features = 2;
    std::uint64_t seed = 0;
    double gamma = 0.9;
};

/// Two states, two actions: a1 moves to s1, a2 moves to s2, all rewards zero.
/// Target always plays a2, behaviour is uniform, Phi = [1; 2].
EvaluationSetup make_twostate(double gamma = 0.99);

/// Baird's seven-state star. Action 0 ("dashed") jumps uniformly to one of the
/// six upper states, action 1 ("solid") jumps to the lower state. Behaviour
/// plays dashed with probability 6/7, the target always plays solid. The
/// classic eight weights are rank deficient on seven states, so the weight
/// private to the lower state is dropped: upper state i is 2 w_i + w_shared,
/// the lower state is 2 w_shared.
EvaluationSetup make_baird_star(double gamma = 0.99);

/// Dense random MDP with strictly positive transitions and policies, rewards
/// uniform on [-1, 1] and features uniform on [-1, 1].
EvaluationSetup make_random(const RandomProblemParams& params);

struct ProblemSpec {
    std::string name;
    std::string source;
    EvaluationSetup setup;
};

/// Resolves "twostate", "baird-star", "random-k?states=..&actions=..&features=..&seed=..&gamma=.."
/// or a path to a JSON problem file.
ProblemSpec load_problem(const std::string& source);

/// Builds a setup from a problem document. Probability rows within 1e-9 of
/// one are renormalised; anything further off is rejected with its location.
EvaluationSetup parse_problem(const nlohmann::json& doc);

/// Canonical JSON form of a setup (same schema parse_problem reads, with
/// d_beta always present).
nlohmann::json problem_to_json(const EvaluationSetup& setup);

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string problem_hash(const EvaluationSetup& setup);

}  // namespace ntdlab

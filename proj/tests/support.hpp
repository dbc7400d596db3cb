#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ntdlab/mdp.hpp"
#include "ntdlab/problems.hpp"
#include "ntdlab/stochastic.hpp"

namespace ntdlab::testing {

inline EvaluationSetup random_setup(std::uint64_t seed, int states = 5, int actions = 2,
                                    int features = 2, double gamma = 0.9) {
    return make_random({states, actions, features, seed, gamma});
}

/// Setup sizes drawn from the seed itself, |S| in [2, 8] and m in [1, min(|S|, 4)].
inline EvaluationSetup varied_setup(std::uint64_t seed, double gamma = 0.9) {
    Rng rng(seed, 0x73697a65);
    const int states = 2 + static_cast<int>(rng.uniform() * 7);
    const int actions = 1 + static_cast<int>(rng.uniform() * 3);
    const int features = 1 + static_cast<int>(rng.uniform() * std::min(states, 4));
    return make_random({states, actions, features, seed, gamma});
}

inline Vector random_vector(Rng& rng, int size, double scale = 1.0) {
    Vector v(size);
    for (int i = 0; i < size; ++i) v(i) = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

/// gamma^n (P^pi)^n as an explicit dense power, independent of the library's
/// repeated-application path.
inline Matrix explicit_discounted_power(const EvaluationSetup& s, int n) {
    Matrix p = Matrix::Identity(s.num_states(), s.num_states());
    for (int k = 0; k < n; ++k) p = p * s.p_pi();
    return std::pow(s.gamma(), n) * p;
}

inline Matrix diag(const Vector& d) { return d.asDiagonal(); }

}  // namespace ntdlab::testing

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ntdlab/error.hpp"
#include "ntdlab/operators.hpp"
#include "ntdlab/problems.hpp"
#include "support.hpp"

using namespace ntdlab;
using namespace ntdlab::testing;

namespace {

EvaluationSetup with_identity_features(const EvaluationSetup& s, bool on_policy) {
    const Policy& beta = on_policy ? s.target_policy() : s.behavior_policy();
    return build_setup(s.mdp(), s.target_policy(), beta,
                       FeatureMap(Matrix::Identity(s.num_states(), s.num_states())));
}

EvaluationSetup on_policy(const EvaluationSetup& s) {
    return build_setup(s.mdp(), s.target_policy(), s.target_policy(), s.features());
}

/// Sum_{k<n} gamma^k P^k R + gamma^n P^n x with explicit matrix powers.
Vector bellman_oracle(const EvaluationSetup& s, int n, const Vector& x) {
    Vector acc = Vector::Zero(s.num_states());
    Matrix pk = Matrix::Identity(s.num_states(), s.num_states());
    for (int k = 0; k < n; ++k) {
        acc += std::pow(s.gamma(), k) * pk * s.r_pi();
        pk = pk * s.p_pi();
    }
    return acc + std::pow(s.gamma(), n) * pk * x;
}

Matrix projection_oracle(const EvaluationSetup& s) {
    const Matrix d = diag(s.d_beta());
    const Matrix& phi = s.phi();
    return phi * (phi.transpose() * d * phi).inverse() * phi.transpose() * d;
}

}  // namespace

TEST_CASE("projection of the twostate problem") {
    const auto s = make_twostate();
    const ProjectionData p = projection(s);
    Matrix expected(2, 2);
    expected << 0.2, 0.4, 0.4, 0.8;
    CHECK((p.pi_matrix - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(p.inf_norm == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(p.gram_inverse(0, 0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK((p.pi_matrix * p.pi_matrix - p.pi_matrix).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("identity features project to the identity") {
    const auto s = with_identity_features(random_setup(3), false);
    const ProjectionData p = projection(s);
    CHECK((p.pi_matrix - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(p.inf_norm == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(contraction_horizon(s) == 1);
}

TEST_CASE("projection matches the closed form, is idempotent and D-nonexpansive") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = varied_setup(seed);
        const ProjectionData p = projection(s);
        CHECK((p.pi_matrix - projection_oracle(s)).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(inf_norm(p.pi_matrix * p.pi_matrix - p.pi_matrix) <= 1e-10);
        Rng rng(seed, 1);
        for (int k = 0; k < 50; ++k) {
            const Vector x = random_vector(rng, s.num_states(), 10.0);
            const Vector y = random_vector(rng, s.num_states(), 10.0);
            const double lhs = weighted_norm(p.pi_matrix * (x - y), s.d_beta());
            const double rhs = weighted_norm(x - y, s.d_beta());
            INFO("seed ", seed, " m ", s.num_features(), " S ", s.num_states(), " diff ", lhs - rhs);
            CHECK(lhs <= rhs + 1e-12);
        }
    }
}

TEST_CASE("ill-conditioned Gram is a rank error") {
    const auto base = random_setup(5, 3, 2, 1);
    Matrix phi(3, 2);
    phi << 1, 1, 1, 1 + 1e-7, 0.5, 0.5;
    const auto s = build_setup(base.mdp(), base.target_policy(), base.behavior_policy(),
                               FeatureMap(phi));
    CHECK_THROWS_AS(projection(s), RankError);
}

TEST_CASE("bellman_n agrees with the explicit series") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = varied_setup(seed);
        Rng rng(seed, 2);
        const Vector x = random_vector(rng, s.num_states());
        for (int n : {1, 2, 7, 30}) {
            CHECK((bellman_n(s, n, x) - bellman_oracle(s, n, x)).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
        const Vector one_step = s.r_pi() + s.gamma() * s.p_pi() * x;
        CHECK((bellman_n(s, 1, x) - one_step).lpNorm<Eigen::Infinity>() <= 1e-14);
    }
}

TEST_CASE("zero rewards reduce bellman_n to the discounted power") {
    const auto s = make_twostate();
    Vector x(2);
    x << 0.3, -1.7;
    const Vector expected = explicit_discounted_power(s, 5) * x;
    CHECK((bellman_n(s, 5, x) - expected).lpNorm<Eigen::Infinity>() <= 1e-15);
    CHECK((discounted_power_apply(s, 5, x) - expected).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("V^pi is a fixed point of every bellman_n") {
    const auto s = random_setup(9);
    const Vector v = true_solution(s).v_pi;
    for (int n : {1, 4, 25}) {
        CHECK((bellman_n(s, n, v) - v).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
}

TEST_CASE("contraction horizon formula") {
    CHECK(contraction_horizon(1.2, 0.99) == 20);
    CHECK(contraction_horizon(2.0, 0.9) == 8);
    CHECK(contraction_horizon(1.0, 0.5) == 1);
    CHECK(contraction_horizon(0.9, 0.5) == 1);
    CHECK(contraction_horizon(make_twostate()) == 20);
}

TEST_CASE("contraction horizon certifies contraction on random setups") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = varied_setup(seed);
        const double norm = projection(s).inf_norm;
        const int n_star = contraction_horizon(s);
        CHECK(std::pow(s.gamma(), n_star) * norm < 1.0);
    }
}

TEST_CASE("twostate Hurwitz horizon") {
    const auto s = make_twostate();
    const HorizonReport r = hurwitz_horizon(s, 100);
    CHECK(r.n_star == 20);
    REQUIRE(r.n_bar_star.has_value());
    CHECK(*r.n_bar_star == 19);
    CHECK(r.n_min_contracting == 19);
    CHECK(r.pi_inf_norm == doctest::Approx(1.2));
    REQUIRE(r.per_n.size() >= 20);
    for (const HorizonRecord& rec : r.per_n) {
        const double b = 3.0 * std::pow(0.99, rec.n) - 2.5;
        CHECK(system_matrix(s, rec.n)(0, 0) == doctest::Approx(b).epsilon(1e-12));
        CHECK(rec.sym_part_max_eigenvalue == doctest::Approx(2.0 * b).epsilon(1e-12));
        CHECK(rec.contraction_bound == doctest::Approx(1.2 * std::pow(0.99, rec.n)).epsilon(1e-12));
    }
    CHECK(r.per_n[17].sym_part_max_eigenvalue > 0.0);
    CHECK(r.per_n[18].sym_part_max_eigenvalue < 0.0);
}

TEST_CASE("Hurwitz horizon reports not found below n_max") {
    const HorizonReport r = hurwitz_horizon(make_twostate(), 10);
    CHECK_FALSE(r.n_bar_star.has_value());
    CHECK(r.n_max == 10);
}

TEST_CASE("on-policy tabular TD is Hurwitz at n = 1") {
    const auto s = with_identity_features(random_setup(17, 6, 3, 2), true);
    const HorizonReport r = hurwitz_horizon(s, 50);
    REQUIRE(r.n_bar_star.has_value());
    CHECK(*r.n_bar_star == 1);
}

TEST_CASE("symmetric part of B_n tends to -2 Gram") {
    const auto s = random_setup(23, 5, 2, 3);
    const Matrix b = system_matrix(s, 400);
    CHECK(((b + b.transpose()) + 2.0 * s.gram()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("system matrix and offset against explicit powers") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = varied_setup(seed);
        const Matrix d = diag(s.d_beta());
        for (int n : {1, 3, 12}) {
            const Matrix bn = s.phi().transpose() * d *
                              (explicit_discounted_power(s, n) -
                               Matrix::Identity(s.num_states(), s.num_states())) * s.phi();
            CHECK((system_matrix(s, n) - bn).cwiseAbs().maxCoeff() <= 1e-12);
            const Vector bv = s.phi().transpose() * d * bellman_oracle(s, n, Vector::Zero(s.num_states()));
            CHECK((system_offset(s, n) - bv).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
    }
}

TEST_CASE("zero rewards give a zero fixed point") {
    const auto s = make_twostate();
    for (int n : {1, 19, 20, 40}) CHECK(fixed_point(s, n).norm() == 0.0);
}

TEST_CASE("singular A_n is reported, not regularised") {
    const auto s = make_twostate(5.0 / 6.0);
    CHECK_THROWS_WITH_AS(fixed_point(s, 1), doctest::Contains("n = 1"), SingularError);
}

TEST_CASE("one-step fixed point matches the TD solution") {
    const auto s = random_setup(31, 5, 2, 2);
    const Matrix d = diag(s.d_beta());
    const Matrix& phi = s.phi();
    const Matrix a = phi.transpose() * d * (Matrix::Identity(5, 5) - s.gamma() * s.p_pi()) * phi;
    const Vector td = a.fullPivLu().solve(phi.transpose() * d * s.r_pi());
    CHECK((fixed_point(s, 1) - td).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("fixed point at n* agrees with 500 projected value iterations") {
    const auto s = random_setup(37, 5, 2, 2);
    const int n = contraction_horizon(s);
    const Matrix pi = projection_oracle(s);
    Vector v = Vector::Zero(5);
    for (int k = 0; k < 500; ++k) v = pi * bellman_oracle(s, n, v);
    const Vector theta = s.gram().ldlt().solve(s.phi().transpose() * diag(s.d_beta()) * v);
    const Vector fp = fixed_point(s, n);
    CHECK((fp - theta).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(fixed_point_residual(s, n, fp) <= 1e-8);
}

TEST_CASE("true solution oracles") {
    SUBCASE("zero rewards") {
        const TrueSolution t = true_solution(make_twostate());
        CHECK(t.v_pi.isZero());
        CHECK(t.theta_star_inf.isZero());
    }
    SUBCASE("constant reward") {
        const auto base = random_setup(41, 4, 2, 2, 0.8);
        std::vector<Matrix> p, r;
        for (int a = 0; a < 2; ++a) {
            p.push_back(base.mdp().transition(a));
            r.push_back(Matrix::Constant(4, 4, 3.0));
        }
        const auto s = build_setup(FiniteMdp(p, r, 0.8), base.target_policy(),
                                   base.behavior_policy(), base.features());
        CHECK((true_solution(s).v_pi.array() - 15.0).abs().maxCoeff() <= 1e-10);
    }
    SUBCASE("truncated series") {
        const auto s = random_setup(43);
        Vector series = Vector::Zero(5);
        Vector term = s.r_pi();
        for (int k = 0; k <= 2000; ++k) {
            series += term;
            term = s.gamma() * s.p_pi() * term;
        }
        const TrueSolution t = true_solution(s);
        CHECK((t.v_pi - series).lpNorm<Eigen::Infinity>() <= 1e-8);
        CHECK((s.phi() * t.theta_star_inf - projection_oracle(s) * t.v_pi).lpNorm<Eigen::Infinity>() <=
              1e-10);
    }
}

TEST_CASE("error bounds") {
    SUBCASE("representable value function") {
        const auto s = with_identity_features(random_setup(47), false);
        const SolutionReport r = error_bounds(s, 1);
        CHECK(r.bound_value <= 1e-12);
        CHECK(r.bound_gap <= 1e-12);
        CHECK(r.actual_value_error <= 1e-10);
        CHECK(r.actual_gap <= 1e-10);
    }
    SUBCASE("twostate with zero rewards") {
        const SolutionReport r = error_bounds(make_twostate(), 20);
        CHECK(r.bound_value == 0.0);
        CHECK(r.bound_gap == 0.0);
        CHECK(r.actual_value_error == 0.0);
        CHECK(r.actual_gap == 0.0);
    }
    SUBCASE("below the horizon names n*") {
        CHECK_THROWS_WITH_AS(error_bounds(make_twostate(), 19), doctest::Contains("20"),
                             PreconditionError);
    }
    SUBCASE("random 4-state problem shrinks with n") {
        const auto s = random_setup(53, 4, 2, 2);
        const int n_star = contraction_horizon(s);
        double prev_gap_bound = INFINITY;
        for (int n : {n_star, n_star + 5, n_star + 10}) {
            const SolutionReport r = error_bounds(s, n);
            CHECK(r.actual_value_error <= r.bound_value);
            CHECK(r.actual_gap <= r.bound_gap);
            if (std::isfinite(prev_gap_bound)) {
                CHECK(r.bound_gap <= std::pow(s.gamma(), 5) * prev_gap_bound + 1e-15);
            }
            prev_gap_bound = r.bound_gap;
        }
    }
}

TEST_CASE("on-policy contraction in the stationary norm") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = on_policy(varied_setup(seed));
        Rng rng(seed, 3);
        for (int n : {1, 3, 10}) {
            for (int k = 0; k < 100; ++k) {
                const Vector x = random_vector(rng, s.num_states(), 5.0);
                const Vector y = random_vector(rng, s.num_states(), 5.0);
                const double lhs = weighted_norm(bellman_n(s, n, x) - bellman_n(s, n, y), s.d_beta());
                CHECK(lhs <= std::pow(s.gamma(), n) * weighted_norm(x - y, s.d_beta()) + 1e-12);
            }
        }
    }
}

TEST_CASE("off-policy sup-norm contraction from n*") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto s = varied_setup(seed);
        const ProjectionData p = projection(s);
        const int n = contraction_horizon(s);
        const double factor = std::pow(s.gamma(), n) * p.inf_norm;
        Rng rng(seed, 4);
        for (int k = 0; k < 50; ++k) {
            const Vector x = random_vector(rng, s.num_states(), 5.0);
            const Vector y = random_vector(rng, s.num_states(), 5.0);
            const double lhs = (projected_bellman_n(s, n, x) - projected_bellman_n(s, n, y))
                                   .lpNorm<Eigen::Infinity>();
            CHECK(lhs <= factor * (x - y).lpNorm<Eigen::Infinity>() + 1e-12);
        }
    }
}

TEST_CASE("contraction implies nonsingular A_n") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = varied_setup(seed, 0.95);
        const HorizonReport r = hurwitz_horizon(s, 400);
        for (const HorizonRecord& rec : r.per_n) {
            if (rec.contraction_bound < 1.0) CHECK(rec.a_n_nonsingular);
        }
    }
}

TEST_CASE("fixed points approach theta*_inf within the gap bound") {
    const auto s = random_setup(59, 6, 2, 3);
    const int n_star = contraction_horizon(s);
    const Vector target = true_solution(s).theta_star_inf;
    double prev = INFINITY;
    for (int n = n_star; n <= n_star + 60; n += 10) {
        const SolutionReport r = error_bounds(s, n);
        const double gap = (s.phi() * (r.theta_star_n - target)).lpNorm<Eigen::Infinity>();
        CHECK(gap <= r.bound_gap + 1e-12);
        CHECK(r.bound_gap < prev);
        prev = r.bound_gap;
    }
    CHECK(prev < 1e-1);
}

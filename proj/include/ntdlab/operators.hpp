#pragma once

#include <optional>
#include <vector>

#include "ntdlab/mdp.hpp"

namespace ntdlab {

/// Condition number guard shared by every linear solve that must be unique.
inline constexpr double kMaxConditionNumber = 1e12;

/// 2-norm condition number via SVD; +inf for an exactly singular matrix.
double condition_number(const Matrix& m);

/// Induced infinity norm (max absolute row sum).
double inf_norm(const Matrix& m);

struct ProjectionData {
    Matrix pi_matrix;
    Matrix gram_inverse;
    double inf_norm = 0.0;
};

/// Pi = Phi (Phi^T D Phi)^{-1} Phi^T D. Throws RankError when the Gram matrix
/// is too ill-conditioned.
ProjectionData projection(const EvaluationSetup& setup);

/// gamma^n (P^pi)^n X, by n successive left multiplications with gamma P^pi.
Matrix discounted_power_apply(const EvaluationSetup& setup, int n, const Matrix& x);

/// n-step Bellman operator T^n(x), by n applications of x -> R + gamma P x.
Vector bellman_n(const EvaluationSetup& setup, int n, const Vector& x);

/// Pi T^n(x).
Vector projected_bellman_n(const EvaluationSetup& setup, int n, const Vector& x);

/// B_n = Phi^T D (gamma^n (P^pi)^n - I) Phi. A_n in the fixed-point equation is -B_n.
Matrix system_matrix(const EvaluationSetup& setup, int n);

/// Phi^T D sum_{k<n} gamma^k (P^pi)^k R^pi, the right-hand side of A_n theta = b_n.
Vector system_offset(const EvaluationSetup& setup, int n);

/// ceil(ln(1/||Pi||_inf) / ln(gamma)) + 1 when ||Pi||_inf >= 1, otherwise 1.
int contraction_horizon(double pi_inf_norm, double gamma);
int contraction_horizon(const EvaluationSetup& setup);

struct HorizonRecord {
    int n = 0;
    double contraction_bound = 0.0;        // gamma^n ||Pi||_inf
    double sym_part_max_eigenvalue = 0.0;  // lambda_max(B_n + B_n^T)
    double a_n_condition = 0.0;
    bool a_n_nonsingular = false;
};

struct HorizonReport {
    int n_star = 1;
    std::optional<int> n_bar_star;
    /// Smallest n with gamma^n ||Pi||_inf < 1. The formula value n_star is
    /// sufficient and can exceed this by one.
    int n_min_contracting = 1;
    double pi_inf_norm = 0.0;
    int n_max = 0;
    std::vector<HorizonRecord> per_n;
};

/// Scans n = 1, 2, ... until both n_star and the first n whose B_n has a
/// negative definite symmetric part are covered, or n_max is reached.
HorizonReport hurwitz_horizon(const EvaluationSetup& setup, int n_max = 10000);

/// theta*^n = A_n^{-1} b_n. Throws SingularError when A_n is numerically singular.
Vector fixed_point(const EvaluationSetup& setup, int n);

/// ||Phi theta - Pi T^n(Phi theta)||_inf.
double fixed_point_residual(const EvaluationSetup& setup, int n, const Vector& theta);

struct TrueSolution {
    Vector v_pi;
    Vector theta_star_inf;
};

TrueSolution true_solution(const EvaluationSetup& setup);

struct SolutionReport {
    int n = 0;
    Vector theta_star_n;
    Vector theta_star_inf;
    Vector v_pi;
    double contraction_factor = 0.0;  // gamma^n ||Pi||_inf
    double bound_value = 0.0;
    double bound_gap = 0.0;
    double actual_value_error = 0.0;
    double actual_gap = 0.0;
};

/// Value-error and solution-gap bounds at horizon n. Throws PreconditionError
/// when n is below contraction_horizon(setup).
SolutionReport error_bounds(const EvaluationSetup& setup, int n);

}  // namespace ntdlab

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "ntdlab/mdp.hpp"

namespace ntdlab {

/// MspbeI:      f(theta) = 1/2 ||Pi T^n(Phi theta) - Phi theta||^2_D
/// CompositeII: f(theta) = 1/2 g^T (Phi^T D Phi) g, g = Phi^T D (T^n(Phi theta) - Phi theta)
enum class ObjectiveKind { MspbeI, CompositeII };

std::string_view to_string(ObjectiveKind kind);

struct CurvatureReport {
    Matrix hessian;
    double lambda_min = 0.0;  // smallest eigenvalue, sigma_min(F)^2
    double mu = 0.0;          // lambda_min, or 0 when it is lost in rounding
    double lip = 0.0;
    /// 2/(mu+L) when mu > 0; 1/L in the merely convex regime.
    double step_size = 0.0;
    bool strongly_convex = false;
};

/// Hessian Gamma = C^T W C with C = B_n and W = (Phi^T D Phi)^{-1} for MspbeI,
/// W = Phi^T D Phi for CompositeII.
CurvatureReport curvature(const EvaluationSetup& setup, int n, ObjectiveKind kind);

struct ObjectiveValue {
    double value = 0.0;
    Vector gradient;
};

/// Value and gradient evaluated through the operators (T^n, Pi), independent
/// of the assembled Hessian.
ObjectiveValue objective_value_and_gradient(const EvaluationSetup& setup, int n,
                                            ObjectiveKind kind, const Vector& theta);

struct SolverOptions {
    int max_iters = 100000;
    double tol = 1e-10;
};

inline constexpr double kDivergenceThreshold = 1e9;
inline constexpr double kRateSlack = 1e-9;

/// Per-iteration record of a deterministic solver. Index k holds theta_k.
struct IterTrace {
    std::vector<Vector> thetas;
    std::vector<double> residual_inf;        // ||Phi theta_k - Pi T^n(Phi theta_k)||_inf
    std::vector<double> dist_to_fixed_point; // ||theta_k - theta*^n||_2, NaN without one
    /// Quantity the solver's rate certificate bounds, and the bound itself.
    /// n-PVI: ||Phi(theta_k - theta*^n)||_inf. GD: ||theta_k - theta*^n||_2^2.
    /// Empty when no certificate applies.
    std::vector<double> rate_metric;
    std::vector<double> rate_bound;
    bool converged = false;
    bool diverged = false;
    int iterations_used = 0;
    double step_size = 0.0;
};

/// theta_{k+1} = (Phi^T D Phi)^{-1} Phi^T D T^n(Phi theta_k).
IterTrace npvi_run(const EvaluationSetup& setup, int n, const Vector& theta0,
                   const SolverOptions& opts = {});

/// Gradient descent with alpha from curvature(). When mu > 0 every iterate is
/// checked against the linear rate; a violation throws std::logic_error.
IterTrace gradient_descent_run(const EvaluationSetup& setup, int n, ObjectiveKind kind,
                               const Vector& theta0, const SolverOptions& opts = {});

/// theta_{k+1} = theta_k + alpha Phi^T D (T^n(Phi theta_k) - Phi theta_k).
IterTrace system_iteration_run(const EvaluationSetup& setup, int n, double alpha,
                               const Vector& theta0, const SolverOptions& opts = {});

struct SchurCertificate {
    double alpha = 0.0;
    double spectral_radius = 0.0;
    bool stable = false;
};

/// rho(I + alpha B_n); stable iff rho < 1 - 1e-12.
SchurCertificate schur_certificate(const EvaluationSetup& setup, int n, double alpha);

/// Searches alpha in (0, 2/||B_n||_2] for a Schur-stable I + alpha B_n. The
/// stability boundary is located by bisection, then the radius is minimised
/// over the stable interval (rho is convex in alpha). Empty if B_n has an
/// eigenvalue with nonnegative real part.
std::optional<SchurCertificate> certify_step_size(const EvaluationSetup& setup, int n);

}  // namespace ntdlab

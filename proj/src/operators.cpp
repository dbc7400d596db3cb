#include "ntdlab/operators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ntdlab/error.hpp"

namespace ntdlab {

namespace {

void require_horizon(int n) {
    if (n < 1) throw ConfigError("horizon n must be >= 1, got " + std::to_string(n));
}

}  // namespace

double condition_number(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& sv = svd.singularValues();
    const double smallest = sv(sv.size() - 1);
    if (smallest == 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smallest;
}

double inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

ProjectionData projection(const EvaluationSetup& setup) {
    const Matrix& gram = setup.gram();
    if (condition_number(gram) > kMaxConditionNumber) {
        throw RankError("Gram matrix Phi^T D Phi is numerically singular");
    }
    ProjectionData out;
    out.gram_inverse = gram.inverse();
    // Pi = D^{-1/2} Q Q^T D^{1/2} with Q an orthonormal basis of D^{1/2} Phi.
    // Same matrix as Phi G^{-1} Phi^T D, without squaring the conditioning of Phi.
    const Vector sqrt_d = setup.d_beta().cwiseSqrt();
    const Matrix weighted = sqrt_d.asDiagonal() * setup.phi();
    const Matrix q = Eigen::HouseholderQR<Matrix>(weighted).householderQ() *
                     Matrix::Identity(weighted.rows(), weighted.cols());
    out.pi_matrix = sqrt_d.cwiseInverse().asDiagonal() * (q * q.transpose()) * sqrt_d.asDiagonal();
    out.inf_norm = inf_norm(out.pi_matrix);
    return out;
}

Matrix discounted_power_apply(const EvaluationSetup& setup, int n, const Matrix& x) {
    require_horizon(n);
    const Matrix gp = setup.gamma() * setup.p_pi();
    Matrix y = x;
    for (int k = 0; k < n; ++k) y = gp * y;
    return y;
}

Vector bellman_n(const EvaluationSetup& setup, int n, const Vector& x) {
    require_horizon(n);
    if (x.size() != setup.num_states()) throw ConfigError("bellman_n: vector has wrong length");
    // T^n = T o T^{n-1}, with T(x) = R + gamma P x.
    const Matrix& p = setup.p_pi();
    const Vector& r = setup.r_pi();
    const double g = setup.gamma();
    Vector v = x;
    for (int k = 0; k < n; ++k) v = r + g * (p * v);
    return v;
}

Vector projected_bellman_n(const EvaluationSetup& setup, int n, const Vector& x) {
    return projection(setup).pi_matrix * bellman_n(setup, n, x);
}

Matrix system_matrix(const EvaluationSetup& setup, int n) {
    const Matrix& phi = setup.phi();
    const Matrix shifted = discounted_power_apply(setup, n, phi);
    return phi.transpose() * setup.d_beta().asDiagonal() * shifted - setup.gram();
}

Vector system_offset(const EvaluationSetup& setup, int n) {
    const Vector partial = bellman_n(setup, n, Vector::Zero(setup.num_states()));
    return setup.phi().transpose() * setup.d_beta().cwiseProduct(partial);
}

int contraction_horizon(double pi_inf_norm, double gamma) {
    if (pi_inf_norm < 1.0) return 1;
    const double ratio = std::log(1.0 / pi_inf_norm) / std::log(gamma);
    // The guard absorbs ||Pi||_inf = 1 + O(eps) from rounding when Pi = I.
    return static_cast<int>(std::ceil(ratio - 1e-9)) + 1;
}

int contraction_horizon(const EvaluationSetup& setup) {
    return contraction_horizon(projection(setup).inf_norm, setup.gamma());
}

HorizonReport hurwitz_horizon(const EvaluationSetup& setup, int n_max) {
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    HorizonReport rep;
    rep.pi_inf_norm = projection(setup).inf_norm;
    rep.n_star = contraction_horizon(rep.pi_inf_norm, setup.gamma());
    rep.n_max = n_max;

    const Matrix& phi = setup.phi();
    const Matrix weighted_phi_t = phi.transpose() * setup.d_beta().asDiagonal();
    const Matrix gp = setup.gamma() * setup.p_pi();
    Matrix shifted = phi;  // gamma^n (P^pi)^n Phi, advanced one step per n
    std::optional<int> first_contracting;

    for (int n = 1; n <= n_max; ++n) {
        shifted = gp * shifted;
        const Matrix b = weighted_phi_t * shifted - setup.gram();
        const Matrix sym = b + b.transpose();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);

        HorizonRecord rec;
        rec.n = n;
        rec.contraction_bound = std::pow(setup.gamma(), n) * rep.pi_inf_norm;
        rec.sym_part_max_eigenvalue = eig.eigenvalues().maxCoeff();
        rec.a_n_condition = condition_number(-b);
        rec.a_n_nonsingular = rec.a_n_condition <= kMaxConditionNumber;
        rep.per_n.push_back(rec);

        if (!first_contracting && rec.contraction_bound < 1.0) first_contracting = n;
        if (!rep.n_bar_star && rec.sym_part_max_eigenvalue < 0.0) rep.n_bar_star = n;
        if (rep.n_bar_star && n >= rep.n_star) break;
    }
    rep.n_min_contracting = first_contracting.value_or(rep.n_star);
    return rep;
}

Vector fixed_point(const EvaluationSetup& setup, int n) {
    const Matrix a = -system_matrix(setup, n);
    const double cond = condition_number(a);
    if (!(cond <= kMaxConditionNumber)) {
        throw SingularError("no unique fixed point at n = " + std::to_string(n) +
                            " (cond(A_n) = " + std::to_string(cond) + ")");
    }
    return a.colPivHouseholderQr().solve(system_offset(setup, n));
}

double fixed_point_residual(const EvaluationSetup& setup, int n, const Vector& theta) {
    const Vector v = setup.phi() * theta;
    return (v - projected_bellman_n(setup, n, v)).lpNorm<Eigen::Infinity>();
}

TrueSolution true_solution(const EvaluationSetup& setup) {
    const int ns = setup.num_states();
    const Matrix lhs = Matrix::Identity(ns, ns) - setup.gamma() * setup.p_pi();
    TrueSolution out;
    out.v_pi = lhs.partialPivLu().solve(setup.r_pi());
    const Vector rhs = setup.phi().transpose() * setup.d_beta().cwiseProduct(out.v_pi);
    out.theta_star_inf = setup.gram().ldlt().solve(rhs);
    return out;
}

SolutionReport error_bounds(const EvaluationSetup& setup, int n) {
    const ProjectionData proj = projection(setup);
    const int n_star = contraction_horizon(proj.inf_norm, setup.gamma());
    if (n < n_star) {
        throw PreconditionError("error bounds need n >= n* = " + std::to_string(n_star) +
                                ", got n = " + std::to_string(n));
    }
    SolutionReport rep;
    rep.n = n;
    rep.theta_star_n = fixed_point(setup, n);
    const TrueSolution truth = true_solution(setup);
    rep.v_pi = truth.v_pi;
    rep.theta_star_inf = truth.theta_star_inf;
    rep.contraction_factor = std::pow(setup.gamma(), n) * proj.inf_norm;

    const Matrix& phi = setup.phi();
    const double approx_error = (proj.pi_matrix * truth.v_pi - truth.v_pi).lpNorm<Eigen::Infinity>();
    rep.bound_value = approx_error / (1.0 - rep.contraction_factor);
    rep.bound_gap = rep.contraction_factor * rep.bound_value;
    const Vector fitted = phi * rep.theta_star_n;
    rep.actual_value_error = (fitted - truth.v_pi).lpNorm<Eigen::Infinity>();
    rep.actual_gap = (fitted - phi * truth.theta_star_inf).lpNorm<Eigen::Infinity>();

    const auto slack = [](double bound) { return 1e-9 * (1.0 + bound); };
    if (rep.actual_value_error > rep.bound_value + slack(rep.bound_value) ||
        rep.actual_gap > rep.bound_gap + slack(rep.bound_gap)) {
        throw std::logic_error("error bound violated at n = " + std::to_string(n) +
                               ": value error " + std::to_string(rep.actual_value_error) +
                               " vs " + std::to_string(rep.bound_value) + ", gap " +
                               std::to_string(rep.actual_gap) + " vs " +
                               std::to_string(rep.bound_gap));
    }
    return rep;
}

}  // namespace ntdlab

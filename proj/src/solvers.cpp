#include "ntdlab/solvers.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ntdlab/error.hpp"
#include "ntdlab/operators.hpp"

namespace ntdlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<Vector> try_fixed_point(const EvaluationSetup& setup, int n) {
    try {
        return fixed_point(setup, n);
    } catch (const SingularError&) {
        return std::nullopt;
    }
}

/// Constant pieces of the objective; the residual itself always goes through T^n.
class ObjectiveTerms {
public:
    ObjectiveTerms(const EvaluationSetup& setup, int n, ObjectiveKind kind)
        : setup_(setup), n_(n), kind_(kind), ct_(system_matrix(setup, n).transpose()) {
        if (kind == ObjectiveKind::MspbeI) {
            const ProjectionData proj = projection(setup);
            pi_ = proj.pi_matrix;
            gram_inverse_ = proj.gram_inverse;
        }
    }

    ObjectiveValue evaluate(const Vector& theta) const {
        if (theta.size() != setup_.num_features()) throw ConfigError("theta has wrong length");
        const Matrix& phi = setup_.phi();
        const Vector& d = setup_.d_beta();
        const Vector v = phi * theta;
        const Vector tv = bellman_n(setup_, n_, v);
        ObjectiveValue out;
        if (kind_ == ObjectiveKind::MspbeI) {
            const Vector err = pi_ * tv - v;
            out.value = 0.5 * err.dot(d.cwiseProduct(err));
            out.gradient = ct_ * (gram_inverse_ * (phi.transpose() * d.cwiseProduct(err)));
        } else {
            const Vector g = phi.transpose() * d.cwiseProduct(tv - v);
            const Vector wg = setup_.gram() * g;
            out.value = 0.5 * g.dot(wg);
            out.gradient = ct_ * wg;
        }
        return out;
    }

private:
    const EvaluationSetup& setup_;
    int n_;
    ObjectiveKind kind_;
    Matrix ct_;  // Phi^T (gamma^n P^n - I)^T D Phi
    Matrix pi_;
    Matrix gram_inverse_;
};

/// Shared driver: runs `step` until the projected Bellman residual drops to
/// tol, the iterate blows up, or max_iters is exhausted.
template <typename Step>
IterTrace iterate(const EvaluationSetup& setup, int n, const Vector& theta0,
                  const SolverOptions& opts, const std::optional<Vector>& target, Step&& step) {
    if (theta0.size() != setup.num_features()) {
        throw ConfigError("theta0 has length " + std::to_string(theta0.size()) + ", expected " +
                          std::to_string(setup.num_features()));
    }
    const Matrix pi = projection(setup).pi_matrix;
    const Matrix& phi = setup.phi();
    const auto residual = [&](const Vector& theta) {
        const Vector v = phi * theta;
        return (v - pi * bellman_n(setup, n, v)).lpNorm<Eigen::Infinity>();
    };
    const auto dist = [&](const Vector& theta) {
        return target ? (theta - *target).norm() : kNaN;
    };

    IterTrace tr;
    Vector theta = theta0;
    tr.thetas.push_back(theta);
    tr.residual_inf.push_back(residual(theta));
    tr.dist_to_fixed_point.push_back(dist(theta));
    for (int k = 0; k < opts.max_iters && tr.residual_inf.back() > opts.tol; ++k) {
        theta = step(theta);
        tr.thetas.push_back(theta);
        tr.residual_inf.push_back(residual(theta));
        tr.dist_to_fixed_point.push_back(dist(theta));
        ++tr.iterations_used;
        if (!theta.allFinite() || theta.lpNorm<Eigen::Infinity>() > kDivergenceThreshold) {
            tr.diverged = true;
            break;
        }
    }
    tr.converged = !tr.diverged && tr.residual_inf.back() <= opts.tol;
    return tr;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
    return kind == ObjectiveKind::MspbeI ? "MSPBE_I" : "COMPOSITE_II";
}

CurvatureReport curvature(const EvaluationSetup& setup, int n, ObjectiveKind kind) {
    // Gamma = F^T F with F = L^T C (W = G = L L^T) or F = L^{-1} C (W = G^{-1}).
    // Singular values of F resolve mu far below what an eigensolver on Gamma can.
    const Matrix c = system_matrix(setup, n);
    const Eigen::LLT<Matrix> chol(setup.gram());
    const Matrix f = kind == ObjectiveKind::MspbeI
                         ? Matrix(chol.matrixL().solve(c))
                         : Matrix(chol.matrixU() * c);
    CurvatureReport rep;
    rep.hessian = f.transpose() * f;
    const Vector sv = Eigen::JacobiSVD<Matrix>(f).singularValues();
    const double s_max = sv(0);
    const double s_min = sv(sv.size() - 1);
    rep.lambda_min = s_min * s_min;
    rep.lip = s_max * s_max;
    // Below this ratio the smallest singular value is indistinguishable from rounding.
    rep.mu = s_min > 1e-12 * s_max ? rep.lambda_min : 0.0;
    rep.strongly_convex = rep.mu > 0.0;
    if (rep.strongly_convex) {
        rep.step_size = 2.0 / (rep.mu + rep.lip);
    } else {
        rep.step_size = rep.lip > 0.0 ? 1.0 / rep.lip : 0.0;
    }
    return rep;
}

ObjectiveValue objective_value_and_gradient(const EvaluationSetup& setup, int n,
                                            ObjectiveKind kind, const Vector& theta) {
    return ObjectiveTerms(setup, n, kind).evaluate(theta);
}

IterTrace npvi_run(const EvaluationSetup& setup, int n, const Vector& theta0,
                   const SolverOptions& opts) {
    const ProjectionData proj = projection(setup);
    const Matrix& phi = setup.phi();
    const Matrix solve_map = proj.gram_inverse * phi.transpose() * setup.d_beta().asDiagonal();
    const std::optional<Vector> target = try_fixed_point(setup, n);

    IterTrace tr = iterate(setup, n, theta0, opts, target, [&](const Vector& theta) {
        return Vector(solve_map * bellman_n(setup, n, phi * theta));
    });

    const double q = std::pow(setup.gamma(), n) * proj.inf_norm;
    if (target && q < 1.0) {
        const double d0 = (phi * (theta0 - *target)).lpNorm<Eigen::Infinity>();
        double factor = 1.0;
        for (const Vector& th : tr.thetas) {
            tr.rate_metric.push_back((phi * (th - *target)).lpNorm<Eigen::Infinity>());
            tr.rate_bound.push_back(factor * d0);
            factor *= q;
        }
    }
    return tr;
}

IterTrace gradient_descent_run(const EvaluationSetup& setup, int n, ObjectiveKind kind,
                               const Vector& theta0, const SolverOptions& opts) {
    const CurvatureReport curv = curvature(setup, n, kind);
    const double alpha = curv.step_size;
    const std::optional<Vector> target = try_fixed_point(setup, n);

    const ObjectiveTerms objective(setup, n, kind);
    IterTrace tr = iterate(setup, n, theta0, opts, target, [&](const Vector& theta) {
        return Vector(theta - alpha * objective.evaluate(theta).gradient);
    });
    tr.step_size = alpha;

    if (curv.strongly_convex && target) {
        const double q = (curv.lip - curv.mu) / (curv.lip + curv.mu);
        const double q2 = q * q;
        const double d0 = (theta0 - *target).squaredNorm();
        double factor = 1.0;
        for (std::size_t k = 0; k < tr.thetas.size(); ++k) {
            const double metric = (tr.thetas[k] - *target).squaredNorm();
            const double bound = factor * d0;
            tr.rate_metric.push_back(metric);
            tr.rate_bound.push_back(bound);
            if (metric > bound + kRateSlack) {
                std::ostringstream msg;
                msg << "gradient descent rate bound violated at k = " << k << " (" << metric
                    << " > " << bound << ", kind " << to_string(kind) << ", n = " << n << ")";
                throw std::logic_error(msg.str());
            }
            factor *= q2;
        }
    }
    return tr;
}

IterTrace system_iteration_run(const EvaluationSetup& setup, int n, double alpha,
                               const Vector& theta0, const SolverOptions& opts) {
    if (!(alpha > 0.0)) throw ConfigError("system iteration needs alpha > 0");
    const Matrix& phi = setup.phi();
    const Matrix weighted_phi_t = phi.transpose() * setup.d_beta().asDiagonal();
    const std::optional<Vector> target = try_fixed_point(setup, n);
    IterTrace tr = iterate(setup, n, theta0, opts, target, [&](const Vector& theta) {
        const Vector v = phi * theta;
        return Vector(theta + alpha * (weighted_phi_t * (bellman_n(setup, n, v) - v)));
    });
    tr.step_size = alpha;
    return tr;
}

SchurCertificate schur_certificate(const EvaluationSetup& setup, int n, double alpha) {
    const Matrix b = system_matrix(setup, n);
    const Matrix a = Matrix::Identity(b.rows(), b.cols()) + alpha * b;
    Eigen::EigenSolver<Matrix> eig(a, false);
    SchurCertificate cert;
    cert.alpha = alpha;
    cert.spectral_radius = eig.eigenvalues().cwiseAbs().maxCoeff();
    cert.stable = cert.spectral_radius < 1.0 - 1e-12;
    return cert;
}

std::optional<SchurCertificate> certify_step_size(const EvaluationSetup& setup, int n) {
    const Matrix b = system_matrix(setup, n);
    Eigen::EigenSolver<Matrix> eig(b, false);
    if (eig.eigenvalues().real().maxCoeff() >= 0.0) return std::nullopt;

    const double norm2 = Eigen::JacobiSVD<Matrix>(b).singularValues()(0);
    double hi = 2.0 / norm2;
    auto radius = [&](double alpha) { return schur_certificate(setup, n, alpha); };
    if (radius(hi).stable) {
        // Whole search interval is stable; the boundary lies beyond the cap.
    } else {
        double lo = hi;
        int halvings = 0;
        while (!radius(lo).stable) {
            lo *= 0.5;
            if (++halvings > 200) return std::nullopt;
        }
        for (int it = 0; it < 100 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (radius(mid).stable ? lo : hi) = mid;
        }
        hi = lo;
    }
    // rho(I + alpha B) = max_i |1 + alpha lambda_i| is convex in alpha.
    double left = 0.0;
    double right = hi;
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = right - golden * (right - left);
    double x2 = left + golden * (right - left);
    double f1 = radius(x1).spectral_radius;
    double f2 = radius(x2).spectral_radius;
    for (int it = 0; it < 200 && right - left > 1e-12 * hi; ++it) {
        if (f1 < f2) {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - golden * (right - left);
            f1 = radius(x1).spectral_radius;
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + golden * (right - left);
            f2 = radius(x2).spectral_radius;
        }
    }
    SchurCertificate best = radius(0.5 * (left + right));
    if (!best.stable) {
        best = radius(hi);
        if (!best.stable) return std::nullopt;
    }
    return best;
}

}  // namespace ntdlab

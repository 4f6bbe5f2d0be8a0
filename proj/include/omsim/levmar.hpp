#pragma once

// Damped least squares. Accepted steps never increase the residual; the
// damping parameter is adapted multiplicatively. Convergence when the
// relative step or the relative residual change falls below tolerance.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace omsim {

struct LevMarOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;      // relative step
    double residual_tolerance = 1e-12;  // relative residual change
    double lambda_init = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 0.1;
    double lambda_max = 1e12;
    double rank_tolerance = 1e-12;      // singular values below rank_tol * s_max
};

struct LevMarResult {
    Eigen::VectorXd x;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;  // sqrt(sum of squared residuals)
    int iterations = 0;
    bool converged = false;
    std::vector<int> degenerate_directions;  // indices of near-null singular directions
    std::string message;
};

class LevMarSolver {
public:
    using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
    using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

    LevMarSolver(ResidualFn residuals, JacobianFn jacobian, LevMarOptions opt = {})
        : residuals_(std::move(residuals)), jacobian_(std::move(jacobian)), opt_(opt) {}

    // Numeric Jacobian fallback (central differences) for models without an
    // analytic one.
    LevMarSolver(ResidualFn residuals, LevMarOptions opt = {})
        : residuals_(std::move(residuals)), opt_(opt) {
        jacobian_ = [this](const Eigen::VectorXd& x) { return numeric_jacobian(x); };
    }

    LevMarResult solve(const Eigen::VectorXd& x0) const {
        LevMarResult res;
        Eigen::VectorXd x = x0;
        Eigen::VectorXd r = residuals_(x);
        if (r.size() < x.size())
            throw std::invalid_argument("LevMar: fewer residuals than parameters");
        double cost = r.squaredNorm();
        double lambda = opt_.lambda_init;

        Eigen::MatrixXd J;
        bool have_jacobian = false;
        for (int it = 0; it < opt_.max_iterations; ++it) {
            res.iterations = it + 1;
            if (!have_jacobian) {
                J = jacobian_(x);
                have_jacobian = true;
            }
            const Eigen::MatrixXd JtJ = J.transpose() * J;
            const Eigen::VectorXd g = J.transpose() * r;

            bool stepped = false;
            while (lambda <= opt_.lambda_max) {
                Eigen::MatrixXd A = JtJ;
                A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-30);
                const Eigen::VectorXd dx = A.ldlt().solve(-g);
                const Eigen::VectorXd x_try = x + dx;
                const Eigen::VectorXd r_try = residuals_(x_try);
                const double cost_try = r_try.squaredNorm();
                if (std::isfinite(cost_try) && cost_try <= cost) {
                    const double rel_step = dx.norm() / std::max(x.norm(), 1e-30);
                    const double rel_dcost = (cost - cost_try) / std::max(cost, 1e-300);
                    x = x_try;
                    r = r_try;
                    cost = cost_try;
                    lambda = std::max(lambda * opt_.lambda_down, 1e-15);
                    have_jacobian = false;
                    stepped = true;
                    if (rel_step < opt_.step_tolerance || rel_dcost < opt_.residual_tolerance)
                        res.converged = true;
                    break;
                }
                lambda *= opt_.lambda_up;
            }
            if (!stepped) {
                // no downhill step available: stationary point
                res.converged = true;
            }
            if (res.converged) break;
        }

        res.x = x;
        res.residual_norm = std::sqrt(cost);
        if (!have_jacobian) J = jacobian_(x);
        finalize(res, J, r);
        if (!res.converged) res.message = "max iterations reached without convergence";
        return res;
    }

private:
    void finalize(LevMarResult& res, const Eigen::MatrixXd& J, const Eigen::VectorXd& r) const {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double s_max = sv.size() ? sv(0) : 0.0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) <= opt_.rank_tolerance * std::max(s_max, 1e-300))
                res.degenerate_directions.push_back(i);
        if (!res.degenerate_directions.empty())
            res.message = "rank-deficient Jacobian";

        const int dof = static_cast<int>(r.size()) - static_cast<int>(res.x.size());
        const double sigma2 = dof > 0 ? r.squaredNorm() / dof : 0.0;
        Eigen::MatrixXd inv_s2 = Eigen::MatrixXd::Zero(sv.size(), sv.size());
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) > opt_.rank_tolerance * std::max(s_max, 1e-300))
                inv_s2(i, i) = 1.0 / (sv(i) * sv(i));
        res.covariance = svd.matrixV() * inv_s2 * svd.matrixV().transpose() * sigma2;
    }

    Eigen::MatrixXd numeric_jacobian(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd r0 = residuals_(x);
        Eigen::MatrixXd J(r0.size(), x.size());
        for (int j = 0; j < x.size(); ++j) {
            const double h = 1e-6 * std::max(std::abs(x(j)), 1e-8);
            Eigen::VectorXd xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            J.col(j) = (residuals_(xp) - residuals_(xm)) / (2.0 * h);
        }
        return J;
    }

    ResidualFn residuals_;
    JacobianFn jacobian_;
    LevMarOptions opt_;
};

}  // namespace omsim

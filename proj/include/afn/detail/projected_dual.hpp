#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "afn/common.hpp"

namespace afn::detail {

struct DualResult {
    Vec prices;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

template <class Problem>
void newton_polish(const Problem& prob, DualResult& out);

/// Minimizes a smooth convex dual D(p) over p >= 0 by damped projected
/// gradient descent with Armijo backtracking, then polishes the active set
/// with Newton steps on the complementarity system g_S(p) = 0.
///
/// Problem requirements:
///   int dim() const;
///   double eval(const Vec& p, Vec* grad) const;   // +inf outside the domain
///   Mat hessian(const Vec& p) const;              // PSD where finite
///   double residual(const Vec& p) const;          // KKT certificate, -> 0 at optimum
///
/// The polish step is only accepted when it improves the residual, so a
/// degenerate active set (rank-deficient reduced Hessian) cannot make the
/// result worse than plain descent.
template <class Problem>
DualResult projected_dual_minimize(const Problem& prob, Vec p, double tol, int max_iters) {
    const Eigen::Index m = p.size();

    Vec grad(m), grad_try(m);
    double value = prob.eval(p, &grad);
    if (!std::isfinite(value))
        throw SolverDidNotConverge("dual solver started outside its domain");

    double step = 1.0;
    {
        const Mat h = prob.hessian(p);
        const double hmax = h.diagonal().maxCoeff();
        if (hmax > 0.0 && std::isfinite(hmax)) step = 1.0 / hmax;
    }

    DualResult out;
    out.prices = p;
    int it = 0;
    const int check_every = 4;
    for (; it < max_iters; ++it) {
        if (it % check_every == 0) {
            const double r = prob.residual(p);
            if (r <= tol) {
                out.prices = p;
                out.residual = r;
                out.iterations = it;
                out.converged = true;
                break;
            }
        }
        bool moved = false;
        for (int bt = 0; bt < 80; ++bt) {
            Vec p_try = (p - step * grad).cwiseMax(0.0);
            Vec dp = p_try - p;
            const double dp2 = dp.squaredNorm();
            if (dp2 == 0.0) break;  // projected-stationary point
            const double v_try = prob.eval(p_try, &grad_try);
            if (v_try <= value - 1e-4 * dp2 / step) {
                p = std::move(p_try);
                value = v_try;
                grad = grad_try;
                step = std::min(step * 1.3, 1e14);
                moved = true;
                break;
            }
            step *= 0.5;
            if (step < 1e-300) break;
        }
        if (!moved) {
            // Either stationary or the step underflowed; let the residual
            // check and the polish below decide.
            break;
        }
    }
    if (!out.converged) {
        out.prices = p;
        out.residual = prob.residual(p);
        out.iterations = it;
        out.converged = out.residual <= tol;
    }

    newton_polish(prob, out);
    out.converged = out.residual <= tol;
    return out;
}

template <class Problem>
void newton_polish(const Problem& prob, DualResult& out) {
    const Eigen::Index m = out.prices.size();
    const double pmax = out.prices.size() ? out.prices.maxCoeff() : 0.0;
    const double active_tol = std::max(1e-12, 1e-10 * pmax);

    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < m; ++j)
        if (out.prices[j] > active_tol) active.push_back(j);
    if (active.empty()) return;

    Vec p = out.prices;
    Vec grad(m);
    Vec best_p = out.prices;
    double best_r = out.residual;

    for (int round = 0; round < 40; ++round) {
        const double value = prob.eval(p, &grad);
        if (!std::isfinite(value)) break;
        Vec g_s(static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) g_s[k] = grad[active[k]];
        if (g_s.cwiseAbs().maxCoeff() < 1e-300) break;

        const Mat h = prob.hessian(p);
        Mat h_ss(active.size(), active.size());
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t b = 0; b < active.size(); ++b)
                h_ss(a, b) = h(active[a], active[b]);
        const double ridge = 1e-14 * std::max(1.0, h_ss.diagonal().maxCoeff());
        h_ss.diagonal().array() += ridge;
        Vec delta = h_ss.ldlt().solve(g_s);
        if (!delta.allFinite()) break;

        // Damp so prices stay strictly positive on the active set.
        double t = 1.0;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const double pj = p[active[k]];
            if (delta[k] > 0.0 && pj - t * delta[k] <= 0.0) t = std::min(t, 0.5 * pj / delta[k]);
        }
        if (t < 1e-12) break;
        for (std::size_t k = 0; k < active.size(); ++k) p[active[k]] -= t * delta[k];

        const double r = prob.residual(p);
        if (r < best_r) {
            best_r = r;
            best_p = p;
        } else if (r > 10.0 * best_r && round > 4) {
            break;
        }
    }
    out.prices = best_p;
    out.residual = best_r;
}

}  // namespace afn::detail

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "afn/allocator.hpp"
#include "afn/detail/nnls.hpp"
#include "afn/detail/projected_dual.hpp"
#include "afn/lyapunov.hpp"
#include "afn/network.hpp"

namespace afn {

/// Link-level unfinished work w = A M^{-1} n with M = diag(mu).
struct Workload {
    Vec w;
};

inline Workload workload(const NetworkSpec& spec, const Vec& n) {
    for (Eigen::Index i = 0; i < n.size(); ++i)
        if (!(n[i] >= 0.0)) throw PreconditionViolation("workload requires n >= 0");
    return Workload{spec.incidence() * n.cwiseQuotient(spec.mu())};
}

struct LiftResult {
    Vec n;
    Vec dual_prices;
    double kkt_residual = 0.0;
};

struct LiftOptions {
    double tol = 1e-9;
    int max_iters = 100000;
    const Vec* warm_prices = nullptr;
};

namespace detail {

// Dual of the lifting program min F(n) s.t. A M^{-1} n >= w, n >= 0, with the
// closed-form primal response n_i(p) = ((A^T p)_i / (mu_i w_i))^(1/alpha).
struct LiftDualProblem {
    Mat a;      // |J| x |I|
    Vec w;      // target workload (normalized)
    Vec mu;
    Vec wf;     // Lyapunov weights
    double alpha;

    Vec primal(const Vec& p) const {
        Vec q = a.transpose() * p;
        Vec n(q.size());
        for (Eigen::Index i = 0; i < q.size(); ++i)
            n[i] = q[i] > 0.0 ? std::pow(q[i] / (mu[i] * wf[i]), 1.0 / alpha) : 0.0;
        return n;
    }

    double eval(const Vec& p, Vec* grad) const {
        Vec n = primal(p);
        Vec wl = a * n.cwiseQuotient(mu);
        if (grad) *grad = wl - w;
        // phi(p) = p.w - alpha/(alpha+1) sum_i (A^T p)_i n_i / mu_i; D = -phi.
        const Vec q = a.transpose() * p;
        double phi = p.dot(w);
        for (Eigen::Index i = 0; i < n.size(); ++i)
            phi -= alpha / (alpha + 1.0) * q[i] * n[i] / mu[i];
        return -phi;
    }

    Mat hessian(const Vec& p) const {
        Vec q = a.transpose() * p;
        Vec n = primal(p);
        Vec d(n.size());
        for (Eigen::Index i = 0; i < n.size(); ++i)
            d[i] = q[i] > 0.0 ? n[i] / (alpha * q[i] * mu[i] * mu[i]) : 0.0;
        return a * d.asDiagonal() * a.transpose();
    }

    double residual(const Vec& p) const {
        const Vec q = a.transpose() * p;
        const Vec n = primal(p);
        double stat = 0.0;
        for (Eigen::Index i = 0; i < n.size(); ++i)
            if (n[i] > 0.0)
                stat = std::max(stat,
                                std::abs(wf[i] * std::pow(n[i], alpha) - q[i] / mu[i]));
        const Vec wl = a * n.cwiseQuotient(mu);
        double comp = 0.0, infeas = 0.0;
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            comp = std::max(comp, p[j] * std::max(wl[j] - w[j], 0.0));
            infeas = std::max(infeas, w[j] - wl[j]);
        }
        return stat + comp + std::max(infeas, 0.0);
    }
};

}  // namespace detail

/// Lifting map: the unique minimizer of F_alpha(n) subject to
/// A M^{-1} n >= w, n >= 0, solved by the same dual-ascent engine as the
/// allocator and certified through its KKT residual. Degree-1 homogeneous in
/// w by construction.
inline LiftResult lift(const NetworkSpec& spec, const Vec& w, LiftOptions opt = {}) {
    if (w.size() != spec.num_resources())
        throw PreconditionViolation("workload length must equal |J|");
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (!(w[j] >= 0.0)) throw PreconditionViolation("lift requires w >= 0");

    LiftResult out;
    out.n = Vec::Zero(spec.num_routes());
    out.dual_prices = Vec::Zero(spec.num_resources());
    const double scale = w.size() ? w.maxCoeff() : 0.0;
    if (scale == 0.0) return out;

    detail::LiftDualProblem prob;
    prob.a = spec.incidence();
    prob.w = w / scale;
    prob.mu = spec.mu();
    prob.wf = lyapunov_weights(spec);
    prob.alpha = spec.alpha();

    Vec p = Vec::Ones(spec.num_resources());
    if (opt.warm_prices && opt.warm_prices->size() == spec.num_resources()) {
        const double sa = std::pow(scale, prob.alpha);
        Vec cand = (*opt.warm_prices / sa).cwiseMax(0.0);
        if (cand.maxCoeff() > 0.0) p = std::move(cand);
    }

    auto result = detail::projected_dual_minimize(prob, p, opt.tol, opt.max_iters);
    if (!result.converged)
        throw SolverDidNotConverge("lift dual residual " + format12(result.residual) +
                                   " above tolerance " + format12(opt.tol));

    out.n = scale * prob.primal(result.prices);
    out.dual_prices = std::pow(scale, prob.alpha) * result.prices;
    out.kkt_residual = result.residual;
    return out;
}

inline LiftResult lift(const NetworkSpec& spec, const Workload& w, LiftOptions opt = {}) {
    return lift(spec, w.w, opt);
}

/// Distance to the invariant manifold: ||n - Delta(w(n))||_inf.
inline double manifold_distance(const NetworkSpec& spec, const Vec& n, LiftOptions opt = {}) {
    const LiftResult lifted = lift(spec, workload(spec, n), opt);
    return (n - lifted.n).cwiseAbs().maxCoeff();
}

/// Explicit polyhedral membership test for the invariant manifold at
/// criticality and alpha = 1: n is invariant iff n_i = rho_i (q^T A)_i /
/// kappa_i for some q >= 0. Solved as a nonnegative least-squares
/// feasibility problem; true iff the sup-norm residual is at most tol.
inline bool manifold_membership_dual(const NetworkSpec& spec, const Vec& n, double tol) {
    if (spec.alpha() != 1.0)
        throw PreconditionViolation("the dual manifold characterization is stated for alpha = 1");
    const Vec rho = spec.nu().cwiseQuotient(spec.mu());
    const Vec link_load = spec.incidence() * rho;
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
        if (std::abs(link_load[j] - spec.capacity()[j]) > 1e-9 * spec.capacity()[j])
            throw PreconditionViolation("the dual manifold characterization requires A rho = C");

    // Columns: d(q_j) -> rho_i A_{ji} / kappa_i.
    Mat basis(spec.num_routes(), spec.num_resources());
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
            basis(i, j) = rho[i] * spec.incidence()(j, i) / spec.kappa()[i];
    const Vec q = detail::nnls(basis, n);
    return (basis * q - n).cwiseAbs().maxCoeff() <= tol;
}

/// Piecewise-constant record of a fluid model solution.
struct FluidTrajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<double> lyapunov_values;
    bool step_warning = false;        // Richardson half-step check tripped
    double max_richardson_dev = 0.0;  // largest observed half-step deviation
};

/// Default integrator step: 1e-3 min_j C_j / max_i nu_i.
inline double default_fluid_dt(const NetworkSpec& spec) {
    return 1e-3 * spec.capacity().minCoeff() / spec.nu().maxCoeff();
}

/// Forward-Euler fluid model integration of
///   dn_i/dt = nu_i - mu_i Lambda_i(n)  when n_i > 0, and 0 at the boundary,
/// with nonnegativity clipping. Coordinates within 1e-9 of zero whose raw
/// drift is negative are pinned to zero to stop boundary chatter. A
/// half-step Richardson comparison runs every 64 steps and flags step-size
/// inadequacy.
inline FluidTrajectory fms_integrate(const NetworkSpec& spec, Vec n0, double horizon,
                                     double dt = 0.0) {
    for (Eigen::Index i = 0; i < n0.size(); ++i)
        if (!(n0[i] >= 0.0)) throw PreconditionViolation("fms_integrate requires n0 >= 0");
    if (dt <= 0.0) dt = default_fluid_dt(spec);
    if (!(horizon > 0.0)) throw PreconditionViolation("horizon must be positive");

    FluidTrajectory out;
    Vec warm;
    auto derivative = [&](const Vec& n) {
        AllocateOptions opt;
        if (warm.size() == spec.num_resources()) opt.warm_prices = &warm;
        Allocation alloc = allocate(spec, n, opt);
        warm = alloc.dual_prices;
        Vec d = spec.nu() - spec.mu().cwiseProduct(alloc.rates);
        for (Eigen::Index i = 0; i < n.size(); ++i)
            if (n[i] < kActiveCountFloor) d[i] = 0.0;  // frozen at the boundary
        return d;
    };
    auto euler_step = [&](Vec n, double h) {
        Vec d = derivative(n);
        for (Eigen::Index i = 0; i < n.size(); ++i)
            if (n[i] < kActiveCountFloor || (n[i] <= 1e-9 && d[i] < 0.0)) {
                n[i] = 0.0;
                d[i] = 0.0;
            }
        return (n + h * d).cwiseMax(0.0).eval();
    };

    const auto steps = static_cast<std::int64_t>(std::ceil(horizon / dt));
    Vec n = std::move(n0);
    out.times.push_back(0.0);
    out.states.push_back(n);
    out.lyapunov_values.push_back(F_alpha(spec, n));
    for (std::int64_t k = 0; k < steps; ++k) {
        const double h = std::min(dt, horizon - static_cast<double>(k) * dt);
        if (k % 64 == 0) {
            const Vec full = euler_step(n, h);
            const Vec half = euler_step(euler_step(n, h / 2.0), h / 2.0);
            const double dev = (full - half).cwiseAbs().maxCoeff();
            out.max_richardson_dev = std::max(out.max_richardson_dev, dev);
            if (dev > 0.05 * dt) out.step_warning = true;
        }
        n = euler_step(n, h);
        out.times.push_back(std::min(static_cast<double>(k + 1) * dt, horizon));
        out.states.push_back(n);
        out.lyapunov_values.push_back(F_alpha(spec, n));
    }
    return out;
}

}  // namespace afn

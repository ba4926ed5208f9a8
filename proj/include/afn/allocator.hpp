#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "afn/common.hpp"
#include "afn/detail/projected_dual.hpp"
#include "afn/network.hpp"

namespace afn {

/// Nonnegative integer flow counts, one entry per route.
struct FlowState {
    IVec counts;

    Vec to_real() const { return counts.cast<double>(); }
};

/// Result of the per-state bandwidth optimization: route rates Lambda(n),
/// the KKT link prices, and the optimality certificate.
struct Allocation {
    Vec rates;
    Vec dual_prices;
    double kkt_residual = 0.0;
};

struct AllocateOptions {
    double tol = 1e-9;  // scale-invariant KKT residual target
    int max_iters = 100000;
    const Vec* warm_prices = nullptr;  // optional warm start (original scale)
};

// Routes with counts below this are treated as inactive.
inline constexpr double kActiveCountFloor = 1e-12;

namespace detail {

// Dual of the alpha-fair program restricted to the active routes, with the
// closed-form primal response lambda_i(p) = n_i (kappa_i / (A^T p)_i)^(1/alpha).
struct AllocDualProblem {
    Mat a;       // covering links x active routes
    Vec cap;     // covering link capacities
    Vec kap;     // active route weights
    Vec n;       // active counts, normalized to max 1
    double alpha;

    Eigen::Index dim() const { return cap.size(); }

    Vec primal(const Vec& p) const {
        Vec q = a.transpose() * p;
        Vec lam(n.size());
        for (Eigen::Index i = 0; i < n.size(); ++i)
            lam[i] = q[i] > 0.0 ? n[i] * std::pow(kap[i] / q[i], 1.0 / alpha)
                                : std::numeric_limits<double>::infinity();
        return lam;
    }

    double eval(const Vec& p, Vec* grad) const {
        const double inf = std::numeric_limits<double>::infinity();
        Vec q = a.transpose() * p;
        Vec lam(n.size());
        double g_val = 0.0;
        const double lam_cap = 1e12 * cap.maxCoeff();
        for (Eigen::Index i = 0; i < n.size(); ++i) {
            if (!(q[i] > 0.0)) return inf;
            lam[i] = n[i] * std::pow(kap[i] / q[i], 1.0 / alpha);
            if (!(lam[i] < lam_cap)) return inf;
            if (alpha == 1.0)
                g_val += kap[i] * n[i] * std::log(lam[i]);
            else
                g_val += kap[i] * std::pow(n[i], alpha) * std::pow(lam[i], 1.0 - alpha) /
                         (1.0 - alpha);
        }
        if (grad) *grad = cap - a * lam;
        return g_val - q.dot(lam) + p.dot(cap);
    }

    Mat hessian(const Vec& p) const {
        Vec q = a.transpose() * p;
        Vec lam = primal(p);
        Vec d(n.size());
        for (Eigen::Index i = 0; i < n.size(); ++i)
            d[i] = (q[i] > 0.0 && std::isfinite(lam[i])) ? lam[i] / (alpha * q[i]) : 0.0;
        return a * d.asDiagonal() * a.transpose();
    }

    double residual(const Vec& p) const {
        Vec q = a.transpose() * p;
        Vec lam = primal(p);
        if (!lam.allFinite()) return std::numeric_limits<double>::infinity();
        double stat = 0.0;
        for (Eigen::Index i = 0; i < n.size(); ++i)
            stat = std::max(stat,
                            std::abs(kap[i] * std::pow(n[i], alpha) * std::pow(lam[i], -alpha) -
                                     q[i]));
        Vec load = a * lam;
        double comp = 0.0, infeas = 0.0;
        for (Eigen::Index j = 0; j < cap.size(); ++j) {
            comp = std::max(comp, p[j] * std::max(cap[j] - load[j], 0.0));
            infeas = std::max(infeas, load[j] - cap[j]);
        }
        return stat + comp + std::max(infeas, 0.0);
    }
};

}  // namespace detail

/// Optimality certificate per the KKT conditions: maximum stationarity error
/// over active routes (counts above kActiveCountFloor), plus the maximum
/// complementary-slackness product, plus the maximum primal infeasibility.
/// Exactly zero at the optimum.
inline double kkt_residual(const NetworkSpec& spec, const Vec& n, const Allocation& alloc) {
    const double alpha = spec.alpha();
    double stat = 0.0;
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
        if (n[i] < kActiveCountFloor) continue;
        const double q = spec.incidence().col(i).dot(alloc.dual_prices);
        stat = std::max(stat, std::abs(spec.kappa()[i] * std::pow(n[i], alpha) *
                                           std::pow(alloc.rates[i], -alpha) -
                                       q));
    }
    Vec load = spec.incidence() * alloc.rates;
    double comp = 0.0, infeas = 0.0;
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
        comp = std::max(comp, alloc.dual_prices[j] * std::max(spec.capacity()[j] - load[j], 0.0));
        infeas = std::max(infeas, load[j] - spec.capacity()[j]);
    }
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i) infeas = std::max(infeas, -alloc.rates[i]);
    return stat + comp + std::max(infeas, 0.0);
}

inline double kkt_residual(const NetworkSpec& spec, const FlowState& state,
                           const Allocation& alloc) {
    return kkt_residual(spec, state.to_real(), alloc);
}

/// Solves the alpha-fair allocation program at a (real-valued) state vector.
///
/// The solver normalizes the state to unit max first; by the scale invariance
/// Lambda(rn) = Lambda(n) this leaves the rates unchanged while keeping the
/// dual well conditioned for large states, and the convergence test is the
/// KKT residual of the normalized program. The returned kkt_residual field is
/// re-evaluated at the original state.
inline Allocation allocate(const NetworkSpec& spec, const Vec& n, AllocateOptions opt = {}) {
    const Eigen::Index num_i = spec.num_routes();
    const Eigen::Index num_j = spec.num_resources();
    if (n.size() != num_i) throw PreconditionViolation("state length must equal |I|");
    for (Eigen::Index i = 0; i < num_i; ++i)
        if (!(n[i] >= 0.0)) throw PreconditionViolation("flow counts must be nonnegative");

    Allocation out;
    out.rates = Vec::Zero(num_i);
    out.dual_prices = Vec::Zero(num_j);

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < num_i; ++i)
        if (n[i] >= kActiveCountFloor) active.push_back(i);
    if (active.empty()) return out;

    std::vector<Eigen::Index> links;
    for (Eigen::Index j = 0; j < num_j; ++j) {
        bool covers = false;
        for (auto i : active)
            if (spec.incidence()(j, i) == 1.0) {
                covers = true;
                break;
            }
        if (covers) links.push_back(j);
    }

    detail::AllocDualProblem prob;
    prob.alpha = spec.alpha();
    prob.a.resize(links.size(), active.size());
    prob.cap.resize(links.size());
    prob.kap.resize(active.size());
    prob.n.resize(active.size());
    double scale = 0.0;
    for (auto i : active) scale = std::max(scale, n[i]);
    for (std::size_t k = 0; k < active.size(); ++k) {
        prob.kap[k] = spec.kappa()[active[k]];
        prob.n[k] = n[active[k]] / scale;
    }
    for (std::size_t r = 0; r < links.size(); ++r) {
        prob.cap[r] = spec.capacity()[links[r]];
        for (std::size_t k = 0; k < active.size(); ++k)
            prob.a(r, k) = spec.incidence()(links[r], active[k]);
    }

    // Start at a price level where the primal response is jointly feasible.
    const double cmin = prob.cap.minCoeff();
    double p0 = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k)
        p0 = std::max(p0, prob.kap[k] * std::pow(prob.n[k] * static_cast<double>(active.size()) /
                                                     cmin,
                                                 prob.alpha));
    Vec p = Vec::Constant(links.size(), std::max(p0, 1e-8));
    if (opt.warm_prices && opt.warm_prices->size() == num_j) {
        const double sa = std::pow(scale, prob.alpha);
        Vec cand(links.size());
        for (std::size_t r = 0; r < links.size(); ++r)
            cand[r] = std::max((*opt.warm_prices)[links[r]] / sa, 0.0);
        Vec probe;
        if (std::isfinite(prob.eval(cand, &probe))) p = std::move(cand);
    }

    auto result = detail::projected_dual_minimize(prob, p, opt.tol, opt.max_iters);
    if (!result.converged)
        throw SolverDidNotConverge("allocation dual residual " + format12(result.residual) +
                                   " above tolerance " + format12(opt.tol));

    Vec lam = prob.primal(result.prices);
    const double sa = std::pow(scale, prob.alpha);
    for (std::size_t k = 0; k < active.size(); ++k) out.rates[active[k]] = lam[k];
    for (std::size_t r = 0; r < links.size(); ++r)
        out.dual_prices[links[r]] = result.prices[r] * sa;
    out.kkt_residual = kkt_residual(spec, n, out);
    return out;
}

inline Allocation allocate(const NetworkSpec& spec, const FlowState& state,
                           AllocateOptions opt = {}) {
    return allocate(spec, state.to_real(), opt);
}

/// Analytic allocation for |J| = 1:
/// Lambda_i = C kappa_i^(1/alpha) n_i / sum_k kappa_k^(1/alpha) n_k on the
/// active routes. Used as the independent test oracle for allocate().
inline Allocation single_link_oracle(const NetworkSpec& spec, const Vec& n) {
    if (spec.num_resources() != 1)
        throw PreconditionViolation("single_link_oracle requires |J| = 1");
    const double alpha = spec.alpha();
    const double cap = spec.capacity()[0];
    Allocation out;
    out.rates = Vec::Zero(spec.num_routes());
    out.dual_prices = Vec::Zero(1);
    double denom = 0.0;
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        if (n[i] >= kActiveCountFloor) denom += std::pow(spec.kappa()[i], 1.0 / alpha) * n[i];
    if (denom == 0.0) return out;
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        if (n[i] >= kActiveCountFloor)
            out.rates[i] = cap * std::pow(spec.kappa()[i], 1.0 / alpha) * n[i] / denom;
    out.dual_prices[0] = std::pow(denom / cap, alpha);
    out.kkt_residual = kkt_residual(spec, n, out);
    return out;
}

inline Allocation single_link_oracle(const NetworkSpec& spec, const FlowState& state) {
    return single_link_oracle(spec, state.to_real());
}

}  // namespace afn

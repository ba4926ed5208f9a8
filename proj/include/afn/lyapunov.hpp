#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "afn/allocator.hpp"
#include "afn/detail/parallel.hpp"
#include "afn/network.hpp"
#include "afn/rng.hpp"

namespace afn {

/// Route weights w_i = kappa_i mu_i^(alpha-1) nu_i^(-alpha).
inline Vec lyapunov_weights(const NetworkSpec& spec) {
    const double alpha = spec.alpha();
    Vec w(spec.num_routes());
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        w[i] = spec.kappa()[i] * std::pow(spec.mu()[i], alpha - 1.0) *
               std::pow(spec.nu()[i], -alpha);
    return w;
}

/// F_alpha(n) = (1/(alpha+1)) sum_i w_i n_i^(alpha+1).
inline double F_alpha(const NetworkSpec& spec, const Vec& n) {
    const double alpha = spec.alpha();
    const Vec w = lyapunov_weights(spec);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n.size(); ++i) s += w[i] * std::pow(n[i], alpha + 1.0);
    return s / (alpha + 1.0);
}

/// Gradient of F_alpha: w_i n_i^alpha.
inline Vec grad_F_alpha(const NetworkSpec& spec, const Vec& n) {
    const double alpha = spec.alpha();
    const Vec w = lyapunov_weights(spec);
    Vec g(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i) g[i] = w[i] * std::pow(n[i], alpha);
    return g;
}

/// h_alpha: r^alpha for alpha >= 1; for alpha in (0,1) the cubic splice
/// (alpha-1) r^3 + (1-alpha) r^2 + r on [0,1), r^alpha beyond.
inline double h_alpha(double alpha, double r) {
    if (alpha >= 1.0 || r >= 1.0) return std::pow(r, alpha);
    return (alpha - 1.0) * r * r * r + (1.0 - alpha) * r * r + r;
}

/// Exact antiderivative of h_alpha with H(0) = 0.
inline double H_alpha(double alpha, double r) {
    if (alpha >= 1.0) return std::pow(r, alpha + 1.0) / (alpha + 1.0);
    if (r <= 1.0)
        return (alpha - 1.0) * std::pow(r, 4.0) / 4.0 + (1.0 - alpha) * std::pow(r, 3.0) / 3.0 +
               r * r / 2.0;
    const double h1 = (1.0 - alpha) / 12.0 + 0.5;
    return h1 + (std::pow(r, alpha + 1.0) - 1.0) / (alpha + 1.0);
}

/// Smoothed normed Lyapunov function
/// L_alpha(n) = [(alpha+1) sum_i w_i H_alpha(n_i)]^(1/(alpha+1)).
inline double L_alpha(const NetworkSpec& spec, const Vec& n) {
    const double alpha = spec.alpha();
    const Vec w = lyapunov_weights(spec);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n.size(); ++i) s += w[i] * H_alpha(alpha, n[i]);
    return std::pow((alpha + 1.0) * s, 1.0 / (alpha + 1.0));
}

/// Gradient of L_alpha at n with L(n) > 0: w_i h_alpha(n_i) / L^alpha.
inline Vec grad_L_alpha(const NetworkSpec& spec, const Vec& n) {
    const double alpha = spec.alpha();
    const Vec w = lyapunov_weights(spec);
    const double l = L_alpha(spec, n);
    Vec g(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i)
        g[i] = w[i] * h_alpha(alpha, n[i]) / std::pow(l, alpha);
    return g;
}

struct DriftSides {
    double lhs;  // <grad F(n), nu - mu.Lambda(n)>
    double rhs;  // -eps <grad F(n), nu>
};

/// Both sides of the drift inequality at a nonzero state, evaluated with a
/// certified allocation. The caller asserts lhs <= rhs.
inline DriftSides drift_inner_products(const NetworkSpec& spec, const Vec& n,
                                       AllocateOptions opt = {}) {
    if (n.cwiseAbs().maxCoeff() == 0.0)
        throw PreconditionViolation("drift_inner_products requires n != 0");
    const LoadProfile lp = load_profile(spec);
    const Allocation alloc = allocate(spec, n, opt);
    const Vec g = grad_F_alpha(spec, n);
    DriftSides out;
    out.lhs = g.dot(spec.nu() - spec.mu().cwiseProduct(alloc.rates));
    out.rhs = -lp.gap * g.dot(spec.nu());
    return out;
}

/// Generator applied to F: QF(n) = sum over the 2|I| transitions of
/// rate x (F after - F before). Departure terms are present for n_i >= 1.
inline double generator_F(const NetworkSpec& spec, const Vec& n, AllocateOptions opt = {}) {
    load_profile(spec);  // requires underload
    const Allocation alloc = allocate(spec, n, opt);
    const double f0 = F_alpha(spec, n);
    double total = 0.0;
    Vec m = n;
    for (Eigen::Index i = 0; i < n.size(); ++i) {
        m[i] = n[i] + 1.0;
        total += spec.nu()[i] * (F_alpha(spec, m) - f0);
        if (n[i] >= 1.0) {
            m[i] = n[i] - 1.0;
            total += spec.mu()[i] * alloc.rates[i] * (F_alpha(spec, m) - f0);
        }
        m[i] = n[i];
    }
    return total;
}

/// Exact one-step drift of L_alpha for the uniformized chain at state n.
inline double expected_drift_L(const NetworkSpec& spec, const Vec& n, AllocateOptions opt = {}) {
    load_profile(spec);  // requires underload
    const Allocation alloc = allocate(spec, n, opt);
    const double xi_rate = uniformization_rate(spec);
    const double l0 = L_alpha(spec, n);
    double total = 0.0;
    Vec m = n;
    for (Eigen::Index i = 0; i < n.size(); ++i) {
        m[i] = n[i] + 1.0;
        total += spec.nu()[i] * (L_alpha(spec, m) - l0);
        if (n[i] >= 1.0) {
            m[i] = n[i] - 1.0;
            total += spec.mu()[i] * alloc.rates[i] * (L_alpha(spec, m) - l0);
        }
        m[i] = n[i];
    }
    return total / xi_rate;
}

/// The explicit load-dependent constants feeding the bound evaluators.
/// B is certified numerically by the shell scan in compute_constants;
/// Ktilde is defined for alpha >= 1 (the maximal-excursion regime) and is 0
/// otherwise.
struct BoundConstants {
    double eps = 0.0;
    double Xi = 0.0;
    Vec w;
    double K = 0.0;
    double xi = 0.0;
    double B = 0.0;
    double m = 0.0;
    double M = 0.0;
    double Ktilde = 0.0;
    std::vector<IVec> probe_set;
    std::uint64_t probe_set_hash = 0;
};

namespace detail {

// Inverts H_alpha(x) = target for x >= 0 (H is strictly increasing).
inline double invert_H(double alpha, double target) {
    if (target <= 0.0) return 0.0;
    if (alpha >= 1.0) return std::pow((alpha + 1.0) * target, 1.0 / (alpha + 1.0));
    double lo = 0.0, hi = 1.0;
    while (H_alpha(alpha, hi) < target) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (H_alpha(alpha, mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Scales direction u (max entry 1) so that L_alpha(c u) = level, then rounds
// to the integer lattice.
inline IVec state_at_level(const NetworkSpec& spec, const Vec& u, double level) {
    double lo = 0.0, hi = 1.0;
    while (L_alpha(spec, hi * u) < level && hi < 1e15) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (L_alpha(spec, mid * u) < level ? lo : hi) = mid;
    }
    const double c = 0.5 * (lo + hi);
    IVec n(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
        n[i] = static_cast<std::int64_t>(std::llround(c * u[i]));
    return n;
}

inline std::string serialize_states(const std::vector<IVec>& states) {
    std::string s;
    for (const auto& n : states) {
        for (Eigen::Index i = 0; i < n.size(); ++i) {
            s += std::to_string(n[i]);
            s += i + 1 < n.size() ? ',' : '\n';
        }
    }
    return s;
}

// Structured probe set for one shell (B, 10B]: axis states, the diagonal,
// and random lattice directions, deduplicated and sorted.
inline std::vector<IVec> drift_probe_set(const NetworkSpec& spec, double b_cand) {
    const Eigen::Index num_i = spec.num_routes();
    std::vector<IVec> probes;
    auto push = [&](const IVec& n) {
        if (n.maxCoeff() <= 0) return;
        Vec x = n.cast<double>();
        if (L_alpha(spec, x) > b_cand) probes.push_back(n);
    };

    constexpr int kLevels = 8;
    for (int t = 0; t < kLevels; ++t) {
        const double level = b_cand * std::pow(10.0, (t + 1.0) / kLevels);
        for (Eigen::Index i = 0; i < num_i; ++i) {
            Vec u = Vec::Zero(num_i);
            u[i] = 1.0;
            push(state_at_level(spec, u, level));
        }
        push(state_at_level(spec, Vec::Ones(num_i), level));
    }
    RngStream rng(0x5eedfacecafe1234ull);
    for (int k = 0; k < 24; ++k) {
        Vec u(num_i);
        for (Eigen::Index i = 0; i < num_i; ++i) u[i] = -std::log1p(-rng.uniform01());
        u /= u.maxCoeff();
        const double level = b_cand * std::pow(10.0, (1.0 + (k % kLevels)) / kLevels);
        push(state_at_level(spec, u, level));
    }

    std::sort(probes.begin(), probes.end(), [](const IVec& a, const IVec& b) {
        for (Eigen::Index i = 0; i < a.size(); ++i)
            if (a[i] != b[i]) return a[i] < b[i];
        return false;
    });
    probes.erase(std::unique(probes.begin(), probes.end(),
                             [](const IVec& a, const IVec& b) { return a == b; }),
                 probes.end());
    return probes;
}

}  // namespace detail

/// Evaluates all the paper-given constants and certifies the drift threshold
/// B: the smallest candidate on a geometric grid whose shell (B, 10B] of
/// probe states all satisfy expected_drift_L <= -eps K / 2. The certified
/// probe set and its hash are recorded for auditability.
inline BoundConstants compute_constants(const NetworkSpec& spec, int workers = 1) {
    const LoadProfile lp = load_profile(spec);
    const double alpha = spec.alpha();
    BoundConstants c;
    c.eps = lp.gap;
    c.Xi = uniformization_rate(spec);
    c.w = lyapunov_weights(spec);

    double knum = 0.0;
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        knum = std::max(knum, std::pow(c.w[i], 1.0 / (alpha + 1.0)) * spec.nu()[i]);
    c.K = knum / c.Xi;

    double wmax_pow = 0.0;
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        wmax_pow = std::max(wmax_pow, std::pow(c.w[i], 1.0 / (alpha + 1.0)));
    c.xi = wmax_pow + 2.0 * std::pow(2.0 * c.w.sum(), 1.0 / (alpha + 1.0));

    c.m = std::numeric_limits<double>::infinity();
    c.M = 0.0;
    const double cmax = spec.capacity().maxCoeff();
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
        const double rho = lp.rho[i];
        c.m = std::min(c.m, spec.kappa()[i] * std::pow(rho, 1.0 - alpha));
        c.M = std::max(c.M, spec.kappa()[i] * alpha / (2.0 * std::pow(rho, alpha)) *
                                (rho + cmax));
    }

    if (alpha >= 1.0) {
        // Separable bound per coordinate: phi(x) = -m eps x^alpha + M (x+1)^(alpha-1)
        // is unimodal on x >= 0; golden-section finds its maximum.
        auto phi = [&](double x) {
            return -c.m * c.eps * std::pow(x, alpha) + c.M * std::pow(x + 1.0, alpha - 1.0);
        };
        double hi = 1.0;
        while (phi(hi) >= phi(hi * 0.5) && hi < 1e60) hi *= 2.0;
        double a = 0.0, b = hi;
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = phi(x1), f2 = phi(x2);
        for (int it = 0; it < 200 && (b - a) > 1e-12 * (1.0 + b); ++it) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = phi(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = phi(x1);
            }
        }
        const double phi_star = std::max({phi(0.0), f1, f2});
        c.Ktilde = static_cast<double>(spec.num_routes()) * phi_star *
                   std::pow(c.eps, alpha - 1.0);
    }

    const double target = -c.eps * c.K / 2.0;
    for (double b_cand = std::max(1.0, c.xi); b_cand < 1e12; b_cand *= 1.5) {
        const auto probes = detail::drift_probe_set(spec, b_cand);
        if (probes.empty()) continue;
        std::vector<char> ok(probes.size(), 0);
        detail::parallel_for(workers, static_cast<std::int64_t>(probes.size()),
                             [&](std::int64_t k) {
                                 const Vec x = probes[k].cast<double>();
                                 ok[k] = expected_drift_L(spec, x) <= target ? 1 : 0;
                             });
        if (std::all_of(ok.begin(), ok.end(), [](char v) { return v == 1; })) {
            c.B = b_cand;
            c.probe_set = probes;
            c.probe_set_hash = fnv1a64(detail::serialize_states(probes));
            return c;
        }
    }
    throw SolverDidNotConverge("drift threshold certification did not terminate");
}

struct TailBound {
    double threshold;
    double bound;
};

/// Level-ell tail bound: threshold B + 2 xi ell with bound
/// (xi/(xi + eps K))^(ell+1), clamped to [0,1].
inline TailBound tail_bound(const BoundConstants& c, int level) {
    if (level < 0) throw PreconditionViolation("tail level must be nonnegative");
    TailBound tb;
    tb.threshold = c.B + 2.0 * c.xi * static_cast<double>(level);
    tb.bound = std::pow(c.xi / (c.xi + c.eps * c.K), level + 1.0);
    tb.bound = std::clamp(tb.bound, 0.0, 1.0);
    return tb;
}

/// Bound on P(N*(T) >= b) from state 0 for alpha >= 1:
/// min(1, Kmax T / (eps^(alpha-1) b^(alpha+1))) with
/// Kmax = (alpha+1) Ktilde / min_i w_i.
inline double maximal_bound(const NetworkSpec& spec, const BoundConstants& c, double horizon,
                            double b) {
    if (spec.alpha() < 1.0)
        throw PreconditionViolation("maximal_bound requires alpha >= 1");
    if (!(horizon > 0.0) || !(b > 0.0))
        throw PreconditionViolation("maximal_bound requires T > 0 and b > 0");
    const double alpha = spec.alpha();
    const double kmax = (alpha + 1.0) * c.Ktilde / c.w.minCoeff();
    const double bound = kmax * horizon / (std::pow(c.eps, alpha - 1.0) * std::pow(b, alpha + 1.0));
    return std::clamp(bound, 0.0, 1.0);
}

}  // namespace afn

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "afn/detail/nnls.hpp"
#include "afn/detail/parallel.hpp"
#include "afn/fluid.hpp"
#include "afn/lyapunov.hpp"
#include "afn/network.hpp"
#include "afn/simulator.hpp"

namespace afn {

/// A critically loaded network together with the rule producing the r-th
/// member of the heavy-traffic sequence: rho^r = rho - d/r realized through
/// nu^r = nu - mu.d/r with mu fixed, so that r(C - A rho^r) = theta exactly.
class HeavyTrafficFamily {
public:
    static HeavyTrafficFamily make(NetworkSpec critical, Vec theta,
                                   std::optional<Vec> direction = std::nullopt) {
        const Eigen::Index num_j = critical.num_resources();
        if (theta.size() != num_j) throw InvalidSpec("theta length must equal |J|");
        for (Eigen::Index j = 0; j < num_j; ++j)
            if (!(theta[j] > 0.0)) throw InvalidSpec("theta must be strictly positive");
        const Vec rho = critical.nu().cwiseQuotient(critical.mu());
        const Vec load = critical.incidence() * rho;
        for (Eigen::Index j = 0; j < num_j; ++j)
            if (std::abs(load[j] - critical.capacity()[j]) > 1e-12 * critical.capacity()[j])
                throw InvalidSpec("the family base must be critically loaded (A rho = C)");

        Vec d;
        if (direction) {
            d = *direction;
            if (d.size() != critical.num_routes())
                throw InvalidSpec("direction length must equal |I|");
            for (Eigen::Index i = 0; i < d.size(); ++i)
                if (!(d[i] >= 0.0)) throw InvalidSpec("direction must be nonnegative");
        } else {
            d = detail::nnls(critical.incidence(), theta);
        }
        if ((critical.incidence() * d - theta).cwiseAbs().maxCoeff() > 1e-9)
            throw InvalidSpec("no nonnegative direction with A d = theta");

        HeavyTrafficFamily fam;
        fam.critical_ = std::move(critical);
        fam.theta_ = std::move(theta);
        fam.direction_ = std::move(d);
        return fam;
    }

    const NetworkSpec& critical() const { return *critical_; }
    const Vec& theta() const { return theta_; }
    const Vec& direction() const { return direction_; }

    /// Members are underloaded (nu^r > 0) only for r above this.
    double min_r() const {
        const Vec rho = critical_->nu().cwiseQuotient(critical_->mu());
        double m = 0.0;
        for (Eigen::Index i = 0; i < direction_.size(); ++i)
            m = std::max(m, direction_[i] / rho[i]);
        return m;
    }

    /// Family constant D with gap(member(r)) >= D / r.
    double gap_scale() const {
        return (theta_.cwiseQuotient(critical_->capacity())).minCoeff();
    }

    NetworkSpec member(double r) const {
        if (!(r > min_r()))
            throw NotUnderloaded("r must exceed " + format12(min_r()) +
                                 " for an underloaded member");
        const Vec nu_r = critical_->nu() - critical_->mu().cwiseProduct(direction_) / r;
        return NetworkSpec::validate(critical_->incidence(), critical_->capacity(),
                                     critical_->kappa(), critical_->alpha(), nu_r,
                                     critical_->mu());
    }

private:
    HeavyTrafficFamily() = default;
    std::optional<NetworkSpec> critical_;
    Vec theta_;
    Vec direction_;
};

/// Diffusion scaling: event times divided by r^2, states by r.
inline Trace diffusion_scale(const Trace& tr, double r) {
    Trace out;
    out.horizon = tr.horizon / (r * r);
    out.times.reserve(tr.times.size());
    out.states.reserve(tr.states.size());
    for (double t : tr.times) out.times.push_back(t / (r * r));
    for (const auto& s : tr.states) out.states.push_back(s / r);
    return out;
}

/// Fluid scaling: event times divided by r, states by r.
inline Trace fluid_scale(const Trace& tr, double r) {
    Trace out;
    out.horizon = tr.horizon / r;
    out.times.reserve(tr.times.size());
    out.states.reserve(tr.states.size());
    for (double t : tr.times) out.times.push_back(t / r);
    for (const auto& s : tr.states) out.states.push_back(s / r);
    return out;
}

struct SscMetrics {
    double absolute = 0.0;        // sup_t ||N^(t) - Delta(W^(t))||_inf
    double multiplicative = 0.0;  // absolute / max(sup_t ||N^(t)||_inf, 1e-9)
};

/// State space collapse metrics of a scaled trace, with the lifting map
/// evaluated under the r-th member's parameters.
inline SscMetrics ssc_metrics(const NetworkSpec& spec_r, const Trace& scaled_trace) {
    SscMetrics out;
    double sup_norm = 0.0;
    Vec warm;
    LiftOptions opt;
    for (const auto& state : scaled_trace.states) {
        const Vec w = spec_r.incidence() * state.cwiseQuotient(spec_r.mu());
        if (warm.size() == spec_r.num_resources()) opt.warm_prices = &warm;
        const LiftResult lifted = lift(spec_r, w, opt);
        warm = lifted.dual_prices;
        out.absolute = std::max(out.absolute, (state - lifted.n).cwiseAbs().maxCoeff());
        sup_norm = std::max(sup_norm, state.cwiseAbs().maxCoeff());
    }
    out.multiplicative = out.absolute / std::max(sup_norm, 1e-9);
    return out;
}

/// Limit data of the workload diffusion: covariance Gamma, the stationary
/// density exponent v (oriented so exp(<v, w>) is integrable on the workload
/// cone), the cone's generator matrix, and the normalizing constant of the
/// density (computed for |J| <= 3).
struct SrbmData {
    Mat Gamma;
    Vec v;
    Mat cone_generators;  // column j spans the ray from dual price e_j
    bool drift_sign_flipped = false;
    double normalization = 0.0;
};

namespace detail {

inline bool cone_membership(const Mat& gens, const Vec& w, double tol) {
    const Vec q = nnls(gens, w);
    return (gens * q - w).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace detail

/// Computes Gamma = 2 A M^{-1} diag(nu) M^{-1} A^T and v = 2 Gamma^{-1} theta
/// from the limit parameters, picking the sign orientation under which the
/// density decays along every extreme ray of the workload cone.
inline SrbmData srbm_data(const HeavyTrafficFamily& family) {
    const NetworkSpec& spec = family.critical();
    if (spec.alpha() != 1.0)
        throw PreconditionViolation("the SRBM limit data is stated for alpha = 1");
    const Mat minv = spec.mu().cwiseInverse().asDiagonal();
    SrbmData out;
    out.Gamma = 2.0 * spec.incidence() * minv * spec.nu().asDiagonal() * minv *
                spec.incidence().transpose();

    // Workload cone generators from the explicit manifold characterization:
    // n(q) = diag(rho/kappa) A^T q, w(q) = A M^{-1} n(q).
    const Vec rho = spec.nu().cwiseQuotient(spec.mu());
    Mat lift_basis(spec.num_routes(), spec.num_resources());
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
            lift_basis(i, j) = rho[i] * spec.incidence()(j, i) / spec.kappa()[i];
    out.cone_generators = spec.incidence() * minv * lift_basis;

    const Vec v_raw = 2.0 * out.Gamma.ldlt().solve(family.theta());
    auto decays = [&](const Vec& v) {
        const Vec ray_rates = out.cone_generators.transpose() * v;
        return (ray_rates.array() < 0.0).all();
    };
    if (decays(-v_raw)) {
        out.v = -v_raw;
        out.drift_sign_flipped = true;
    } else if (decays(v_raw)) {
        out.v = v_raw;
    } else {
        throw NotNormalizable("exp(<v, w>) is not integrable on the cone for either sign");
    }

    const Eigen::Index num_j = spec.num_resources();
    if (num_j == 1) {
        out.normalization = -out.v[0];
    } else if (num_j <= 3) {
        // Tensor-grid integration over the box where the density stays above
        // the 1e-12 truncation level, with cone membership per node.
        const double log_cut = std::log(1e12);
        Vec reach(num_j);
        for (Eigen::Index j = 0; j < num_j; ++j) reach[j] = log_cut / std::max(-out.v[j], 1e-3);
        const int grid = num_j == 2 ? 160 : 48;
        double integral = 0.0;
        std::vector<int> idx(num_j, 0);
        const double tol = 1e-8;
        while (true) {
            Vec w(num_j);
            double cell = 1.0;
            for (Eigen::Index j = 0; j < num_j; ++j) {
                w[j] = (idx[j] + 0.5) * reach[j] / grid;
                cell *= reach[j] / grid;
            }
            if (detail::cone_membership(out.cone_generators, w, tol * (1.0 + w.norm())))
                integral += std::exp(out.v.dot(w)) * cell;
            Eigen::Index carry = 0;
            while (carry < num_j && ++idx[carry] == grid) idx[carry++] = 0;
            if (carry == num_j) break;
        }
        if (integral <= 0.0) throw NotNormalizable("density mass vanished on the cone");
        out.normalization = 1.0 / integral;
    }
    return out;
}

/// Atomic scalar law: sorted support with probabilities.
struct ScalarLaw {
    std::vector<double> x;
    std::vector<double> p;
};

inline ScalarLaw scalar_pushforward(const StationaryEstimate& law,
                                    const std::function<double(const IVec&)>& f) {
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(law.support.size());
    for (std::size_t k = 0; k < law.support.size(); ++k)
        atoms.emplace_back(f(law.support[k]), law.probabilities[k]);
    std::sort(atoms.begin(), atoms.end());
    ScalarLaw out;
    for (const auto& [x, p] : atoms) {
        if (!out.x.empty() && out.x.back() == x)
            out.p.back() += p;
        else {
            out.x.push_back(x);
            out.p.push_back(p);
        }
    }
    return out;
}

/// Kolmogorov-Smirnov distance between an atomic law and a continuous CDF.
inline double ks_against_cdf(const ScalarLaw& law,
                             const std::function<double(double)>& cdf) {
    double cum = 0.0, d = 0.0;
    for (std::size_t k = 0; k < law.x.size(); ++k) {
        const double f = cdf(law.x[k]);
        d = std::max(d, std::abs(cum - f));  // just below the atom
        cum += law.p[k];
        d = std::max(d, std::abs(cum - f));  // at the atom
    }
    return d;
}

/// KS distance between two atomic laws.
inline double ks_between(const ScalarLaw& a, const ScalarLaw& b) {
    double fa = 0.0, fb = 0.0, d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.x.size() || j < b.x.size()) {
        const double xa = i < a.x.size() ? a.x[i] : std::numeric_limits<double>::infinity();
        const double xb = j < b.x.size() ? b.x[j] : std::numeric_limits<double>::infinity();
        if (xa <= xb) fa += a.p[i++];
        if (xb <= xa) fb += b.p[j++];
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

struct MemberLaw {
    double r = 0.0;
    double gap = 0.0;
    std::string method;
    StationaryEstimate law;
};

/// Stationary law of the r-th member: the exact truncated solve whenever the
/// box fits the state budget (cap = ceil(12 r / theta_scale)), Monte Carlo
/// occupancy otherwise.
inline MemberLaw member_stationary(const HeavyTrafficFamily& family, double r,
                                   std::int64_t per_r_budget, std::uint64_t seed,
                                   std::int64_t state_budget = 4'000'000) {
    MemberLaw out;
    out.r = r;
    const NetworkSpec spec = family.member(r);
    out.gap = load_profile(spec).gap;
    const double theta_scale = family.gap_scale();
    const int cap = static_cast<int>(std::ceil(12.0 * r / theta_scale));
    double states = 1.0;
    for (Eigen::Index k = 0; k < spec.num_routes(); ++k)
        states *= static_cast<double>(cap + 1);
    if (states <= static_cast<double>(state_budget)) {
        out.method = "exact-truncated";
        out.law = exact_stationary(spec, cap, state_budget);
    } else {
        out.method = "monte-carlo";
        out.law = estimate_stationary(spec, per_r_budget / 10, per_r_budget, seed);
    }
    return out;
}

struct InterchangeRow {
    double r = 0.0;
    double gap = 0.0;
    std::string method;
    Vec ks_per_link;  // scaled workload law vs the SRBM marginal, per link
    Vec flow_ks;      // scaled flow law vs the Delta-pushforward, per route
};

struct InterchangeReport {
    SrbmData srbm;
    std::vector<InterchangeRow> rows;
};

namespace detail {

// Per-coordinate CDFs of the SRBM stationary law and of its
// Delta-pushforward to flow space. Closed form for a single link; sampled by
// rejection for larger cones (requires componentwise decay).
struct SrbmMarginals {
    std::vector<std::function<double(double)>> workload_cdf;
    std::vector<std::function<double(double)>> flow_cdf;
};

inline SrbmMarginals srbm_marginals(const HeavyTrafficFamily& family, const SrbmData& srbm,
                                    std::uint64_t seed) {
    const NetworkSpec& spec = family.critical();
    SrbmMarginals out;
    if (spec.num_resources() == 1) {
        const double rate = -srbm.v[0];
        out.workload_cdf.push_back(
            [rate](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-rate * x); });
        const Vec c = lift(spec, Vec::Ones(1)).n;
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
            const double ci = c[i];
            out.flow_cdf.push_back([rate, ci](double x) {
                if (ci <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
                return x <= 0.0 ? 0.0 : 1.0 - std::exp(-rate * x / ci);
            });
        }
        return out;
    }

    for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
        if (!(srbm.v[j] < 0.0))
            throw NotNormalizable(
                "rejection sampling of the cone law needs componentwise decay");
    const int samples = 20000;
    Mat w_samples(spec.num_resources(), samples);
    Mat n_samples(spec.num_routes(), samples);
    RngStream rng(seed, 0x5eb5);
    Vec warm;
    LiftOptions lopt;
    for (int s = 0; s < samples; ++s) {
        Vec w(spec.num_resources());
        do {
            for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
                w[j] = rng.exponential(-srbm.v[j]);
        } while (!cone_membership(srbm.cone_generators, w, 1e-8 * (1.0 + w.norm())));
        w_samples.col(s) = w;
        if (warm.size() == spec.num_resources()) lopt.warm_prices = &warm;
        const LiftResult lifted = lift(spec, w, lopt);
        warm = lifted.dual_prices;
        n_samples.col(s) = lifted.n;
    }
    auto empirical_cdf = [](Vec values) {
        std::sort(values.data(), values.data() + values.size());
        return [values](double x) {
            const auto* end = std::upper_bound(values.data(), values.data() + values.size(), x);
            return static_cast<double>(end - values.data()) /
                   static_cast<double>(values.size());
        };
    };
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
        out.workload_cdf.push_back(empirical_cdf(w_samples.row(j).transpose()));
    for (Eigen::Index i = 0; i < spec.num_routes(); ++i)
        out.flow_cdf.push_back(empirical_cdf(n_samples.row(i).transpose()));
    return out;
}

}  // namespace detail

/// For each r: the stationary law of the scaled flow process, its workload
/// pushforward, and the per-coordinate KS distances against the SRBM
/// stationary law and its Delta-pushforward. Requires alpha = 1, unit
/// weights, and the local traffic condition.
inline InterchangeReport interchange_experiment(const HeavyTrafficFamily& family,
                                                const std::vector<double>& r_list,
                                                std::int64_t per_r_budget, std::uint64_t seed,
                                                int workers = 1,
                                                std::int64_t state_budget = 4'000'000) {
    const NetworkSpec& spec = family.critical();
    if (spec.alpha() != 1.0)
        throw PreconditionViolation("the interchange experiment requires alpha = 1");
    if ((spec.kappa().array() - 1.0).abs().maxCoeff() > 1e-12)
        throw PreconditionViolation("the interchange experiment requires kappa = 1");
    if (!local_traffic_holds(spec))
        throw PreconditionViolation("the interchange experiment requires local traffic");

    InterchangeReport report;
    report.srbm = srbm_data(family);
    if (r_list.empty()) return report;
    const auto marginals = detail::srbm_marginals(family, report.srbm, seed);

    report.rows.resize(r_list.size());
    detail::parallel_for(workers, static_cast<std::int64_t>(r_list.size()), [&](std::int64_t k) {
        const double r = r_list[static_cast<std::size_t>(k)];
        const std::uint64_t sub_seed = RngStream(seed, static_cast<std::uint64_t>(k)).raw();
        MemberLaw ml = member_stationary(family, r, per_r_budget, sub_seed, state_budget);
        const NetworkSpec spec_r = family.member(r);

        InterchangeRow row;
        row.r = r;
        row.gap = ml.gap;
        row.method = ml.method;
        row.ks_per_link.resize(spec.num_resources());
        for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
            const ScalarLaw wj = scalar_pushforward(ml.law, [&](const IVec& n) {
                double w = 0.0;
                for (Eigen::Index i = 0; i < n.size(); ++i)
                    w += spec_r.incidence()(j, i) * static_cast<double>(n[i]) / spec_r.mu()[i];
                return w / r;
            });
            row.ks_per_link[j] = ks_against_cdf(wj, marginals.workload_cdf[j]);
        }
        row.flow_ks.resize(spec.num_routes());
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
            const ScalarLaw ni = scalar_pushforward(ml.law, [&](const IVec& n) {
                return static_cast<double>(n[i]) / r;
            });
            row.flow_ks[i] = ks_against_cdf(ni, marginals.flow_cdf[i]);
        }
        report.rows[static_cast<std::size_t>(k)] = std::move(row);
    });
    return report;
}

/// q-quantile of ||N^r||_inf / r under each member's stationary law.
inline std::vector<double> tightness_diagnostic(const HeavyTrafficFamily& family,
                                                const std::vector<double>& r_list, double q,
                                                std::int64_t per_r_budget = 1'000'000,
                                                std::uint64_t seed = 0,
                                                std::int64_t state_budget = 4'000'000) {
    if (family.critical().alpha() != 1.0)
        throw PreconditionViolation("the tightness diagnostic is stated for alpha = 1");
    if (!(q >= 0.0 && q <= 1.0)) throw PreconditionViolation("q must lie in [0, 1]");
    std::vector<double> out;
    for (std::size_t k = 0; k < r_list.size(); ++k) {
        const double r = r_list[k];
        const std::uint64_t sub_seed = RngStream(seed, 0x719 + k).raw();
        MemberLaw ml = member_stationary(family, r, per_r_budget, sub_seed, state_budget);
        const ScalarLaw norm_law = scalar_pushforward(ml.law, [&](const IVec& n) {
            return static_cast<double>(n.maxCoeff()) / r;
        });
        double cum = 0.0;
        double value = norm_law.x.empty() ? 0.0 : norm_law.x.front();
        for (std::size_t a = 0; a < norm_law.x.size(); ++a) {
            cum += norm_law.p[a];
            if (cum >= q) {
                value = norm_law.x[a];
                break;
            }
        }
        if (q <= 0.0) value = norm_law.x.empty() ? 0.0 : norm_law.x.front();
        out.push_back(value);
    }
    return out;
}

struct SscAverage {
    double absolute = 0.0;
    double multiplicative = 0.0;
};

/// Replica-averaged SSC metrics of diffusion-scaled paths of member r over
/// scaled horizon `horizon_scaled`, started from zero flows.
inline SscAverage ssc_trend_point(const HeavyTrafficFamily& family, double r, int replicas,
                                  double horizon_scaled, std::uint64_t seed, int workers = 1) {
    const NetworkSpec spec_r = family.member(r);
    std::vector<SscMetrics> per(static_cast<std::size_t>(replicas));
    detail::parallel_for(workers, replicas, [&](std::int64_t rep) {
        AllocationCache cache(spec_r);
        const FlowState zero{IVec::Zero(spec_r.num_routes())};
        const Trace tr = simulate_ctmc(spec_r, zero, r * r * horizon_scaled, seed, {}, &cache,
                                       static_cast<std::uint64_t>(rep));
        per[static_cast<std::size_t>(rep)] = ssc_metrics(spec_r, diffusion_scale(tr, r));
    });
    SscAverage avg;
    for (const auto& m : per) {
        avg.absolute += m.absolute;
        avg.multiplicative += m.multiplicative;
    }
    avg.absolute /= replicas;
    avg.multiplicative /= replicas;
    return avg;
}

struct HeavyTrafficRow {
    double r = 0.0;
    double gap = 0.0;
    std::string method;
    Vec ks_per_link;
    Vec flow_ks;
    double ssc_abs = 0.0;
    double ssc_mult = 0.0;
    Vec quantiles;
};

struct HeavyTrafficReport {
    SrbmData srbm;
    std::vector<HeavyTrafficRow> rows;
};

struct HeavyTrafficOptions {
    std::int64_t per_r_budget = 1'000'000;
    std::uint64_t seed = 0;
    std::vector<double> quantiles{0.5, 0.9, 0.99};
    int ssc_replicas = 4;
    double ssc_horizon = 1.0;
    int workers = 1;
    std::int64_t state_budget = 4'000'000;
};

/// One-pass aggregation for the heavy-traffic experiment: interchange KS
/// distances, SSC metrics, and tightness quantiles per member, each member's
/// stationary law solved once.
inline HeavyTrafficReport heavy_traffic_report(const HeavyTrafficFamily& family,
                                               const std::vector<double>& r_list,
                                               const HeavyTrafficOptions& opt = {}) {
    const NetworkSpec& spec = family.critical();
    if (spec.alpha() != 1.0)
        throw PreconditionViolation("the heavy-traffic experiment requires alpha = 1");
    if ((spec.kappa().array() - 1.0).abs().maxCoeff() > 1e-12)
        throw PreconditionViolation("the heavy-traffic experiment requires kappa = 1");
    if (!local_traffic_holds(spec))
        throw PreconditionViolation("the heavy-traffic experiment requires local traffic");

    HeavyTrafficReport report;
    report.srbm = srbm_data(family);
    if (r_list.empty()) return report;
    const auto marginals = detail::srbm_marginals(family, report.srbm, opt.seed);

    report.rows.resize(r_list.size());
    detail::parallel_for(opt.workers, static_cast<std::int64_t>(r_list.size()),
                         [&](std::int64_t k) {
        const double r = r_list[static_cast<std::size_t>(k)];
        const std::uint64_t sub_seed = RngStream(opt.seed, static_cast<std::uint64_t>(k)).raw();
        MemberLaw ml =
            member_stationary(family, r, opt.per_r_budget, sub_seed, opt.state_budget);
        const NetworkSpec spec_r = family.member(r);

        HeavyTrafficRow row;
        row.r = r;
        row.gap = ml.gap;
        row.method = ml.method;
        row.ks_per_link.resize(spec.num_resources());
        for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
            const ScalarLaw wj = scalar_pushforward(ml.law, [&](const IVec& n) {
                double w = 0.0;
                for (Eigen::Index i = 0; i < n.size(); ++i)
                    w += spec_r.incidence()(j, i) * static_cast<double>(n[i]) / spec_r.mu()[i];
                return w / r;
            });
            row.ks_per_link[j] = ks_against_cdf(wj, marginals.workload_cdf[j]);
        }
        row.flow_ks.resize(spec.num_routes());
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
            const ScalarLaw ni = scalar_pushforward(
                ml.law, [&](const IVec& n) { return static_cast<double>(n[i]) / r; });
            row.flow_ks[i] = ks_against_cdf(ni, marginals.flow_cdf[i]);
        }

        const ScalarLaw norm_law = scalar_pushforward(ml.law, [&](const IVec& n) {
            return static_cast<double>(n.maxCoeff()) / r;
        });
        row.quantiles.resize(static_cast<Eigen::Index>(opt.quantiles.size()));
        for (std::size_t qi = 0; qi < opt.quantiles.size(); ++qi) {
            const double q = opt.quantiles[qi];
            double cum = 0.0;
            double value = norm_law.x.empty() ? 0.0 : norm_law.x.front();
            for (std::size_t a = 0; a < norm_law.x.size() && q > 0.0; ++a) {
                cum += norm_law.p[a];
                if (cum >= q) {
                    value = norm_law.x[a];
                    break;
                }
            }
            row.quantiles[static_cast<Eigen::Index>(qi)] = value;
        }

        const SscAverage ssc = ssc_trend_point(
            family, r, opt.ssc_replicas, opt.ssc_horizon,
            RngStream(opt.seed, 0xab5 + static_cast<std::uint64_t>(k)).raw(), 1);
        row.ssc_abs = ssc.absolute;
        row.ssc_mult = ssc.multiplicative;
        report.rows[static_cast<std::size_t>(k)] = std::move(row);
    });
    return report;
}

}  // namespace afn

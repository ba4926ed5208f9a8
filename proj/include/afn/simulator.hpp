#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "afn/allocator.hpp"
#include "afn/detail/parallel.hpp"
#include "afn/network.hpp"
#include "afn/rng.hpp"

namespace afn {

/// Piecewise-constant sample path. states[k] holds the state from times[k]
/// until the next event; states are real-valued so scaled copies share the
/// representation.
struct Trace {
    std::vector<double> times;
    std::vector<Vec> states;
    double horizon = 0.0;
};

struct SimOptions {
    std::int64_t state_cap = 1'000'000;  // per-coordinate runaway guard
};

/// Bounded memo of allocations per visited integer state. Entries equal fresh
/// allocator output; the previous solve's prices seed the next one.
class AllocationCache {
public:
    explicit AllocationCache(const NetworkSpec& spec, std::size_t max_entries = 1u << 20)
        : spec_(spec), max_entries_(max_entries) {}

    const Vec& rates(const IVec& n) {
        key_.assign(n.data(), n.data() + n.size());
        auto it = cache_.find(key_);
        if (it != cache_.end()) return it->second;
        AllocateOptions opt;
        if (warm_.size() == spec_.num_resources()) opt.warm_prices = &warm_;
        Allocation a = allocate(spec_, n.cast<double>(), opt);
        warm_ = a.dual_prices;
        if (cache_.size() >= max_entries_) return (scratch_ = std::move(a.rates));
        return cache_.emplace(key_, std::move(a.rates)).first->second;
    }

    const NetworkSpec& spec() const { return spec_; }

private:
    struct KeyHash {
        std::size_t operator()(const std::vector<std::int64_t>& v) const {
            return static_cast<std::size_t>(
                fnv1a64(v.data(), v.size() * sizeof(std::int64_t)));
        }
    };

    const NetworkSpec& spec_;
    std::size_t max_entries_;
    std::vector<std::int64_t> key_;
    std::unordered_map<std::vector<std::int64_t>, Vec, KeyHash> cache_;
    Vec warm_;
    Vec scratch_;
};

/// Event-driven simulation of the flow process: from state n the holding time
/// is exponential with rate Xi(n) = sum_i (nu_i + mu_i Lambda_i(n)) and the
/// jump is +e_i w.p. nu_i/Xi(n), -e_i w.p. mu_i Lambda_i(n)/Xi(n).
/// Bit-identical given (spec, initial, horizon, seed, stream).
inline Trace simulate_ctmc(const NetworkSpec& spec, const FlowState& initial, double horizon,
                           std::uint64_t seed, SimOptions opt = {},
                           AllocationCache* cache = nullptr, std::uint64_t stream = 0) {
    if (!(horizon > 0.0)) throw PreconditionViolation("horizon must be positive");
    const Eigen::Index num_i = spec.num_routes();
    AllocationCache local(spec);
    AllocationCache& alloc_cache = cache ? *cache : local;
    RngStream rng(seed, stream);

    Trace trace;
    trace.horizon = horizon;
    IVec n = initial.counts;
    trace.times.push_back(0.0);
    trace.states.push_back(n.cast<double>());

    double t = 0.0;
    Vec rate(2 * num_i);
    while (true) {
        const Vec& lam = alloc_cache.rates(n);
        double total = 0.0;
        for (Eigen::Index i = 0; i < num_i; ++i) {
            rate[i] = spec.nu()[i];
            rate[num_i + i] = n[i] >= 1 ? spec.mu()[i] * lam[i] : 0.0;
            total += rate[i] + rate[num_i + i];
        }
        t += rng.exponential(total);
        if (t > horizon) break;
        double u = rng.uniform01() * total;
        Eigen::Index pick = 0;
        for (; pick < 2 * num_i - 1; ++pick) {
            u -= rate[pick];
            if (u < 0.0) break;
        }
        if (pick < num_i) {
            n[pick] += 1;
            if (n[pick] > opt.state_cap)
                throw StateCapExceeded("coordinate " + std::to_string(pick) +
                                       " exceeded the state cap");
        } else {
            n[pick - num_i] -= 1;
        }
        trace.times.push_back(t);
        trace.states.push_back(n.cast<double>());
    }
    return trace;
}

/// One transition of the uniformized chain: P(n, n+e_i) = nu_i/Xi,
/// P(n, n-e_i) = mu_i Lambda_i(n)/Xi, self-loop with the leftover mass.
inline IVec uniformized_step(const NetworkSpec& spec, const IVec& n, RngStream& rng,
                             AllocationCache& cache) {
    const Eigen::Index num_i = spec.num_routes();
    const double xi = uniformization_rate(spec);
    const Vec& lam = cache.rates(n);
    double u = rng.uniform01() * xi;
    for (Eigen::Index i = 0; i < num_i; ++i) {
        u -= spec.nu()[i];
        if (u < 0.0) {
            IVec next = n;
            next[i] += 1;
            return next;
        }
    }
    for (Eigen::Index i = 0; i < num_i; ++i) {
        if (n[i] < 1) continue;
        u -= spec.mu()[i] * lam[i];
        if (u < 0.0) {
            IVec next = n;
            next[i] -= 1;
            return next;
        }
    }
    return n;  // self-loop
}

struct StationaryEstimate {
    enum class Method { kExactTruncated, kMonteCarlo };
    std::vector<IVec> support;  // lexicographically sorted
    Vec probabilities;
    Method method = Method::kExactTruncated;
    std::int64_t truncation_or_samples = 0;
};

/// Total variation distance over the union of supports.
inline double tv_distance(const StationaryEstimate& a, const StationaryEstimate& b) {
    std::map<std::vector<std::int64_t>, double> acc;
    for (std::size_t k = 0; k < a.support.size(); ++k) {
        const auto& n = a.support[k];
        acc[std::vector<std::int64_t>(n.data(), n.data() + n.size())] += a.probabilities[k];
    }
    for (std::size_t k = 0; k < b.support.size(); ++k) {
        const auto& n = b.support[k];
        acc[std::vector<std::int64_t>(n.data(), n.data() + n.size())] -= b.probabilities[k];
    }
    double s = 0.0;
    for (const auto& [key, v] : acc) s += std::abs(v);
    return 0.5 * s;
}

namespace detail {

inline std::int64_t box_index(const IVec& n, std::int64_t side) {
    std::int64_t idx = 0;
    for (Eigen::Index k = 0; k < n.size(); ++k) idx = idx * side + n[k];
    return idx;
}

inline IVec box_state(std::int64_t idx, std::int64_t side, Eigen::Index dims) {
    IVec n(dims);
    for (Eigen::Index k = dims - 1; k >= 0; --k) {
        n[k] = idx % side;
        idx /= side;
    }
    return n;
}

}  // namespace detail

/// Stationary law of the truncated chain on {0..cap}^|I|: arrivals that would
/// exit the box become self-loops, which keeps the generator a proper one and
/// leaves a truncation error that vanishes geometrically for underloaded
/// specs. Solved as pi Q = 0 with the reference-state equation removed
/// (pi(0) pinned, then normalized); the reduced matrix is a nonsingular
/// M-matrix, solved directly when small and by ILU-preconditioned Krylov
/// iterations when large.
inline StationaryEstimate exact_stationary(const NetworkSpec& spec, int cap,
                                           std::int64_t state_budget = 4'000'000) {
    load_profile(spec);  // throws NotUnderloaded
    if (cap < 0) throw PreconditionViolation("cap must be nonnegative");
    const Eigen::Index num_i = spec.num_routes();
    const std::int64_t side = cap + 1;
    double total_states = 1.0;
    for (Eigen::Index k = 0; k < num_i; ++k) total_states *= static_cast<double>(side);
    if (total_states > static_cast<double>(state_budget))
        throw CapTooLargeForBudget("(cap+1)^|I| = " + format12(total_states) +
                                   " exceeds the state budget " +
                                   std::to_string(state_budget));
    const std::int64_t num_states = static_cast<std::int64_t>(total_states);

    StationaryEstimate est;
    est.method = StationaryEstimate::Method::kExactTruncated;
    est.truncation_or_samples = cap;
    est.support.reserve(num_states);
    for (std::int64_t idx = 0; idx < num_states; ++idx)
        est.support.push_back(detail::box_state(idx, side, num_i));

    if (num_states == 1) {
        est.probabilities = Vec::Ones(1);
        return est;
    }

    // Reduced balance equations over states x != 0, unknowns y_x = pi_x/pi_0,
    // negated so the diagonal is positive:
    //   out_rate(x) y_x - sum_{y != 0, x} q(y, x) y_y = q(0, x).
    using Sparse = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(num_states) * (2 * num_i + 1));
    Vec rhs = Vec::Zero(num_states - 1);
    AllocationCache cache(spec, 1u << 22);
    IVec m(num_i);
    for (std::int64_t from = 0; from < num_states; ++from) {
        const IVec& n = est.support[from];
        const Vec& lam = cache.rates(n);
        double out_rate = 0.0;
        auto add_edge = [&](std::int64_t to, double r) {
            out_rate += r;
            if (to == 0) return;  // the reference equation was dropped
            if (from == 0)
                rhs[to - 1] += r;
            else
                trips.emplace_back(static_cast<int>(to - 1), static_cast<int>(from - 1), -r);
        };
        m = n;
        for (Eigen::Index i = 0; i < num_i; ++i) {
            if (n[i] < cap) {
                m[i] = n[i] + 1;
                add_edge(detail::box_index(m, side), spec.nu()[i]);
                m[i] = n[i];
            }
            if (n[i] >= 1) {
                m[i] = n[i] - 1;
                add_edge(detail::box_index(m, side), spec.mu()[i] * lam[i]);
                m[i] = n[i];
            }
        }
        if (from != 0)
            trips.emplace_back(static_cast<int>(from - 1), static_cast<int>(from - 1), out_rate);
    }
    Sparse mat(num_states - 1, num_states - 1);
    mat.setFromTriplets(trips.begin(), trips.end());
    mat.makeCompressed();

    Vec y;
    bool solved = false;
    if (num_states - 1 <= 20000) {
        Eigen::SparseLU<Sparse> lu;
        lu.compute(mat);
        if (lu.info() == Eigen::Success) {
            y = lu.solve(rhs);
            solved = lu.info() == Eigen::Success;
        }
    }
    if (!solved) {
        Eigen::BiCGSTAB<Sparse, Eigen::IncompleteLUT<double>> solver;
        solver.preconditioner().setDroptol(1e-5);
        solver.preconditioner().setFillfactor(12);
        solver.setTolerance(1e-13);
        solver.setMaxIterations(40000);
        solver.compute(mat);
        y = solver.solve(rhs);
        solved = solver.info() == Eigen::Success &&
                 (mat * y - rhs).cwiseAbs().maxCoeff() <= 1e-9 * rhs.cwiseAbs().maxCoeff();
    }
    if (!solved) {
        Eigen::GMRES<Sparse, Eigen::IncompleteLUT<double>> solver;
        solver.preconditioner().setDroptol(1e-5);
        solver.preconditioner().setFillfactor(12);
        solver.set_restart(80);
        solver.setTolerance(1e-13);
        solver.setMaxIterations(40000);
        solver.compute(mat);
        y = solver.solve(rhs);
        solved = solver.info() == Eigen::Success &&
                 (mat * y - rhs).cwiseAbs().maxCoeff() <= 1e-9 * rhs.cwiseAbs().maxCoeff();
    }
    if (!solved) throw SolverDidNotConverge("stationary linear solve failed");

    est.probabilities.resize(num_states);
    est.probabilities[0] = 1.0;
    for (std::int64_t idx = 1; idx < num_states; ++idx)
        est.probabilities[idx] = std::max(y[idx - 1], 0.0);
    est.probabilities /= est.probabilities.sum();
    return est;
}

/// Empirical occupancy of the uniformized chain started at 0: burn_in steps
/// discarded, then `steps` states counted (self-loops included; they carry
/// the correct time weighting).
inline StationaryEstimate estimate_stationary(const NetworkSpec& spec, std::int64_t burn_in,
                                              std::int64_t steps, std::uint64_t seed) {
    load_profile(spec);  // throws NotUnderloaded
    if (steps <= 0) throw EmptySample("steps must be positive");
    RngStream rng(seed);
    AllocationCache cache(spec);
    IVec n = IVec::Zero(spec.num_routes());
    for (std::int64_t k = 0; k < burn_in; ++k) n = uniformized_step(spec, n, rng, cache);

    std::map<std::vector<std::int64_t>, std::int64_t> counts;
    for (std::int64_t k = 0; k < steps; ++k) {
        counts[std::vector<std::int64_t>(n.data(), n.data() + n.size())] += 1;
        n = uniformized_step(spec, n, rng, cache);
    }

    StationaryEstimate est;
    est.method = StationaryEstimate::Method::kMonteCarlo;
    est.truncation_or_samples = steps;
    est.support.reserve(counts.size());
    est.probabilities.resize(static_cast<Eigen::Index>(counts.size()));
    Eigen::Index k = 0;
    for (const auto& [key, cnt] : counts) {
        IVec state(static_cast<Eigen::Index>(key.size()));
        for (std::size_t d = 0; d < key.size(); ++d) state[static_cast<Eigen::Index>(d)] = key[d];
        est.support.push_back(std::move(state));
        est.probabilities[k++] = static_cast<double>(cnt) / static_cast<double>(steps);
    }
    return est;
}

/// N*(T) = sup over the path of the largest coordinate; exact for the
/// piecewise-constant trace.
inline double max_excursion(const Trace& trace) {
    double peak = 0.0;
    for (const auto& s : trace.states) peak = std::max(peak, s.maxCoeff());
    return peak;
}

/// Empirical P(N*(T) >= b) per grid value over independent replicas started
/// at 0; stream r of the seed drives replica r, so the worker count never
/// changes the result, only the wall clock.
inline Vec excursion_probabilities(const NetworkSpec& spec, double horizon,
                                   const std::vector<double>& b_grid, std::int64_t replicas,
                                   std::uint64_t seed, int workers = 1, SimOptions opt = {}) {
    if (replicas <= 0) throw PreconditionViolation("replicas must be positive");
    std::vector<double> peaks(static_cast<std::size_t>(replicas), 0.0);
    const FlowState zero{IVec::Zero(spec.num_routes())};
    detail::parallel_for(workers, replicas, [&](std::int64_t rep) {
        AllocationCache cache(spec);
        const Trace tr = simulate_ctmc(spec, zero, horizon, seed, opt, &cache,
                                       static_cast<std::uint64_t>(rep));
        peaks[static_cast<std::size_t>(rep)] = max_excursion(tr);
    });
    Vec out(static_cast<Eigen::Index>(b_grid.size()));
    for (std::size_t k = 0; k < b_grid.size(); ++k) {
        std::int64_t hits = 0;
        for (double p : peaks)
            if (p >= b_grid[k]) ++hits;
        out[static_cast<Eigen::Index>(k)] =
            static_cast<double>(hits) / static_cast<double>(replicas);
    }
    return out;
}

}  // namespace afn

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "afn/simulator.hpp"
#include "test_util.hpp"

using namespace afn;
using testutil::ivec;
using testutil::vec;

namespace {

// Geometric stationary law of the single-route chain (M/M/1 with a = nu/(mu C)),
// truncated at `cap`; the birth-death detailed-balance oracle.
StationaryEstimate geometric_law(double a, int cap) {
    StationaryEstimate est;
    est.method = StationaryEstimate::Method::kExactTruncated;
    est.truncation_or_samples = cap;
    est.probabilities.resize(cap + 1);
    double total = 0.0;
    for (int k = 0; k <= cap; ++k) {
        est.support.push_back(ivec({k}));
        est.probabilities[k] = std::pow(a, k);
        total += est.probabilities[k];
    }
    est.probabilities /= total;
    return est;
}

}  // namespace

TEST_CASE("first event from the empty state is an arrival") {
    auto spec = testutil::single_route();
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        auto tr = simulate_ctmc(spec, FlowState{ivec({0})}, 50.0, seed);
        REQUIRE(tr.states.size() > 1);
        REQUIRE(tr.states[1][0] == 1.0);
    }
}

TEST_CASE("traces are deterministic given the seed") {
    auto spec = testutil::two_route_single_link();
    auto a = simulate_ctmc(spec, FlowState{ivec({0, 0})}, 10.0, 42);
    auto b = simulate_ctmc(spec, FlowState{ivec({0, 0})}, 10.0, 42);
    REQUIRE(a.times == b.times);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k)
        REQUIRE(a.states[k] == b.states[k]);
    auto c = simulate_ctmc(spec, FlowState{ivec({0, 0})}, 10.0, 43);
    REQUIRE(a.times != c.times);
}

TEST_CASE("trace is well formed") {
    auto spec = testutil::two_route_single_link();
    auto tr = simulate_ctmc(spec, FlowState{ivec({2, 1})}, 25.0, 7);
    REQUIRE(tr.times.front() == 0.0);
    for (std::size_t k = 1; k < tr.times.size(); ++k) {
        REQUIRE(tr.times[k] > tr.times[k - 1]);
        REQUIRE(tr.times[k] <= tr.horizon);
        const Vec diff = tr.states[k] - tr.states[k - 1];
        REQUIRE(diff.cwiseAbs().sum() == 1.0);  // exactly one +-1 jump
    }
}

TEST_CASE("state cap guard") {
    Mat a(1, 1);
    a << 1;
    auto overloaded =
        NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({5.0}), vec({1.0}));
    SimOptions opt;
    opt.state_cap = 10;
    REQUIRE_THROWS_AS(simulate_ctmc(overloaded, FlowState{ivec({0})}, 1000.0, 1, opt),
                      StateCapExceeded);
}

TEST_CASE("uniformized step probabilities on the single route") {
    auto spec = testutil::single_route();  // Xi = 1.8
    AllocationCache cache(spec);
    RngStream rng(9);
    int ups = 0, selfs = 0;
    const int trials = 200000;
    for (int k = 0; k < trials; ++k) {
        IVec next = uniformized_step(spec, ivec({0}), rng, cache);
        if (next[0] == 1)
            ++ups;
        else
            ++selfs;
    }
    // P(up) = 0.8/1.8; three-sigma band for the frequency.
    const double p = 0.8 / 1.8;
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    REQUIRE(std::abs(double(ups) / trials - p) < 3.0 * sigma);
    REQUIRE(selfs + ups == trials);

    // At n = 5 the chain saturates: Xi(5) = Xi, so no self-loop can occur.
    for (int k = 0; k < 20000; ++k) {
        IVec next = uniformized_step(spec, ivec({5}), rng, cache);
        REQUIRE(next[0] != 5);
    }
}

TEST_CASE("symmetric states give symmetric up probabilities") {
    auto spec = testutil::two_route_single_link();
    AllocationCache cache(spec);
    RngStream rng(10);
    int up1 = 0, up2 = 0;
    const int trials = 400000;
    for (int k = 0; k < trials; ++k) {
        IVec next = uniformized_step(spec, ivec({2, 2}), rng, cache);
        if (next[0] == 3) ++up1;
        if (next[1] == 3) ++up2;
    }
    const double p = 0.4 / 2.8;  // Xi = 0.8 + 2 max C
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    REQUIRE(std::abs(double(up1) / trials - p) < 3.0 * sigma);
    REQUIRE(std::abs(double(up2) / trials - p) < 3.0 * sigma);
}

TEST_CASE("exact stationary of the trivial box") {
    auto spec = testutil::single_route();
    auto est = exact_stationary(spec, 0);
    REQUIRE(est.support.size() == 1);
    REQUIRE(est.probabilities[0] == 1.0);
}

TEST_CASE("exact stationary solves the three-state chain") {
    // cap = 2 birth-death with rates 0.8 up / 1.0 down: pi ~ (1, .8, .64).
    auto spec = testutil::single_route();
    auto est = exact_stationary(spec, 2);
    REQUIRE_THAT(est.probabilities[0], Catch::Matchers::WithinAbs(1.0 / 2.44, 1e-12));
    REQUIRE_THAT(est.probabilities[1], Catch::Matchers::WithinAbs(0.8 / 2.44, 1e-12));
    REQUIRE_THAT(est.probabilities[2], Catch::Matchers::WithinAbs(0.64 / 2.44, 1e-12));
}

TEST_CASE("exact stationary approaches the geometric law") {
    auto spec = testutil::single_route();
    double prev = 1.0;
    for (int cap : {25, 50, 100, 200}) {
        auto est = exact_stationary(spec, cap);
        REQUIRE_THAT(est.probabilities.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
        const double tv = tv_distance(est, geometric_law(0.8, 3000));
        REQUIRE(tv < prev);
        prev = tv;
    }
    REQUIRE(prev <= 1e-6);  // cap = 200
}

TEST_CASE("exact stationary respects route exchange symmetry") {
    auto spec = testutil::two_route_single_link();
    auto est = exact_stationary(spec, 10);
    const std::int64_t side = 11;
    for (std::size_t k = 0; k < est.support.size(); ++k) {
        const auto& n = est.support[k];
        const std::int64_t swapped = n[1] * side + n[0];
        REQUIRE_THAT(est.probabilities[k],
                     Catch::Matchers::WithinAbs(est.probabilities[swapped], 1e-12));
    }
}

TEST_CASE("exact stationary matches the processor-sharing product form") {
    // Proportional fairness on one link is multiclass M/M/1-PS:
    // pi(n1, n2) proportional to C(n1+n2, n1) nu1^n1 nu2^n2.
    Mat a(1, 2);
    a << 1, 1;
    auto spec = NetworkSpec::validate(a, vec({1.0}), vec({1.0, 1.0}), 1.0, vec({0.5, 0.3}),
                                      vec({1.0, 1.0}));
    const int cap = 100;
    auto est = exact_stationary(spec, cap);

    StationaryEstimate oracle;
    oracle.support = est.support;
    oracle.probabilities.resize(est.probabilities.size());
    for (std::size_t k = 0; k < est.support.size(); ++k) {
        const double n1 = static_cast<double>(est.support[k][0]);
        const double n2 = static_cast<double>(est.support[k][1]);
        oracle.probabilities[k] = std::exp(std::lgamma(n1 + n2 + 1.0) - std::lgamma(n1 + 1.0) -
                                           std::lgamma(n2 + 1.0) + n1 * std::log(0.5) +
                                           n2 * std::log(0.3));
    }
    oracle.probabilities /= oracle.probabilities.sum();
    REQUIRE(tv_distance(est, oracle) < 1e-6);
}

TEST_CASE("cap budget guard") {
    auto spec = testutil::two_route_single_link();
    REQUIRE_THROWS_AS(exact_stationary(spec, 3000), CapTooLargeForBudget);
}

TEST_CASE("estimate stationary requires samples and underload") {
    auto spec = testutil::single_route();
    REQUIRE_THROWS_AS(estimate_stationary(spec, 10, 0, 1), EmptySample);
    Mat a(1, 1);
    a << 1;
    auto critical = NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({1.0}), vec({1.0}));
    REQUIRE_THROWS_AS(estimate_stationary(critical, 10, 10, 1), NotUnderloaded);
}

TEST_CASE("estimate stationary approaches the geometric law") {
    auto spec = testutil::single_route();
    auto est = estimate_stationary(spec, 20000, 1000000, 2024);
    REQUIRE(tv_distance(est, geometric_law(0.8, 3000)) <= 0.02);
    auto est2 = estimate_stationary(spec, 20000, 1000000, 777);
    REQUIRE(tv_distance(est, est2) <= 0.05);
}

TEST_CASE("ctmc and uniformized occupancies agree") {
    auto spec = testutil::single_route();
    auto tr = simulate_ctmc(spec, FlowState{ivec({0})}, 200000.0, 5);
    std::map<std::int64_t, double> occupancy;
    for (std::size_t k = 0; k + 1 < tr.times.size(); ++k)
        occupancy[static_cast<std::int64_t>(tr.states[k][0])] += tr.times[k + 1] - tr.times[k];
    occupancy[static_cast<std::int64_t>(tr.states.back()[0])] +=
        tr.horizon - tr.times.back();
    StationaryEstimate timed;
    for (auto& [state, weight] : occupancy) {
        timed.support.push_back(ivec({state}));
    }
    timed.probabilities.resize(static_cast<Eigen::Index>(occupancy.size()));
    Eigen::Index k = 0;
    for (auto& [state, weight] : occupancy) timed.probabilities[k++] = weight / tr.horizon;

    auto counted = estimate_stationary(spec, 20000, 1000000, 6);
    REQUIRE(tv_distance(timed, counted) <= 0.02);
}

TEST_CASE("arrival rate conservation") {
    auto spec = testutil::two_route_single_link();
    auto tr = simulate_ctmc(spec, FlowState{ivec({0, 0})}, 5000.0, 11);
    Eigen::Vector2d arrivals = Eigen::Vector2d::Zero();
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
        const Vec diff = tr.states[k] - tr.states[k - 1];
        for (Eigen::Index i = 0; i < 2; ++i)
            if (diff[i] == 1.0) arrivals[i] += 1.0;
    }
    for (Eigen::Index i = 0; i < 2; ++i) {
        const double rate = arrivals[i] / tr.horizon;
        const double se = std::sqrt(spec.nu()[i] / tr.horizon);
        REQUIRE(std::abs(rate - spec.nu()[i]) <= 3.0 * se);
    }
}

TEST_CASE("max excursion") {
    Trace empty;
    empty.times = {0.0};
    empty.states = {vec({0.0})};
    empty.horizon = 1.0;
    REQUIRE(max_excursion(empty) == 0.0);

    Trace path;
    path.times = {0.0, 0.5, 1.0, 1.5};
    path.states = {vec({0.0}), vec({1.0}), vec({2.0}), vec({1.0})};
    path.horizon = 2.0;
    REQUIRE(max_excursion(path) == 2.0);

    Trace vecs;
    vecs.times = {0.0, 0.4, 0.9};
    vecs.states = {vec({1.0, 3.0}), vec({1.0, 4.0}), vec({0.0, 4.0})};
    vecs.horizon = 1.0;
    REQUIRE(max_excursion(vecs) == 4.0);
}

TEST_CASE("excursion probabilities are worker-invariant") {
    auto spec = testutil::single_route();
    const std::vector<double> grid{3.0, 6.0, 9.0};
    Vec p1 = excursion_probabilities(spec, 50.0, grid, 400, 99, 1);
    Vec p8 = excursion_probabilities(spec, 50.0, grid, 400, 99, 8);
    REQUIRE(p1 == p8);
    REQUIRE(p1[0] >= p1[1]);
    REQUIRE(p1[1] >= p1[2]);
}

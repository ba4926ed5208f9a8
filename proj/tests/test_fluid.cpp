#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "afn/fluid.hpp"
#include "test_util.hpp"

using namespace afn;
using testutil::vec;

namespace {

NetworkSpec critical_two_route(double alpha = 1.0) {
    Mat a(1, 2);
    a << 1, 1;
    return NetworkSpec::validate(a, vec({1.0}), vec({1.0, 1.0}), alpha, vec({0.5, 0.5}),
                                 vec({1.0, 1.0}));
}

// The lifting map is defined at any load; this instance exercises it away
// from criticality.
NetworkSpec underloaded_two_route(double alpha = 1.0) {
    Mat a(1, 2);
    a << 1, 1;
    return NetworkSpec::validate(a, vec({1.0}), vec({1.0, 1.0}), alpha, vec({0.4, 0.4}),
                                 vec({1.0, 1.0}));
}

// Exhaustive lattice minimization of F over the lift feasible set; the
// independent oracle for the lifting map.
Vec grid_lift(const NetworkSpec& spec, double w, int grid, double reach) {
    Vec best(2);
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i)
        for (int j = 0; j <= grid; ++j) {
            Vec n(2);
            n << reach * i / grid, reach * j / grid;
            if (n[0] / spec.mu()[0] + n[1] / spec.mu()[1] < w) continue;
            const double val = F_alpha(spec, n);
            if (val < best_val) {
                best_val = val;
                best = n;
            }
        }
    return best;
}

}  // namespace

TEST_CASE("workload map") {
    Mat a(1, 1);
    a << 1;
    auto spec = NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({0.8}), vec({2.0}));
    REQUIRE(workload(spec, vec({4.0})).w[0] == 2.0);
    REQUIRE(workload(spec, vec({0.0})).w[0] == 0.0);

    auto two = testutil::two_link();
    const Vec n1 = vec({1.0, 2.0}), n2 = vec({0.5, 3.0});
    const Vec sum = workload(two, (n1 + n2).eval()).w;
    REQUIRE((sum - workload(two, n1).w - workload(two, n2).w).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("lift closed forms") {
    {
        Mat a(1, 1);
        a << 1;
        auto spec =
            NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({0.8}), vec({1.0}));
        REQUIRE(lift(spec, vec({0.0})).n[0] == 0.0);
        REQUIRE_THAT(lift(spec, vec({3.7})).n[0], Catch::Matchers::WithinAbs(3.7, 1e-9));
    }
    {
        auto spec = underloaded_two_route();
        auto lifted = lift(spec, vec({1.0}));
        REQUIRE_THAT(lifted.n[0], Catch::Matchers::WithinAbs(0.5, 1e-9));
        REQUIRE_THAT(lifted.n[1], Catch::Matchers::WithinAbs(0.5, 1e-9));
        REQUIRE(lifted.kkt_residual <= 1e-9);
    }
}

TEST_CASE("lift agrees with a lattice search") {
    for (double alpha : {0.5, 1.0, 2.0}) {
        auto spec = underloaded_two_route(alpha);
        auto lifted = lift(spec, vec({1.4}));
        const Vec best = grid_lift(spec, 1.4, 600, 2.0);
        REQUIRE((lifted.n - best).cwiseAbs().maxCoeff() < 2.0 * 2.0 / 600);
    }
}

TEST_CASE("lift is positively homogeneous") {
    auto spec = testutil::two_link();
    const Vec w = vec({0.8, 1.7});
    const Vec base = lift(spec, w).n;
    for (double c : {0.5, 2.0, 7.0}) {
        const Vec scaled = lift(spec, (c * w).eval()).n;
        REQUIRE((scaled - c * base).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("manifold distance") {
    {
        Mat a(1, 1);
        a << 1;
        auto spec =
            NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({0.8}), vec({1.0}));
        for (double x : {0.0, 1.0, 4.2}) REQUIRE(manifold_distance(spec, vec({x})) <= 1e-8);
    }
    {
        auto spec = critical_two_route();
        REQUIRE_THAT(manifold_distance(spec, vec({1.0, 0.0})),
                     Catch::Matchers::WithinAbs(0.5, 1e-8));
        // Idempotence: any lifted point is on the manifold.
        const Vec lifted = lift(spec, vec({2.3})).n;
        REQUIRE(manifold_distance(spec, lifted) <= 1e-8);
    }
}

TEST_CASE("dual manifold membership at criticality") {
    auto spec = critical_two_route();
    REQUIRE(manifold_membership_dual(spec, vec({0.0, 0.0}), 1e-9));
    REQUIRE(manifold_membership_dual(spec, vec({1.0, 1.0}), 1e-9));
    REQUIRE_FALSE(manifold_membership_dual(spec, vec({1.0, 0.0}), 1e-6));

    REQUIRE_THROWS_AS(manifold_membership_dual(critical_two_route(2.0), vec({1.0, 1.0}), 1e-9),
                      PreconditionViolation);
    REQUIRE_THROWS_AS(manifold_membership_dual(underloaded_two_route(), vec({1.0, 1.0}), 1e-9),
                      PreconditionViolation);
}

TEST_CASE("fluid trajectory at criticality is constant") {
    Mat a(1, 1);
    a << 1;
    auto spec = NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({1.0}), vec({1.0}));
    auto traj = fms_integrate(spec, vec({2.0}), 1.0, 1e-3);
    for (const auto& s : traj.states) REQUIRE_THAT(s[0], Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("underloaded single route decays linearly") {
    auto spec = testutil::single_route();
    const double dt = 1e-3;
    auto traj = fms_integrate(spec, vec({1.0}), 6.0, dt);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double expected = std::max(0.0, 1.0 - 0.2 * traj.times[k]);
        REQUIRE_THAT(traj.states[k][0], Catch::Matchers::WithinAbs(expected, 0.2 * dt + 1e-12));
    }
    REQUIRE(traj.states.back()[0] == 0.0);
    REQUIRE_FALSE(traj.step_warning);
}

TEST_CASE("lyapunov value is non-increasing along fluid paths") {
    auto spec = critical_two_route();
    for (auto n0 : {vec({1.0, 0.0}), vec({3.0, 1.0}), vec({0.2, 4.0})}) {
        auto traj = fms_integrate(spec, n0, 8.0);
        const double dt = traj.times[1] - traj.times[0];
        for (std::size_t k = 1; k < traj.lyapunov_values.size(); ++k)
            REQUIRE(traj.lyapunov_values[k] <= traj.lyapunov_values[k - 1] + 1e-8 * dt);
    }
}

TEST_CASE("fluid paths are attracted to the invariant manifold") {
    auto spec = critical_two_route();
    for (auto n0 : {vec({5.0, 0.0}), vec({2.0, 5.0})}) {
        auto traj = fms_integrate(spec, n0, 60.0, 5e-3);
        double hit_time = -1.0;
        for (std::size_t k = 0; k < traj.states.size(); k += 50) {
            if (manifold_distance(spec, traj.states[k]) < 0.01) {
                hit_time = traj.times[k];
                break;
            }
        }
        REQUIRE(hit_time >= 0.0);
        // Once close, the path stays close: strict decrease off the manifold.
        REQUIRE(manifold_distance(spec, traj.states.back()) < 0.01);
    }
}

TEST_CASE("invariant points are fluid fixed points") {
    auto spec = critical_two_route();
    const Vec start = lift(spec, vec({2.0})).n;
    auto traj = fms_integrate(spec, start, 10.0, 1e-2);
    for (const auto& s : traj.states)
        REQUIRE((s - start).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("capacity feasibility along critical fluid paths") {
    // Interior starts: the capacity-sharing condition concerns regular points
    // of a fluid model solution, and frozen boundary faces are not regular.
    auto spec = critical_two_route();
    const Vec rho = spec.nu().cwiseQuotient(spec.mu());
    auto traj = fms_integrate(spec, vec({2.0, 0.5}), 5.0, 5e-3);
    for (std::size_t k = 0; k < traj.states.size(); k += 25) {
        auto alloc = allocate(spec, traj.states[k]);
        Vec used = Vec::Zero(spec.num_resources());
        for (Eigen::Index i = 0; i < spec.num_routes(); ++i) {
            const bool active = traj.states[k][i] > 0.0;
            used += spec.incidence().col(i) * (active ? alloc.rates[i] : rho[i]);
        }
        for (Eigen::Index j = 0; j < spec.num_resources(); ++j)
            REQUIRE(used[j] <= spec.capacity()[j] + 1e-6);
    }
}

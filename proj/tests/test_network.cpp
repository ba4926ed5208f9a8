#include <catch2/catch_amalgamated.hpp>

#include "afn/allocator.hpp"
#include "afn/network.hpp"
#include "test_util.hpp"

using namespace afn;
using testutil::vec;

TEST_CASE("load profile on the single-route network") {
    auto spec = testutil::single_route();
    auto lp = load_profile(spec);
    REQUIRE(lp.rho[0] == 0.8);
    REQUIRE(lp.link_load[0] == 0.8);
    REQUIRE_THAT(lp.gap, Catch::Matchers::WithinAbs(0.25, 1e-15));
}

TEST_CASE("load profile on the two-link network") {
    auto spec = testutil::two_link();
    auto lp = load_profile(spec);
    REQUIRE(lp.link_load[0] == 0.5);
    REQUIRE(lp.link_load[1] == 0.75);
    REQUIRE_THAT(lp.gap, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("critical load is rejected") {
    Mat a(1, 1);
    a << 1;
    auto spec = NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({1.0}), vec({1.0}));
    REQUIRE_THROWS_AS(load_profile(spec), NotUnderloaded);
}

TEST_CASE("gap maximality") {
    for (std::uint64_t s : {1u, 2u, 3u, 4u, 5u}) {
        auto spec = testutil::random3(s, 1.0);
        auto lp = load_profile(spec);
        const Vec scaled = (1.0 + lp.gap) * lp.link_load;
        const Vec pushed = (1.0 + lp.gap + 1e-9) * lp.link_load;
        bool within = true, exceeded = false;
        for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
            within = within && scaled[j] <= spec.capacity()[j] + 1e-12;
            exceeded = exceeded || pushed[j] > spec.capacity()[j];
        }
        REQUIRE(within);
        REQUIRE(exceeded);
    }
}

TEST_CASE("load profile is homogeneous in (nu, mu)") {
    auto base = testutil::two_link();
    for (double c : {3.0, 0.25, 17.0}) {
        auto scaled = NetworkSpec::validate(base.incidence(), base.capacity(), base.kappa(),
                                            base.alpha(), c * base.nu(), c * base.mu());
        auto lp0 = load_profile(base);
        auto lp1 = load_profile(scaled);
        REQUIRE((lp0.rho - lp1.rho).cwiseAbs().maxCoeff() < 1e-14);
        REQUIRE(std::abs(lp0.gap - lp1.gap) < 1e-14);
    }
}

TEST_CASE("uniformization rate") {
    Mat a(2, 2);
    a << 1, 0,
         0, 1;
    auto spec = NetworkSpec::validate(a, vec({1.0, 2.0}), vec({1.0, 1.0}), 1.0, vec({1.0, 1.0}),
                                      vec({2.0, 2.0}));
    REQUIRE(uniformization_rate(spec) == 10.0);
    REQUIRE_THAT(uniformization_rate(testutil::single_route()),
                 Catch::Matchers::WithinAbs(1.8, 1e-15));
}

TEST_CASE("uniformization rate dominates every state's total rate") {
    for (std::uint64_t s : {7u, 8u}) {
        auto spec = testutil::random3(s, 1.0);
        const double xi = uniformization_rate(spec);
        RngStream rng(s);
        for (int rep = 0; rep < 20; ++rep) {
            Vec n(spec.num_routes());
            for (Eigen::Index i = 0; i < n.size(); ++i)
                n[i] = static_cast<double>(rng.below(7));
            auto alloc = allocate(spec, n);
            const double total =
                spec.nu().sum() + spec.mu().cwiseProduct(alloc.rates).sum();
            REQUIRE(total <= xi + 1e-9);
        }
    }
}

TEST_CASE("local traffic predicate") {
    REQUIRE(local_traffic_holds(testutil::linear3()));
    REQUIRE(local_traffic_holds(testutil::single_route()));
    REQUIRE(local_traffic_holds(testutil::two_route_single_link()));
    REQUIRE_FALSE(local_traffic_holds(testutil::two_link()));
}

TEST_CASE("validation rejects malformed specs") {
    Mat a(1, 1);
    a << 1;
    REQUIRE_THROWS_AS(
        NetworkSpec::validate(a, vec({1.0}), vec({1.0}), 1.0, vec({0.0}), vec({1.0})),
        InvalidSpec);
    REQUIRE_THROWS_AS(
        NetworkSpec::validate(a, vec({1.0}), vec({1.0}), -1.0, vec({0.5}), vec({1.0})),
        InvalidSpec);

    Mat empty_col(2, 2);
    empty_col << 1, 0,
                 1, 0;
    REQUIRE_THROWS_AS(NetworkSpec::validate(empty_col, vec({1.0, 1.0}), vec({1.0, 1.0}), 1.0,
                                            vec({0.5, 0.5}), vec({1.0, 1.0})),
                      InvalidSpec);

    Mat rank_deficient(2, 2);
    rank_deficient << 1, 1,
                      1, 1;
    REQUIRE_THROWS_AS(NetworkSpec::validate(rank_deficient, vec({1.0, 1.0}), vec({1.0, 1.0}),
                                            1.0, vec({0.2, 0.2}), vec({1.0, 1.0})),
                      InvalidSpec);

    Mat bad_entry(1, 1);
    bad_entry << 2;
    REQUIRE_THROWS_AS(NetworkSpec::validate(bad_entry, vec({1.0}), vec({1.0}), 1.0, vec({0.5}),
                                            vec({1.0})),
                      InvalidSpec);
}

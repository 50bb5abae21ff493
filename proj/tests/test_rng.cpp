#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "rsm/rng.hpp"

using rsm::Rng;

TEST_CASE("identical seeds reproduce the stream") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("stream derivation separates paths") {
    Rng a = Rng::stream(7, {1, 0});
    Rng b = Rng::stream(7, {1, 1});
    Rng c = Rng::stream(7, {2, 0});
    const auto x = a.next_u64();
    REQUIRE(x != b.next_u64());
    REQUIRE(x != c.next_u64());
}

TEST_CASE("uniform stays in [0,1) and normal is finite") {
    Rng rng(3);
    double mean = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double n = rng.normal();
        REQUIRE(std::isfinite(n));
        mean += n;
    }
    mean /= 10000.0;
    REQUIRE(std::abs(mean) < 0.05);
}

TEST_CASE("sample_without_replacement yields distinct in-range indices") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto picks = rng.sample_without_replacement(10, 7);
        REQUIRE(picks.size() == 7);
        std::set<int> seen(picks.begin(), picks.end());
        REQUIRE(seen.size() == 7);
        for (int p : picks) {
            REQUIRE(p >= 0);
            REQUIRE(p < 10);
        }
    }
}

TEST_CASE("below is within bounds and hits every value") {
    Rng rng(5);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(rng.below(6));
    REQUIRE(seen.size() == 6);
    REQUIRE(*seen.rbegin() == 5);
}

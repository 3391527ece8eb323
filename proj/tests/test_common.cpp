#include <doctest.h>

#include "skillgraft/common.hpp"

#include <set>

using namespace sg;

TEST_SUITE_BEGIN("common");

TEST_CASE("mix64 separates seeds, tags and subs") {
    CHECK(mix64(1) != mix64(2));
    CHECK(mix64(7, kStreamInit) != mix64(7, kStreamHead));
    CHECK(mix64(7, kStreamShuffle, 0) != mix64(7, kStreamShuffle, 1));
    CHECK(mix64(7, kStreamShuffle, 3) == mix64(7, kStreamShuffle, 3));
}

TEST_CASE("uniform stays in [0,1) with a sane mean") {
    Rng rng(123);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / 20000.0 - 0.5) < 0.01);
}

TEST_CASE("normal has unit moments and caches the spare deterministically") {
    Rng a(9), b(9);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double x = a.normal();
        CHECK(x == b.normal());
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / 20000.0) < 0.03);
    CHECK(std::abs(sq / 20000.0 - 1.0) < 0.05);
}

TEST_CASE("uniform_int is bounded and hits every residue") {
    Rng rng(5);
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        uint64_t v = rng.uniform_int(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(rng.uniform_int(1) == 0);
    CHECK_THROWS_AS(rng.uniform_int(0), Error);
}

TEST_CASE("permutation is a permutation") {
    Rng rng(11);
    auto p = rng.permutation(50);
    std::set<size_t> seen(p.begin(), p.end());
    CHECK(p.size() == 50);
    CHECK(seen.size() == 50);
    CHECK(*seen.rbegin() == 49);
    CHECK(rng.permutation(0).empty());
}

TEST_CASE("sample_without_replacement is sorted, distinct and in range") {
    Rng rng(17);
    auto s = rng.sample_without_replacement(100, 20);
    REQUIRE(s.size() == 20);
    for (size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i] < 100);
        if (i) CHECK(s[i] > s[i - 1]);
    }
    auto all = rng.sample_without_replacement(8, 8);
    CHECK(all == std::vector<uint64_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(rng.sample_without_replacement(5, 0).empty());
    CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), Error);
}

TEST_CASE("derived streams do not collide") {
    Rng a = derive_rng(42, kStreamInit);
    Rng b = derive_rng(42, kStreamHead);
    CHECK(a.uniform() != b.uniform());
}

TEST_CASE("error kinds survive the throw") {
    try {
        fail_data("boom");
        FAIL("unreachable");
    } catch (const Error& e) {
        CHECK(e.kind == Error::Kind::data);
        CHECK(std::string(e.what()) == "boom");
    }
}

TEST_SUITE_END();

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "n3l/errors.hpp"
#include "n3l/greedy.hpp"
#include "n3l/top_pool.hpp"
#include "test_support.hpp"

using namespace n3l;

namespace {

// Valid n=6 configs with exactly k points and pairwise distinct canonical forms.
std::vector<GridConfig> distinct_configs(int k, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GridConfig> out;
    std::set<std::vector<int>> forms;
    while (out.size() < count) {
        GridConfig c = testing::random_valid_config(6, rng);
        if (static_cast<int>(c.size()) < k) continue;
        while (static_cast<int>(c.size()) > k) c.pop_back();
        if (forms.insert(canonical_form(c).tokens).second) out.push_back(c);
    }
    return out;
}

std::string dump(const TopPool& pool) {
    std::ostringstream out;
    write_jsonl(out, pool.records());
    return out.str();
}

}  // namespace

TEST_CASE("insert keeps the top scores") {
    TopPool pool(2);
    CHECK(pool.insert(distinct_configs(3, 1, 1)[0]) == InsertResult::accepted);
    CHECK(pool.insert(distinct_configs(5, 1, 2)[0]) == InsertResult::accepted);
    CHECK(pool.insert(distinct_configs(4, 1, 3)[0]) == InsertResult::accepted);
    const auto snap = pool.snapshot();
    REQUIRE(snap.size() == 2);
    CHECK(snap[0].score == 5);
    CHECK(snap[1].score == 4);
    CHECK(pool.check_invariants());
}

TEST_CASE("symmetric duplicates are rejected") {
    TopPool pool(10);
    const GridConfig c = distinct_configs(4, 1, 5)[0];
    CHECK(pool.insert(c) == InsertResult::accepted);
    CHECK(pool.insert(apply_symmetry(c, Symmetry{2, false})) == InsertResult::rejected_duplicate);
    CHECK(pool.size() == 1);
}

TEST_CASE("equal score does not evict when full") {
    TopPool pool(2);
    const auto five = distinct_configs(5, 3, 7);
    CHECK(pool.insert(five[0]) == InsertResult::accepted);
    CHECK(pool.insert(five[1]) == InsertResult::accepted);
    CHECK(pool.insert(five[2]) == InsertResult::rejected_low_score);
    CHECK_THROWS_AS(pool.insert(GridConfig(6, {{0, 0}, {1, 1}, {2, 2}})), ContractViolation);
}

TEST_CASE("eviction removes the oldest minimum and frees its form") {
    TopPool pool(2);
    const auto fours = distinct_configs(4, 2, 9);
    const auto six = distinct_configs(6, 1, 10)[0];
    pool.insert(fours[0]);
    pool.insert(fours[1]);
    CHECK(pool.insert(six) == InsertResult::accepted);
    const auto snap = pool.snapshot();
    CHECK(snap[1].tokens == canonical_form(fours[1]));
    CHECK(pool.insert(fours[1]) == InsertResult::rejected_duplicate);
    // fours[0] was evicted, so its form may come back once it outranks the minimum
    CHECK(pool.insert(fours[0]) == InsertResult::rejected_low_score);
    CHECK(pool.check_invariants());
}

TEST_CASE("snapshot") {
    TopPool pool(5);
    CHECK(pool.snapshot().empty());
    pool.insert(distinct_configs(4, 1, 11)[0]);
    pool.insert(distinct_configs(5, 1, 12)[0]);
    const auto snap = pool.snapshot();
    CHECK(snap[0].score == 5);
    CHECK(snap[1].score == 4);
    CHECK(pool.snapshot() == snap);
}

TEST_CASE("steady state is the top-K regardless of insertion order") {
    std::vector<GridConfig> items;
    for (int k = 1; k <= 9; ++k) items.push_back(distinct_configs(k, 1, 100 + static_cast<std::uint64_t>(k))[0]);
    std::mt19937_64 rng(1);
    std::vector<std::vector<int>> expected;
    for (int trial = 0; trial < 30; ++trial) {
        std::shuffle(items.begin(), items.end(), rng);
        TopPool pool(4);
        for (const auto& c : items) {
            pool.insert(c);
            CHECK(pool.check_invariants());
            CHECK(pool.size() <= 4);
        }
        std::vector<std::vector<int>> held;
        for (const auto& e : pool.snapshot()) held.push_back(e.tokens.tokens);
        CHECK(pool.min_score() == 6);
        CHECK(pool.max_score() == 9);
        if (trial == 0) expected = held;
        CHECK(held == expected);
    }
}

TEST_CASE("save/load round trip and load errors") {
    TopPool pool(50);
    for (const auto& c : generate_pool(6, 80, 3)) pool.insert(c);
    const std::string text = dump(pool);
    std::istringstream in(text);
    const TopPool back = load_pool(in, 50);
    CHECK(dump(back) == text);
    CHECK(back.snapshot() == pool.snapshot());

    std::istringstream three(
        "{\"n\":5,\"score\":2,\"tokens\":[0,1]}\n"
        "{\"n\":5,\"score\":2,\"tokens\":[0,5]}\n"
        "{\"n\":5,\"score\":2,\"tokens\":[1,6]}\n");
    CHECK(load_pool(three, 20000).size() <= 3);

    std::istringstream dup("{\"n\":5,\"score\":1,\"tokens\":[0]}\n{\"n\":5,\"score\":1,\"tokens\":[24]}\n");
    CHECK(load_pool(dup, 10).size() == 1);

    std::istringstream invalid("{\"n\":5,\"score\":1,\"tokens\":[0]}\n{\"n\":5,\"score\":3,\"tokens\":[0,1,2]}\n");
    try {
        load_pool(invalid, 10, "pool.jsonl");
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream malformed("{\"n\":5,\"score\":1,\"tokens\":[0]}\n\n{\"n\":5,\n");
    try {
        load_pool(malformed, 10);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.line() == 3);
    }
}

#include <doctest.h>

#include <sstream>

#include "n3l/errors.hpp"
#include "n3l/exact.hpp"
#include "n3l/greedy.hpp"
#include "test_support.hpp"

using namespace n3l;

TEST_CASE("brute force oracle") {
    CHECK(brute_force_max(1).optimum == 1);
    CHECK(brute_force_max(2).optimum == 4);
    CHECK(brute_force_max(3).optimum == 6);
    CHECK(brute_force_max(4).optimum == 8);
    CHECK_THROWS_AS(brute_force_max(5), ContractViolation);
    CHECK_THROWS_AS(brute_force_max(0), ContractViolation);
}

TEST_CASE("solve_exact matches the brute-force oracle for n <= 4") {
    for (int n = 1; n <= 4; ++n) {
        for (bool sym : {true, false}) {
            SolveOptions opts;
            opts.symmetry_breaking = sym;
            opts.greedy_seeds = 0;
            const SolveReport r = solve_exact(n, opts);
            CHECK(r.proved_optimal);
            CHECK(r.optimum == brute_force_max(n).optimum);
            CHECK(is_valid(r.certificate));
        }
    }
}

TEST_CASE("solve_exact known optima") {
    CHECK(solve_exact(2).optimum == 4);
    for (int n = 2; n <= 9; ++n) {
        const SolveReport r = solve_exact(n);
        CHECK(r.proved_optimal);
        CHECK(r.optimum == 2 * n);
        CHECK(static_cast<int>(r.certificate.size()) == r.optimum);
        CHECK(is_valid(r.certificate));
        CHECK(verify_certificate(r.certificate, LineTable(n)));
    }
    CHECK_THROWS_AS(solve_exact(0), ContractViolation);
}

TEST_CASE("symmetry breaking keeps the optimum; search is deterministic") {
    for (int n = 3; n <= 7; ++n) {
        SolveOptions on;
        on.greedy_seeds = 0;
        SolveOptions off = on;
        off.symmetry_breaking = false;
        const SolveReport a = solve_exact(n, on);
        const SolveReport b = solve_exact(n, off);
        CHECK(a.optimum == b.optimum);
        const SolveReport again = solve_exact(n, on);
        CHECK(again.nodes == a.nodes);
        CHECK(again.certificate.points() == a.certificate.points());
    }
}

TEST_CASE("budget exhaustion degrades to the best found") {
    SolveOptions opts;
    opts.greedy_seeds = 0;
    opts.node_limit = 5;
    const SolveReport r = solve_exact(8, opts);
    CHECK_FALSE(r.proved_optimal);
    CHECK(is_valid(r.certificate));
    CHECK(r.optimum == static_cast<int>(r.certificate.size()));
}

TEST_CASE("upper bound") {
    const LineTable t5(5);
    SearchState s(t5);
    CHECK(upper_bound(s) == 10);
    s.include(0);
    s.include(1);
    s.set_cursor(5);
    CHECK(upper_bound(s) <= 10);
    CHECK(s.row_count(0) == 2);

    const GridConfig sat = greedy_saturate(GridConfig(5), t5, 3);
    SearchState full(t5);
    for (int cell : sat.sorted_tokens()) full.include(cell);
    full.set_cursor(0);
    CHECK(upper_bound(full) == static_cast<int>(sat.size()));

    // Bound never exceeds 2n and never undercuts a completion.
    const GridConfig opt = testing::known_optimum_5();
    SearchState partial(t5);
    for (int cell : opt.sorted_tokens()) {
        if (cell >= 12) break;
        partial.include(cell);
    }
    partial.set_cursor(12);
    CHECK(upper_bound(partial) >= 10);
    CHECK(upper_bound(partial) <= 10);
}

TEST_CASE("verify_certificate") {
    const LineTable t5(5);
    CHECK(verify_certificate(testing::known_optimum_5(), t5));
    CHECK(verify_certificate(solve_exact(5).certificate, t5));
    CHECK_FALSE(verify_certificate(GridConfig(5, {{0, 0}, {0, 1}, {0, 2}}), t5));
    CHECK(verify_certificate(GridConfig(5), t5));
    CHECK_THROWS_AS(verify_certificate(GridConfig(4), t5), ContractViolation);

    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const GridConfig c = testing::random_config(6, 10, rng);
        CHECK(verify_certificate(c, LineTable(6)) == is_valid(c));
    }
}

TEST_CASE("report serialization") {
    std::ostringstream out;
    write_report(out, solve_exact(3));
    const std::string text = out.str();
    CHECK(text.rfind("optimum=6\nproved_optimal=true\nnodes=", 0) == 0);
    CHECK(text.find("wall_time_s=") != std::string::npos);
    CHECK(text.find("n=3\n") != std::string::npos);
}

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "n3l/errors.hpp"
#include "n3l/lines.hpp"

using namespace n3l;

namespace {

// Maximal collinear cell sets of size >= 3, found with the grid-core predicate only.
std::set<std::vector<int>> brute_force_lines(int n) {
    std::set<std::vector<int>> lines;
    const int cells = n * n;
    for (int i = 0; i < cells; ++i) {
        for (int j = i + 1; j < cells; ++j) {
            std::vector<int> members{i, j};
            for (int k = 0; k < cells; ++k)
                if (k != i && k != j && collinear(from_token(i, n), from_token(j, n), from_token(k, n))) members.push_back(k);
            if (members.size() < 3) continue;
            std::sort(members.begin(), members.end());
            lines.insert(members);
        }
    }
    return lines;
}

}  // namespace

TEST_CASE("line_through examples") {
    const LineKey diag = line_through({0, 0}, {1, 1});
    CHECK(diag.c == 0);
    CHECK(diag.a == -diag.b);
    CHECK(diag.a > 0);
    CHECK(line_through({0, 0}, {0, 3}) == LineKey{1, 0, 0});
    CHECK(line_through({0, 0}, {2, 4}) == line_through({1, 2}, {2, 4}));
    CHECK(line_through({2, 4}, {0, 0}) == line_through({0, 0}, {2, 4}));
    CHECK_THROWS_AS(line_through({1, 1}, {1, 1}), ContractViolation);
}

TEST_CASE("line keys are normalized") {
    for (int i = 0; i < 49; ++i) {
        for (int j = i + 1; j < 49; ++j) {
            const LineKey k = line_through(from_token(i, 7), from_token(j, 7));
            CHECK(std::gcd(std::gcd(k.a, k.b), k.c) == 1);
            CHECK((k.a > 0 || (k.a == 0 && k.b > 0)));
        }
    }
}

TEST_CASE("line table sizes for small grids") {
    CHECK(LineTable(1).size() == 0);
    CHECK(LineTable(2).size() == 0);
    CHECK(LineTable(3).size() == 8);
    CHECK(LineTable(4).size() == 14);
}

TEST_CASE("line table matches brute-force enumeration for n = 2..12") {
    std::size_t previous = 0;
    for (int n = 2; n <= 12; ++n) {
        const LineTable table(n);
        std::set<std::vector<int>> from_table;
        std::set<LineKey> keys;
        for (std::size_t i = 0; i < table.size(); ++i) {
            const auto cells = table.line_cells(i);
            from_table.insert({cells.begin(), cells.end()});
            keys.insert(table[i].key);
            CHECK(std::is_sorted(table[i].cells.begin(), table[i].cells.end()));
            for (Point p : table[i].cells) CHECK(table[i].key.a * p.row + table[i].key.b * p.col + table[i].key.c == 0);
        }
        CHECK(keys.size() == table.size());
        CHECK(from_table.size() == table.size());
        if (n <= 9) CHECK(from_table == brute_force_lines(n));
        CHECK(table.size() >= previous);
        previous = table.size();
    }
}

TEST_CASE("lines_hit and cell_to_lines consistency") {
    const LineTable t3(3);
    CHECK(t3.lines_hit(Point{1, 1}).size() == 4);
    CHECK(t3.lines_hit(Point{0, 0}).size() == 3);
    const LineTable t2(2);
    for (int c = 0; c < 4; ++c) CHECK(t2.lines_hit(c).empty());

    for (int n : {5, 8}) {
        const LineTable t(n);
        for (int cell = 0; cell < n * n; ++cell) {
            std::set<int> hit(t.lines_hit(cell).begin(), t.lines_hit(cell).end());
            for (std::size_t i = 0; i < t.size(); ++i) {
                const auto cells = t.line_cells(i);
                const bool member = std::find(cells.begin(), cells.end(), cell) != cells.end();
                CHECK(member == (hit.count(static_cast<int>(i)) == 1));
            }
        }
    }
}

TEST_CASE("dump format") {
    std::ostringstream out;
    dump_lines(out, LineTable(3));
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 8);
    CHECK(text.find("1 0 0 : (0,0) (0,1) (0,2)") != std::string::npos);
}

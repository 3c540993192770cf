#include "n3l/lines.hpp"

#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "n3l/errors.hpp"

namespace n3l {

LineKey line_through(Point p1, Point p2) {
    if (p1 == p2) throw ContractViolation("line_through() needs two distinct points");
    long long a = p1.col - p2.col;
    long long b = p2.row - p1.row;
    long long c = static_cast<long long>(p1.row) * p2.col - static_cast<long long>(p2.row) * p1.col;
    const long long g = std::gcd(std::gcd(a, b), c);
    a /= g;
    b /= g;
    c /= g;
    if (a < 0 || (a == 0 && b < 0)) {
        a = -a;
        b = -b;
        c = -c;
    }
    return {a, b, c};
}

LineTable::LineTable(int n) : n_(n) {
    if (n < 1) throw ContractViolation("line table needs n >= 1");
    const int cells = n * n;
    std::map<LineKey, std::set<Point>> dictionary;
    for (int i = 0; i < cells; ++i) {
        for (int j = i + 1; j < cells; ++j) {
            const Point p = from_token(i, n);
            const Point q = from_token(j, n);
            auto& members = dictionary[line_through(p, q)];
            members.insert(p);
            members.insert(q);
        }
    }

    cell_to_lines_.assign(static_cast<std::size_t>(cells), {});
    for (auto& [key, members] : dictionary) {
        if (members.size() < 3) continue;
        const int index = static_cast<int>(lines_.size());
        LineConstraint line{key, {members.begin(), members.end()}};
        std::vector<int> tokens;
        tokens.reserve(line.cells.size());
        for (Point p : line.cells) {
            tokens.push_back(to_token(p, n));
            cell_to_lines_[static_cast<std::size_t>(tokens.back())].push_back(index);
        }
        lines_.push_back(std::move(line));
        line_tokens_.push_back(std::move(tokens));
    }
}

void dump_lines(std::ostream& out, const LineTable& table) {
    for (const auto& line : table.lines()) {
        out << line.key.a << ' ' << line.key.b << ' ' << line.key.c << " :";
        for (Point p : line.cells) out << " (" << p.row << ',' << p.col << ')';
        out << '\n';
    }
}

}  // namespace n3l

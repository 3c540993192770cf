#pragma once

#include <compare>
#include <iosfwd>
#include <span>
#include <vector>

#include "n3l/grid.hpp"

namespace n3l {

// a*row + b*col + c = 0, with gcd(|a|,|b|,|c|) = 1 and a > 0, or a = 0 and b > 0.
struct LineKey {
    long long a = 0;
    long long b = 0;
    long long c = 0;

    friend auto operator<=>(const LineKey&, const LineKey&) = default;
};

struct LineConstraint {
    LineKey key;
    std::vector<Point> cells;  // sorted, size >= 3
};

LineKey line_through(Point p1, Point p2);

// Every maximal grid line holding at least three cells, plus a dense
// cell -> incident-lines index. Immutable once built.
class LineTable {
public:
    LineTable() = default;
    explicit LineTable(int n);

    int n() const { return n_; }
    const std::vector<LineConstraint>& lines() const { return lines_; }
    std::size_t size() const { return lines_.size(); }
    const LineConstraint& operator[](std::size_t i) const { return lines_[i]; }

    // Cells of line i as tokens (row * n + col), same order as lines()[i].cells.
    std::span<const int> line_cells(std::size_t i) const { return line_tokens_[i]; }
    std::span<const int> lines_hit(int cell) const { return cell_to_lines_[static_cast<std::size_t>(cell)]; }
    std::span<const int> lines_hit(Point p) const { return lines_hit(to_token(p, n_)); }

private:
    int n_ = 0;
    std::vector<LineConstraint> lines_;
    std::vector<std::vector<int>> line_tokens_;
    std::vector<std::vector<int>> cell_to_lines_;
};

inline LineTable build_line_table(int n) { return LineTable(n); }

// One line per constraint: "a b c : (r,c) (r,c) ..."
void dump_lines(std::ostream& out, const LineTable& table);

}  // namespace n3l

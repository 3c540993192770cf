#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace n3l {

struct Point {
    int row = 0;
    int col = 0;

    friend auto operator<=>(const Point&, const Point&) = default;
};

inline int to_token(Point p, int n) { return p.row * n + p.col; }
inline Point from_token(int token, int n) { return {token / n, token % n}; }

// A set of points on an n x n grid. Insertion order is preserved; the
// occupancy mask mirrors `points` at all times.
class GridConfig {
public:
    GridConfig() = default;
    explicit GridConfig(int n);
    GridConfig(int n, const std::vector<Point>& points);

    int n() const { return n_; }
    const std::vector<Point>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    bool in_bounds(Point p) const { return p.row >= 0 && p.row < n_ && p.col >= 0 && p.col < n_; }
    bool occupied(Point p) const { return occupancy_[static_cast<std::size_t>(to_token(p, n_))] != 0; }
    bool occupied(int cell) const { return occupancy_[static_cast<std::size_t>(cell)] != 0; }
    const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }

    // Throws ContractViolation when out of bounds or already present.
    void add(Point p);
    void pop_back();

    // Point sets compare equal regardless of insertion order.
    bool same_points(const GridConfig& other) const;
    std::vector<int> sorted_tokens() const;

private:
    int n_ = 0;
    std::vector<Point> points_;
    std::vector<std::uint8_t> occupancy_;
};

// Exact integer determinant test. Throws ContractViolation unless the points are distinct.
bool collinear(Point a, Point b, Point c);

bool is_valid(const GridConfig& config);
// Number of unordered collinear triples among the placed points.
std::int64_t violation_count(const GridConfig& config);
// Every collinear triple as index triples into config.points().
std::vector<std::array<std::size_t, 3>> collinear_triples(const GridConfig& config);

// ---- Tokens ---------------------------------------------------------------

struct TokenSeq {
    int n = 0;
    std::vector<int> tokens;

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

TokenSeq encode(const GridConfig& config);
// Duplicate tokens are dropped (first occurrence wins). Throws DecodeError
// naming the first out-of-range index.
GridConfig decode(const TokenSeq& seq);

// ---- Dihedral symmetry ----------------------------------------------------

// Element R^rotation * F^reflected of D4, where F mirrors columns and R is the
// 90 degree counter-clockwise turn (r, c) -> (c, n-1-r). F is applied first.
struct Symmetry {
    int rotation = 0;  // quarter turns, 0..3
    bool reflected = false;

    friend bool operator==(const Symmetry&, const Symmetry&) = default;

    static const std::array<Symmetry, 8>& all();
    Symmetry inverse() const;
    // (*this) after `first`.
    Symmetry compose(const Symmetry& first) const;
    Point apply(Point p, int n) const;
};

GridConfig apply_symmetry(const GridConfig& config, const Symmetry& s);
// Lexicographically smallest sorted token list over the 8 images.
TokenSeq canonical_form(const GridConfig& config);

// ---- Text format ----------------------------------------------------------
//   n=<int>
//   <row> <col>      (one per line, '#' starts a comment)

GridConfig parse_config(std::istream& in, const std::string& source = {});
GridConfig read_config_file(const std::string& path);
void write_config(std::ostream& out, const GridConfig& config);
std::string to_text(const GridConfig& config);

}  // namespace n3l

#include "n3l/grid.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "n3l/errors.hpp"

namespace n3l {

GridConfig::GridConfig(int n) : n_(n), occupancy_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0) {
    if (n < 0) throw ContractViolation("grid side must be non-negative");
}

GridConfig::GridConfig(int n, const std::vector<Point>& points) : GridConfig(n) {
    for (Point p : points) add(p);
}

void GridConfig::add(Point p) {
    if (!in_bounds(p)) {
        throw ContractViolation("point (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                                ") outside " + std::to_string(n_) + "x" + std::to_string(n_) + " grid");
    }
    auto& cell = occupancy_[static_cast<std::size_t>(to_token(p, n_))];
    if (cell) {
        throw ContractViolation("duplicate point (" + std::to_string(p.row) + "," + std::to_string(p.col) + ")");
    }
    cell = 1;
    points_.push_back(p);
}

void GridConfig::pop_back() {
    if (points_.empty()) throw ContractViolation("pop_back on empty config");
    occupancy_[static_cast<std::size_t>(to_token(points_.back(), n_))] = 0;
    points_.pop_back();
}

bool GridConfig::same_points(const GridConfig& other) const {
    return n_ == other.n_ && occupancy_ == other.occupancy_;
}

std::vector<int> GridConfig::sorted_tokens() const {
    std::vector<int> out;
    out.reserve(points_.size());
    for (Point p : points_) out.push_back(to_token(p, n_));
    std::sort(out.begin(), out.end());
    return out;
}

bool collinear(Point a, Point b, Point c) {
    if (a == b || a == c || b == c) throw ContractViolation("collinear() needs three distinct points");
    const std::int64_t lhs = std::int64_t{b.row - a.row} * (c.col - a.col);
    const std::int64_t rhs = std::int64_t{c.row - a.row} * (b.col - a.col);
    return lhs == rhs;
}

std::vector<std::array<std::size_t, 3>> collinear_triples(const GridConfig& config) {
    std::vector<std::array<std::size_t, 3>> out;
    const auto& pts = config.points();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            for (std::size_t k = j + 1; k < pts.size(); ++k)
                if (collinear(pts[i], pts[j], pts[k])) out.push_back({i, j, k});
    return out;
}

std::int64_t violation_count(const GridConfig& config) {
    std::int64_t count = 0;
    const auto& pts = config.points();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            for (std::size_t k = j + 1; k < pts.size(); ++k)
                count += collinear(pts[i], pts[j], pts[k]) ? 1 : 0;
    return count;
}

bool is_valid(const GridConfig& config) {
    const auto& pts = config.points();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            for (std::size_t k = j + 1; k < pts.size(); ++k)
                if (collinear(pts[i], pts[j], pts[k])) return false;
    return true;
}

TokenSeq encode(const GridConfig& config) {
    TokenSeq seq{config.n(), {}};
    seq.tokens.reserve(config.size());
    for (Point p : config.points()) seq.tokens.push_back(to_token(p, config.n()));
    return seq;
}

GridConfig decode(const TokenSeq& seq) {
    GridConfig config(seq.n);
    const int cells = seq.n * seq.n;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        const int t = seq.tokens[i];
        if (t < 0 || t >= cells) {
            throw DecodeError(i, "token " + std::to_string(t) + " at index " + std::to_string(i) +
                                     " outside [0, " + std::to_string(cells) + ")");
        }
        if (!config.occupied(t)) config.add(from_token(t, seq.n));
    }
    return config;
}

const std::array<Symmetry, 8>& Symmetry::all() {
    static const std::array<Symmetry, 8> elements = {
        Symmetry{0, false}, Symmetry{1, false}, Symmetry{2, false}, Symmetry{3, false},
        Symmetry{0, true},  Symmetry{1, true},  Symmetry{2, true},  Symmetry{3, true},
    };
    return elements;
}

Symmetry Symmetry::inverse() const {
    // Reflections in D4 are involutions.
    if (reflected) return *this;
    return {(4 - rotation) % 4, false};
}

Symmetry Symmetry::compose(const Symmetry& first) const {
    // R^a F^x R^b F^y = R^(a + (x ? -b : b)) F^(x xor y), using F R F = R^-1.
    const int b = reflected ? (4 - first.rotation) % 4 : first.rotation;
    return {(rotation + b) % 4, reflected != first.reflected};
}

Point Symmetry::apply(Point p, int n) const {
    if (reflected) p.col = n - 1 - p.col;
    for (int k = 0; k < rotation; ++k) p = {p.col, n - 1 - p.row};
    return p;
}

GridConfig apply_symmetry(const GridConfig& config, const Symmetry& s) {
    GridConfig out(config.n());
    for (Point p : config.points()) out.add(s.apply(p, config.n()));
    return out;
}

TokenSeq canonical_form(const GridConfig& config) {
    const int n = config.n();
    std::vector<int> best;
    std::vector<int> image;
    bool first = true;
    for (const Symmetry& s : Symmetry::all()) {
        image.clear();
        for (Point p : config.points()) image.push_back(to_token(s.apply(p, n), n));
        std::sort(image.begin(), image.end());
        if (first || image < best) {
            best = image;
            first = false;
        }
    }
    return {n, std::move(best)};
}

GridConfig parse_config(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    int n = -1;
    GridConfig config;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string first;
        if (!(fields >> first)) continue;
        if (n < 0) {
            if (first.rfind("n=", 0) != 0) throw LoadError(source, lineno, "expected 'n=<int>' header");
            try {
                std::size_t used = 0;
                n = std::stoi(first.substr(2), &used);
                if (used != first.size() - 2 || n < 1) throw std::invalid_argument("n");
            } catch (const std::exception&) {
                throw LoadError(source, lineno, "bad grid size '" + first + "'");
            }
            std::string rest;
            if (fields >> rest) throw LoadError(source, lineno, "trailing text after header");
            config = GridConfig(n);
            continue;
        }
        Point p;
        std::string extra;
        std::istringstream pair(line);
        if (!(pair >> p.row >> p.col) || (pair >> extra)) throw LoadError(source, lineno, "expected '<row> <col>'");
        if (!config.in_bounds(p)) throw LoadError(source, lineno, "point out of bounds");
        if (config.occupied(p)) throw LoadError(source, lineno, "duplicate point");
        config.add(p);
    }
    if (n < 0) throw LoadError(source, lineno, "missing 'n=<int>' header");
    return config;
}

GridConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path, 0, "cannot open file");
    return parse_config(in, path);
}

void write_config(std::ostream& out, const GridConfig& config) {
    out << "n=" << config.n() << '\n';
    for (Point p : config.points()) out << p.row << ' ' << p.col << '\n';
}

std::string to_text(const GridConfig& config) {
    std::ostringstream out;
    write_config(out, config);
    return out.str();
}

}  // namespace n3l

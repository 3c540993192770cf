#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "n3l/grid.hpp"
#include "n3l/lines.hpp"
#include "n3l/tally.hpp"

namespace n3l {

struct SolveReport {
    int optimum = 0;
    GridConfig certificate;
    bool proved_optimal = false;
    std::uint64_t nodes = 0;
    double wall_time = 0.0;  // seconds
};

struct SolveOptions {
    std::optional<std::uint64_t> node_limit;
    std::optional<double> time_limit;  // seconds
    bool symmetry_breaking = true;
    // Best of this many greedy saturations seeds the incumbent; 0 starts from the empty config.
    int greedy_seeds = 64;
};

// Partial assignment for the row-major include/exclude search. Cells before
// `cursor` are decided; line tallies never exceed 2.
class SearchState {
public:
    explicit SearchState(const LineTable& table);

    int n() const { return n_; }
    int cursor() const { return cursor_; }
    void set_cursor(int cell) { cursor_ = cell; }
    const GridConfig& config() const { return config_; }
    const LineTally& tally() const { return tally_; }
    int row_count(int row) const { return row_counts_[static_cast<std::size_t>(row)]; }
    int col_count(int col) const { return col_counts_[static_cast<std::size_t>(col)]; }

    // Cell is empty and every incident line holds fewer than two points.
    bool placeable(int cell) const { return blocked_[static_cast<std::size_t>(cell)] == 0 && !config_.occupied(cell); }
    void include(int cell);
    void exclude_last();

private:
    const LineTable* table_;
    int n_;
    int cursor_ = 0;
    GridConfig config_;
    LineTally tally_;
    std::vector<int> blocked_;  // number of incident lines already at 2
    std::vector<int> row_counts_;
    std::vector<int> col_counts_;
};

// Admissible bound on any completion that only adds cells at index >= cursor:
// current points plus, per row (and per column; the smaller total wins), the
// lesser of its remaining quota (2 - occupancy) and its still-placeable cells.
int upper_bound(const SearchState& state);

SolveReport solve_exact(int n, const SolveOptions& options = {});

// Exhaustive subset search for n <= 4, checked only through the grid-core
// collinearity predicate. Throws ContractViolation for larger n.
SolveReport brute_force_max(int n);

// Every line tally <= 2. Throws ContractViolation if n differs.
bool verify_certificate(const GridConfig& config, const LineTable& table);

// Flat key=value record followed by the certificate in grid text format.
void write_report(std::ostream& out, const SolveReport& report);

}  // namespace n3l

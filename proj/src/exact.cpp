#include "n3l/exact.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

#include "n3l/errors.hpp"
#include "n3l/greedy.hpp"

namespace n3l {

SearchState::SearchState(const LineTable& table)
    : table_(&table),
      n_(table.n()),
      config_(table.n()),
      tally_(table),
      blocked_(static_cast<std::size_t>(table.n() * table.n()), 0),
      row_counts_(static_cast<std::size_t>(table.n()), 0),
      col_counts_(static_cast<std::size_t>(table.n()), 0) {}

void SearchState::include(int cell) {
    if (!placeable(cell)) throw ContractViolation("cell is not placeable");
    const Point p = from_token(cell, n_);
    config_.add(p);
    ++row_counts_[static_cast<std::size_t>(p.row)];
    ++col_counts_[static_cast<std::size_t>(p.col)];
    tally_.place(cell);
    for (int line : table_->lines_hit(cell)) {
        if (tally_.count(static_cast<std::size_t>(line)) != 2) continue;
        for (int other : table_->line_cells(static_cast<std::size_t>(line))) ++blocked_[static_cast<std::size_t>(other)];
    }
}

void SearchState::exclude_last() {
    const Point p = config_.points().back();
    const int cell = to_token(p, n_);
    for (int line : table_->lines_hit(cell)) {
        if (tally_.count(static_cast<std::size_t>(line)) != 2) continue;
        for (int other : table_->line_cells(static_cast<std::size_t>(line))) --blocked_[static_cast<std::size_t>(other)];
    }
    tally_.remove(cell);
    --row_counts_[static_cast<std::size_t>(p.row)];
    --col_counts_[static_cast<std::size_t>(p.col)];
    config_.pop_back();
}

int upper_bound(const SearchState& state) {
    const int n = state.n();
    const int cursor = state.cursor();
    // No grid line of >= 3 cells exists when n <= 2, so the quota is n there.
    const int quota = std::min(n, 2);
    std::vector<int> row_free(static_cast<std::size_t>(n), 0);
    std::vector<int> col_free(static_cast<std::size_t>(n), 0);
    for (int cell = cursor; cell < n * n; ++cell) {
        if (!state.placeable(cell)) continue;
        ++row_free[static_cast<std::size_t>(cell / n)];
        ++col_free[static_cast<std::size_t>(cell % n)];
    }
    int by_rows = 0;
    int by_cols = 0;
    for (int i = 0; i < n; ++i) {
        by_rows += std::max(0, std::min(quota - state.row_count(i), row_free[static_cast<std::size_t>(i)]));
        by_cols += std::max(0, std::min(quota - state.col_count(i), col_free[static_cast<std::size_t>(i)]));
    }
    return static_cast<int>(state.config().size()) + std::min(by_rows, by_cols);
}

namespace {

using Clock = std::chrono::steady_clock;

class BranchAndBound {
public:
    BranchAndBound(const LineTable& table, const SolveOptions& options, GridConfig incumbent)
        : options_(options), state_(table), best_(std::move(incumbent)), start_(Clock::now()) {}

    void run() {
        root_bound_ = upper_bound(state_);
        if (static_cast<int>(best_.size()) < root_bound_) dive(0);
    }

    bool aborted() const { return aborted_; }
    std::uint64_t nodes() const { return nodes_; }
    const GridConfig& best() const { return best_; }

private:
    bool out_of_budget() {
        if (options_.node_limit && nodes_ >= *options_.node_limit) return true;
        if (options_.time_limit && (nodes_ & 1023) == 0) {
            const std::chrono::duration<double> elapsed = Clock::now() - start_;
            if (elapsed.count() >= *options_.time_limit) return true;
        }
        return false;
    }

    // Keeps one reflection class: in the first occupied row the leftmost and
    // rightmost columns satisfy left + right <= n - 1.
    bool symmetry_allows(int cell) const {
        if (!options_.symmetry_breaking) return true;
        const int n = state_.n();
        const Point p = from_token(cell, n);
        const auto& pts = state_.config().points();
        if (pts.empty()) return 2 * p.col <= n - 1;
        const Point first = pts.front();
        if (p.row == first.row && state_.row_count(p.row) == 1) return first.col + p.col <= n - 1;
        return true;
    }

    void dive(int cell) {
        if (aborted_ || done_) return;
        ++nodes_;
        if (out_of_budget()) {
            aborted_ = true;
            return;
        }
        state_.set_cursor(cell);
        if (upper_bound(state_) <= static_cast<int>(best_.size())) return;
        const int cells = state_.n() * state_.n();
        if (cell == cells) {
            best_ = state_.config();
            if (static_cast<int>(best_.size()) >= root_bound_) done_ = true;
            return;
        }
        if (state_.placeable(cell) && symmetry_allows(cell)) {
            state_.include(cell);
            if (static_cast<int>(state_.config().size()) > static_cast<int>(best_.size())) {
                best_ = state_.config();
                if (static_cast<int>(best_.size()) >= root_bound_) done_ = true;
            }
            dive(cell + 1);
            state_.exclude_last();
            if (aborted_ || done_) return;
        }
        dive(cell + 1);
    }

    const SolveOptions& options_;
    SearchState state_;
    GridConfig best_;
    Clock::time_point start_;
    int root_bound_ = 0;
    std::uint64_t nodes_ = 0;
    bool aborted_ = false;
    bool done_ = false;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

SolveReport solve_exact(int n, const SolveOptions& options) {
    if (n < 1) throw ContractViolation("solve_exact needs n >= 1");
    const auto start = Clock::now();
    const LineTable table(n);

    GridConfig incumbent(n);
    if (options.greedy_seeds > 0) {
        for (const auto& c : generate_pool(table, options.greedy_seeds, 0))
            if (c.size() > incumbent.size()) incumbent = c;
    }

    BranchAndBound search(table, options, incumbent);
    search.run();

    SolveReport report;
    report.certificate = search.best();
    report.optimum = static_cast<int>(report.certificate.size());
    report.proved_optimal = !search.aborted();
    report.nodes = search.nodes();
    report.wall_time = seconds_since(start);
    return report;
}

namespace {

void exhaust(GridConfig& current, int cell, int cells, GridConfig& best, std::uint64_t& nodes) {
    ++nodes;
    if (current.size() > best.size()) best = current;
    if (cell == cells || static_cast<int>(current.size()) + (cells - cell) <= static_cast<int>(best.size())) return;
    const Point p = from_token(cell, current.n());
    bool fits = true;
    const auto& pts = current.points();
    for (std::size_t i = 0; i < pts.size() && fits; ++i)
        for (std::size_t j = i + 1; j < pts.size() && fits; ++j)
            if (collinear(pts[i], pts[j], p)) fits = false;
    if (fits) {
        current.add(p);
        exhaust(current, cell + 1, cells, best, nodes);
        current.pop_back();
    }
    exhaust(current, cell + 1, cells, best, nodes);
}

}  // namespace

SolveReport brute_force_max(int n) {
    if (n < 1 || n > 4) throw ContractViolation("brute_force_max supports 1 <= n <= 4, got " + std::to_string(n));
    const auto start = Clock::now();
    GridConfig current(n);
    GridConfig best(n);
    SolveReport report;
    exhaust(current, 0, n * n, best, report.nodes);
    if (violation_count(best) != 0) throw std::logic_error("brute force produced an invalid certificate");
    report.certificate = best;
    report.optimum = static_cast<int>(best.size());
    report.proved_optimal = true;
    report.wall_time = seconds_since(start);
    return report;
}

bool verify_certificate(const GridConfig& config, const LineTable& table) {
    if (config.n() != table.n()) throw ContractViolation("certificate and line table disagree on n");
    LineTally tally(table);
    for (Point p : config.points()) tally.place(to_token(p, config.n()));
    return tally.max_count() <= 2;
}

void write_report(std::ostream& out, const SolveReport& report) {
    out << "optimum=" << report.optimum << '\n'
        << "proved_optimal=" << (report.proved_optimal ? "true" : "false") << '\n'
        << "nodes=" << report.nodes << '\n'
        << "wall_time_s=" << report.wall_time << '\n';
    write_config(out, report.certificate);
}

}  // namespace n3l

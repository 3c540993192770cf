#include "n3l/greedy.hpp"

#include <random>

#include "n3l/errors.hpp"
#include "n3l/tally.hpp"

namespace n3l {

namespace {

void require_same_grid(const GridConfig& config, const LineTable& table) {
    if (config.n() != table.n()) throw ContractViolation("config and line table disagree on n");
}

LineTally tally_of(const GridConfig& config, const LineTable& table) {
    LineTally tally(table);
    for (Point p : config.points()) tally.place(to_token(p, config.n()));
    if (tally.max_count() > 2) throw ContractViolation("configuration has three points on a line");
    return tally;
}

// Incremental saturation state: tallies plus the availability mask.
class Saturator {
public:
    Saturator(const GridConfig& start, const LineTable& table)
        : table_(table), tally_(tally_of(start, table)), stamp_(table.n() * table.n(), 0) {
        const int cells = table.n() * table.n();
        available_.assign(static_cast<std::size_t>(cells), 0);
        for (int cell = 0; cell < cells; ++cell) {
            if (!start.occupied(cell) && tally_.can_place(cell)) {
                available_[static_cast<std::size_t>(cell)] = 1;
                ++count_;
            }
        }
    }

    int count() const { return count_; }
    const std::vector<std::uint8_t>& available() const { return available_; }

    int score(int cell) {
        ++epoch_;
        int forbidden = 0;
        for (int line : table_.lines_hit(cell)) {
            if (tally_.count(static_cast<std::size_t>(line)) != 1) continue;
            for (int other : table_.line_cells(static_cast<std::size_t>(line))) {
                auto& seen = stamp_[static_cast<std::size_t>(other)];
                if (other == cell || !available_[static_cast<std::size_t>(other)] || seen == epoch_) continue;
                seen = epoch_;
                ++forbidden;
            }
        }
        return count_ - 1 - forbidden;
    }

    void place(int cell) {
        tally_.place(cell);
        mark_unavailable(cell);
        for (int line : table_.lines_hit(cell)) {
            if (tally_.count(static_cast<std::size_t>(line)) != 2) continue;
            for (int other : table_.line_cells(static_cast<std::size_t>(line))) mark_unavailable(other);
        }
    }

private:
    void mark_unavailable(int cell) {
        auto& a = available_[static_cast<std::size_t>(cell)];
        if (a) {
            a = 0;
            --count_;
        }
    }

    const LineTable& table_;
    LineTally tally_;
    std::vector<std::uint8_t> available_;
    int count_ = 0;
    std::vector<unsigned> stamp_;
    unsigned epoch_ = 0;
};

}  // namespace

AvailabilityMask availability(const GridConfig& config, const LineTable& table) {
    require_same_grid(config, table);
    Saturator state(config, table);
    return {config.n(), state.available(), state.count()};
}

std::vector<int> lookahead_scores(const GridConfig& config, const LineTable& table) {
    require_same_grid(config, table);
    Saturator state(config, table);
    std::vector<int> scores(state.available().size(), -1);
    for (std::size_t cell = 0; cell < scores.size(); ++cell)
        if (state.available()[cell]) scores[cell] = state.score(static_cast<int>(cell));
    return scores;
}

GridConfig greedy_saturate(const GridConfig& start, const LineTable& table, std::uint64_t rng_seed) {
    require_same_grid(start, table);
    Saturator state(start, table);
    GridConfig config = start;
    std::mt19937_64 rng(rng_seed);
    std::vector<int> best;
    const int cells = table.n() * table.n();
    while (state.count() > 0) {
        best.clear();
        int best_score = -1;
        for (int cell = 0; cell < cells; ++cell) {
            if (!state.available()[static_cast<std::size_t>(cell)]) continue;
            const int s = state.score(cell);
            if (s > best_score) {
                best_score = s;
                best.clear();
            }
            if (s == best_score) best.push_back(cell);
        }
        std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
        const int chosen = best[pick(rng)];
        state.place(chosen);
        config.add(from_token(chosen, table.n()));
    }
    return config;
}

std::vector<GridConfig> generate_pool(int n, int count, std::uint64_t base_seed) {
    const LineTable table(n);
    return generate_pool(table, count, base_seed);
}

std::vector<GridConfig> generate_pool(const LineTable& table, int count, std::uint64_t base_seed) {
    if (count < 1) throw ContractViolation("pool count must be >= 1");
    std::vector<GridConfig> out(static_cast<std::size_t>(count));
    const GridConfig empty(table.n());
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < count; ++i)
        out[static_cast<std::size_t>(i)] = greedy_saturate(empty, table, base_seed + static_cast<std::uint64_t>(i));
    return out;
}

std::vector<GridConfig> generate_pool_serial(const LineTable& table, int count, std::uint64_t base_seed) {
    if (count < 1) throw ContractViolation("pool count must be >= 1");
    std::vector<GridConfig> out;
    out.reserve(static_cast<std::size_t>(count));
    const GridConfig empty(table.n());
    for (int i = 0; i < count; ++i) out.push_back(greedy_saturate(empty, table, base_seed + static_cast<std::uint64_t>(i)));
    return out;
}

}  // namespace n3l

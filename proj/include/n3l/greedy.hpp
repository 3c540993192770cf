#pragma once

#include <cstdint>
#include <vector>

#include "n3l/grid.hpp"
#include "n3l/lines.hpp"

namespace n3l {

struct AvailabilityMask {
    int n = 0;
    std::vector<std::uint8_t> available;  // n*n, row-major
    int count = 0;
};

// Cells that can take a point without breaking validity. Throws
// ContractViolation if `config` is already invalid.
AvailabilityMask availability(const GridConfig& config, const LineTable& table);

// One-step lookahead score per cell: the number of available cells left after
// placing there, not counting the placed cell. -1 for unavailable cells.
std::vector<int> lookahead_scores(const GridConfig& config, const LineTable& table);

// Places the max-lookahead cell until nothing is available. Ties are broken
// uniformly with a generator seeded by `rng_seed`. `start` is kept as a prefix.
GridConfig greedy_saturate(const GridConfig& start, const LineTable& table, std::uint64_t rng_seed);

// `count` saturations of the empty grid, seeds base_seed + index, results in
// index order. The OpenMP version must match the serial one exactly.
std::vector<GridConfig> generate_pool(int n, int count, std::uint64_t base_seed);
std::vector<GridConfig> generate_pool(const LineTable& table, int count, std::uint64_t base_seed);
std::vector<GridConfig> generate_pool_serial(const LineTable& table, int count, std::uint64_t base_seed);

}  // namespace n3l

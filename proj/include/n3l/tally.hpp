#pragma once

#include <vector>

#include "n3l/lines.hpp"

namespace n3l {

// Per-line occupancy counts against a LineTable. A placement is legal while
// every incident line stays at <= 2.
class LineTally {
public:
    explicit LineTally(const LineTable& table) : table_(&table), counts_(table.size(), 0) {}

    const LineTable& table() const { return *table_; }
    int count(std::size_t line) const { return counts_[line]; }
    const std::vector<int>& counts() const { return counts_; }

    bool can_place(int cell) const {
        for (int line : table_->lines_hit(cell))
            if (counts_[static_cast<std::size_t>(line)] >= 2) return false;
        return true;
    }
    void place(int cell) {
        for (int line : table_->lines_hit(cell)) ++counts_[static_cast<std::size_t>(line)];
    }
    void remove(int cell) {
        for (int line : table_->lines_hit(cell)) --counts_[static_cast<std::size_t>(line)];
    }
    int max_count() const {
        int best = 0;
        for (int c : counts_) best = c > best ? c : best;
        return best;
    }

private:
    const LineTable* table_;
    std::vector<int> counts_;
};

}  // namespace n3l

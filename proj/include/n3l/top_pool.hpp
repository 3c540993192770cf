#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "n3l/grid.hpp"
#include "n3l/pool_format.hpp"

namespace n3l {

struct PoolEntry {
    int score = 0;
    TokenSeq tokens;  // canonical form, sorted

    friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

enum class InsertResult { accepted, rejected_duplicate, rejected_low_score };

// Fixed-capacity min-heap of the best configurations, deduplicated by
// canonical form. Among equal minimum scores the oldest entry is evicted
// first. Inserts and snapshots are serialized by an internal mutex.
class TopPool {
public:
    explicit TopPool(std::size_t capacity);
    TopPool(TopPool&&) noexcept;
    TopPool& operator=(TopPool&&) noexcept;
    ~TopPool();

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const;
    bool empty() const { return size() == 0; }
    int min_score() const;  // 0 when empty
    int max_score() const;  // 0 when empty

    // Throws ContractViolation for invalid configs.
    InsertResult insert(const GridConfig& config);

    // Descending score; ties keep insertion order.
    std::vector<PoolEntry> snapshot() const;
    std::vector<PoolRecord> records() const;

    // Heap order, seen-set and heap agree, size within capacity.
    bool check_invariants() const;

private:
    struct Slot {
        int score;
        std::uint64_t serial;
        std::vector<int> tokens;
    };
    static bool heap_less(const Slot& a, const Slot& b);

    std::size_t capacity_;
    std::vector<Slot> heap_;
    std::set<std::vector<int>> seen_;
    std::uint64_t next_serial_ = 0;
    int n_ = 0;
    std::unique_ptr<std::mutex> mutex_;
};

// Populates a pool via insert(). Records whose tokens decode to an invalid
// configuration raise LoadError with the offending line.
TopPool load_pool(std::istream& in, std::size_t capacity, const std::string& source = {});
TopPool load_pool_file(const std::string& path, std::size_t capacity);
void save_pool_file(const std::string& path, const TopPool& pool);

}  // namespace n3l

#include "n3l/top_pool.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <istream>

#include "n3l/errors.hpp"

namespace n3l {

TopPool::TopPool(std::size_t capacity) : capacity_(capacity), mutex_(std::make_unique<std::mutex>()) {
    if (capacity == 0) throw ContractViolation("pool capacity must be >= 1");
}
TopPool::TopPool(TopPool&&) noexcept = default;
TopPool& TopPool::operator=(TopPool&&) noexcept = default;
TopPool::~TopPool() = default;

// std heap algorithms build a max-heap, so "less" puts the entry to evict on top:
// lowest score, then oldest serial.
bool TopPool::heap_less(const Slot& a, const Slot& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.serial > b.serial;
}

std::size_t TopPool::size() const {
    std::lock_guard lock(*mutex_);
    return heap_.size();
}

int TopPool::min_score() const {
    std::lock_guard lock(*mutex_);
    return heap_.empty() ? 0 : heap_.front().score;
}

int TopPool::max_score() const {
    std::lock_guard lock(*mutex_);
    int best = 0;
    for (const auto& s : heap_) best = std::max(best, s.score);
    return best;
}

InsertResult TopPool::insert(const GridConfig& config) {
    if (!is_valid(config)) throw ContractViolation("TopPool::insert given an invalid configuration");
    TokenSeq canon = canonical_form(config);
    const int score = static_cast<int>(config.size());

    std::lock_guard lock(*mutex_);
    if (!heap_.empty() && n_ != config.n()) throw ContractViolation("TopPool holds a different grid size");
    if (seen_.count(canon.tokens)) return InsertResult::rejected_duplicate;
    if (heap_.size() >= capacity_ && score <= heap_.front().score) return InsertResult::rejected_low_score;

    n_ = config.n();
    seen_.insert(canon.tokens);
    heap_.push_back({score, next_serial_++, std::move(canon.tokens)});
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
    if (heap_.size() > capacity_) {
        std::pop_heap(heap_.begin(), heap_.end(), heap_less);
        seen_.erase(heap_.back().tokens);
        heap_.pop_back();
    }
#ifndef NDEBUG
    assert(std::is_heap(heap_.begin(), heap_.end(), heap_less) && seen_.size() == heap_.size());
#endif
    return InsertResult::accepted;
}

std::vector<PoolEntry> TopPool::snapshot() const {
    std::vector<Slot> slots;
    int n = 0;
    {
        std::lock_guard lock(*mutex_);
        slots = heap_;
        n = n_;
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.serial < b.serial;
    });
    std::vector<PoolEntry> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back({s.score, {n, std::move(s.tokens)}});
    return out;
}

std::vector<PoolRecord> TopPool::records() const {
    std::vector<PoolRecord> out;
    for (auto& e : snapshot()) out.push_back({e.tokens.n, e.score, std::move(e.tokens.tokens)});
    return out;
}

bool TopPool::check_invariants() const {
    std::lock_guard lock(*mutex_);
    if (heap_.size() > capacity_ || seen_.size() != heap_.size()) return false;
    if (!std::is_heap(heap_.begin(), heap_.end(), heap_less)) return false;
    for (const auto& s : heap_) {
        if (!seen_.count(s.tokens) || s.score != static_cast<int>(s.tokens.size())) return false;
        if (!heap_.empty() && s.score < heap_.front().score) return false;
    }
    return true;
}

TopPool load_pool(std::istream& in, std::size_t capacity, const std::string& source) {
    // Read line by line so errors keep their line numbers, including
    // records that parse but decode to an invalid configuration.
    TopPool pool(capacity);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        PoolRecord r;
        try {
            r = parse_record(line);
        } catch (const std::invalid_argument& e) {
            throw LoadError(source, lineno, e.what());
        }
        GridConfig config = decode({r.n, r.tokens});
        if (config.size() != r.tokens.size()) throw LoadError(source, lineno, "duplicate tokens in record");
        if (!is_valid(config)) throw LoadError(source, lineno, "record is not a valid configuration");
        try {
            pool.insert(config);
        } catch (const ContractViolation& e) {
            throw LoadError(source, lineno, e.what());
        }
    }
    return pool;
}

TopPool load_pool_file(const std::string& path, std::size_t capacity) {
    std::ifstream in(path);
    if (!in) throw LoadError(path, 0, "cannot open file");
    return load_pool(in, capacity, path);
}

void save_pool_file(const std::string& path, const TopPool& pool) { write_jsonl_file(path, pool.records()); }

}  // namespace n3l

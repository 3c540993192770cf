#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "n3l/grid.hpp"

namespace n3l {

// One JSON-lines record: {"n": int, "score": int, "tokens": [int, ...]}.
// Shared by greedy output, TopPool checkpoints and the boost loop.
struct PoolRecord {
    int n = 0;
    int score = 0;
    std::vector<int> tokens;

    friend bool operator==(const PoolRecord&, const PoolRecord&) = default;
};

PoolRecord to_record(const GridConfig& config);

void write_jsonl(std::ostream& out, const std::vector<PoolRecord>& records);
void write_jsonl_file(const std::string& path, const std::vector<PoolRecord>& records);

// Parses one record. Throws std::invalid_argument describing the defect.
PoolRecord parse_record(const std::string& line);

// Structural checks only (shape, types, score == token count, tokens in range).
// Throws LoadError carrying the 1-based line number.
std::vector<PoolRecord> read_jsonl(std::istream& in, const std::string& source = {});
std::vector<PoolRecord> read_jsonl_file(const std::string& path);

}  // namespace n3l

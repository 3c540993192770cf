#include "n3l/pool_format.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "n3l/errors.hpp"

namespace n3l {

using nlohmann::json;

PoolRecord to_record(const GridConfig& config) {
    return {config.n(), static_cast<int>(config.size()), encode(config).tokens};
}

void write_jsonl(std::ostream& out, const std::vector<PoolRecord>& records) {
    for (const auto& r : records) {
        json j = {{"n", r.n}, {"score", r.score}, {"tokens", r.tokens}};
        out << j.dump() << '\n';
    }
}

void write_jsonl_file(const std::string& path, const std::vector<PoolRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_jsonl(out, records);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

PoolRecord parse_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
    }
    auto fail = [](const std::string& why) { throw std::invalid_argument(why); };
    if (!j.is_object()) fail("record is not an object");
    for (const char* key : {"n", "score", "tokens"})
        if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
    if (!j["n"].is_number_integer() || !j["score"].is_number_integer() || !j["tokens"].is_array())
        fail("field has wrong type");
    PoolRecord r;
    r.n = j["n"].get<int>();
    r.score = j["score"].get<int>();
    if (r.n < 1) fail("n must be >= 1");
    for (const auto& t : j["tokens"]) {
        if (!t.is_number_integer()) fail("token is not an integer");
        const int v = t.get<int>();
        if (v < 0 || v >= r.n * r.n) fail("token " + std::to_string(v) + " out of range");
        r.tokens.push_back(v);
    }
    if (r.score != static_cast<int>(r.tokens.size())) fail("score does not match token count");
    return r;
}

namespace {
bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }
}  // namespace

std::vector<PoolRecord> read_jsonl(std::istream& in, const std::string& source) {
    std::vector<PoolRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        try {
            out.push_back(parse_record(line));
        } catch (const std::invalid_argument& e) {
            throw LoadError(source, lineno, e.what());
        }
    }
    return out;
}

std::vector<PoolRecord> read_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path, 0, "cannot open file");
    return read_jsonl(in, path);
}

}  // namespace n3l

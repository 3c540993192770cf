#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace n3l {

// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// API used in the wrong order or state (backward on untracked tensors, step after done, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DecodeError : public std::runtime_error {
public:
    DecodeError(std::size_t index, const std::string& what)
        : std::runtime_error(what), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

// Malformed persisted data. `line` is 1-based; 0 when not line-oriented.
class LoadError : public std::runtime_error {
public:
    LoadError(std::string file, std::size_t line, const std::string& what)
        : std::runtime_error(format(file, line, what)), file_(std::move(file)), line_(line) {}
    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    static std::string format(const std::string& file, std::size_t line, const std::string& what) {
        std::string out = file.empty() ? std::string("<stream>") : file;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + what;
    }
    std::string file_;
    std::size_t line_;
};

}  // namespace n3l

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lunar {

// Error hierarchy shared by the whole pipeline. The CLI maps these onto its
// exit-code contract: io_error -> 1, validation_error -> 2, numeric_error -> 3.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

// Malformed or unsupported input file contents (wrong magic, color PNG, ...).
class format_error : public io_error {
public:
    explicit format_error(const std::string& msg) : io_error(msg) {}
};

// Bad arguments, out-of-bounds coordinates, contract violations.
class validation_error : public error {
public:
    explicit validation_error(const std::string& msg) : error(msg) {}
};

// Non-finite loss or other numeric breakdown.
class numeric_error : public error {
public:
    explicit numeric_error(const std::string& msg) : error(msg) {}
};

class corrupt_checkpoint_error : public io_error {
public:
    explicit corrupt_checkpoint_error(const std::string& msg) : io_error(msg) {}
};

// FNV-1a 64-bit; used for run-record input hashes and output-tree comparisons.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
    return fnv1a(bytes.data(), bytes.size());
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace lunar

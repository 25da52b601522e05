#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace veil {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a 64-bit. Identification hash for fingerprints and manifests,
// not a cryptographic one.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);
uint64_t parse_hex64(const std::string& s);

std::vector<uint8_t> read_file(const std::string& path);
// Writes temp-then-rename so partially written files never appear.
void write_file_atomic(const std::string& path, const void* data, size_t len);
void write_file_atomic(const std::string& path, const std::string& text);
uint64_t hash_file(const std::string& path);

std::string to_lower(const std::string& s);
std::string trim(const std::string& s);
// Lowercase, trim, strip trailing '.', '!', '?', ',' for answer matching.
std::string normalize_answer(const std::string& s);
// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);

}  // namespace veil

#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace deepjscc {

// Error taxonomy. Callers that can recover catch the specific type; the CLI
// maps each to a nonzero exit code with the message on stderr.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SequencingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FeatureUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for architecture hashes, dataset checksums and parameter
// freeze assertions. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// Exact reduced fraction, for bandwidth-ratio bookkeeping.
struct Ratio {
    long long num = 0;
    long long den = 1;

    static Ratio reduced(long long n, long long d) {
        long long g = std::gcd(n, d);
        if (g == 0) return {0, 1};
        return {n / g, d / g};
    }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Ratio& o) const { return num == o.num && den == o.den; }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

}  // namespace deepjscc

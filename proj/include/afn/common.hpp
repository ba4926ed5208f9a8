#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace afn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Base class for all library errors; what() carries the diagnostic.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSpec : Error {
    using Error::Error;
};
struct NotUnderloaded : Error {
    using Error::Error;
};
struct SolverDidNotConverge : Error {
    using Error::Error;
};
struct StateCapExceeded : Error {
    using Error::Error;
};
struct CapTooLargeForBudget : Error {
    using Error::Error;
};
struct EmptySample : Error {
    using Error::Error;
};
struct NotNormalizable : Error {
    using Error::Error;
};
struct PreconditionViolation : Error {
    using Error::Error;
};

/// FNV-1a 64-bit over a byte range. Stable across runs and platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < len; ++k) {
        h ^= p[k];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

/// Format with 12 significant digits; the fixed output precision for CSV/JSON.
inline std::string format12(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

/// Round through the 12-digit decimal representation (stable file bytes).
inline double round12(double x) { return std::strtod(format12(x).c_str(), nullptr); }

inline std::string to_hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline constexpr const char* kVersion = "1.0.0";

}  // namespace afn

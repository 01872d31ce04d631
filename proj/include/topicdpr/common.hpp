#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace topicdpr {

inline constexpr const char* kVersion = "0.1.0";

// Data or validation problem (bad input file, contract violation). CLI exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure (non-finite value, degenerate norm). CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Resolved once per process from the TOPICDPR_LOG environment variable
// ("error" | "info" | "debug", default "info").
LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

uint64_t fnv1a64(std::string_view data);
uint64_t fnv1a64_file(const std::string& path);  // throws DataError if unreadable
std::string hex64(uint64_t v);

// Deterministic seed derivation so independent RNG streams never have to be
// serialized: every stochastic site seeds a fresh engine from (seed, salts).
uint64_t mix_seed(uint64_t seed, uint64_t salt_a, uint64_t salt_b = 0);

}  // namespace topicdpr

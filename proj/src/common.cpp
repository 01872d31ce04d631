#include "topicdpr/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <vector>

namespace topicdpr {

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("TOPICDPR_LOG");
        if (env == nullptr) return LogLevel::kInfo;
        std::string v(env);
        if (v == "error") return LogLevel::kError;
        if (v == "debug") return LogLevel::kDebug;
        return LogLevel::kInfo;
    }();
    return level;
}

namespace {

std::mutex g_log_mutex;

void emit(const char* tag, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace

void log_error(const std::string& msg) { emit("error", msg); }

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) emit("info", msg);
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::kDebug) emit("debug", msg);
}

uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for hashing: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string s = buf.str();
    return fnv1a64(s);
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

uint64_t mix_seed(uint64_t seed, uint64_t salt_a, uint64_t salt_b) {
    // splitmix64 finalizer applied to the combined words
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt_a + 1) + 0xbf58476d1ce4e5b9ull * (salt_b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace topicdpr

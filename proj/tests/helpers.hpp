#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testutil {

// Latched before main() so per-step training logs stay out of test output;
// an explicit TOPICDPR_LOG wins.
inline const int quiet_logs = [] {
    ::setenv("TOPICDPR_LOG", "error", 0);
    return 0;
}();

// Fresh directory under the system temp root. Left behind on purpose so a
// failing test's artifacts can be inspected.
inline std::string temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(0x7e57d1a5u);
    auto base = std::filesystem::temp_directory_path() /
                ("topicdpr-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(base);
    return base.string();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace testutil

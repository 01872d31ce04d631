#include "topicdpr/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "topicdpr/common.hpp"

namespace topicdpr {

namespace {

constexpr uint32_t kTensorMagic = 0x52534e54;  // "TNSR"
constexpr uint32_t kTensorVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ofstream& f, const std::string& s) {
    write_u64(f, s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::string read_string(std::ifstream& f) {
    uint64_t n = read_u64(f);
    if (n > (1u << 20)) throw DataError("tensor name length out of range");
    std::string s(n, '\0');
    f.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void write_tensors(const std::map<std::string, Eigen::MatrixXd>& tensors,
                   const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write tensor file: " + path);
    write_u32(f, kTensorMagic);
    write_u32(f, kTensorVersion);
    write_u64(f, tensors.size());
    for (const auto& [name, m] : tensors) {
        write_string(f, name);
        write_u64(f, static_cast<uint64_t>(m.rows()));
        write_u64(f, static_cast<uint64_t>(m.cols()));
        for (long r = 0; r < m.rows(); ++r) {
            for (long c = 0; c < m.cols(); ++c) {
                double v = m(r, c);
                f.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
        }
    }
    if (!f) throw DataError("write failed: " + path);
}

std::map<std::string, Eigen::MatrixXd> read_tensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read tensor file: " + path);
    if (read_u32(f) != kTensorMagic) throw DataError("not a tensor file: " + path);
    if (read_u32(f) != kTensorVersion) throw DataError("unsupported tensor file version: " + path);
    uint64_t count = read_u64(f);
    std::map<std::string, Eigen::MatrixXd> out;
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(f);
        uint64_t rows = read_u64(f);
        uint64_t cols = read_u64(f);
        if (rows > (1u << 24) || cols > (1u << 24)) {
            throw DataError("tensor dimensions out of range: " + name);
        }
        Eigen::MatrixXd m(static_cast<long>(rows), static_cast<long>(cols));
        for (long r = 0; r < m.rows(); ++r) {
            for (long c = 0; c < m.cols(); ++c) {
                double v = 0.0;
                f.read(reinterpret_cast<char*>(&v), sizeof(v));
                m(r, c) = v;
            }
        }
        if (!f) throw DataError("truncated tensor file: " + path);
        out.emplace(std::move(name), std::move(m));
    }
    return out;
}

}  // namespace topicdpr

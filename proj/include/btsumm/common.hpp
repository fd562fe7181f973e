#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace btsumm {

// Error hierarchy. The CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct MissingArtifactError : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    using Error::Error;
};
struct InvalidArgument : Error {
    using Error::Error;
};

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitMissingArtifact = 3,
    kExitDivergence = 4,
};

// splitmix64; used to derive independent stream seeds from (seed, tags).
uint64_t mix_seed(uint64_t seed, uint64_t a = 0, uint64_t b = 0);

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t a = 0, uint64_t b = 0) {
    return std::mt19937_64(mix_seed(seed, a, b));
}

// FNV-1a 64-bit content hashes, reported as fixed-width hex.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
std::string hash_hex(uint64_t h);
std::string hash_file(const std::string& path);
std::string hash_string(const std::string& s);

// Filesystem helpers. Writes are temp-then-rename so consumers never see
// partial files.
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);
std::string path_join(const std::string& a, const std::string& b);
std::vector<std::string> read_lines(const std::string& path);
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& content);

std::vector<std::string> split_ws(const std::string& line);
std::string to_lower_ascii(std::string s);
bool utf8_valid(const std::string& s);

// Thread-safe stdout logging, one line per call: "[tag] message".
void log_line(const std::string& tag, const std::string& message);
void set_log_quiet(bool quiet);

class Timer {
  public:
    Timer();
    double seconds() const;

  private:
    std::chrono::steady_clock::time_point start_;
};

std::string format_double(double v, int precision = 6);

}  // namespace btsumm

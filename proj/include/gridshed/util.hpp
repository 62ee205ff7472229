#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace gridshed {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a, used for config and input-file fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Derives an independent seed for a named sub-stream ("data", "init", "env",
/// "eval", ...) and an optional index, so stages reproduce in isolation.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Fixed-precision decimal rendering used by every CSV writer.
std::string fmt_fixed(double value, int digits = 6);

/// Shortest-safe round-trip rendering ("%.17g") for data files read back later.
std::string fmt_exact(double value);

/// Splits one CSV line on commas (no quoting; every file here is numeric).
std::vector<std::string> split_csv(std::string_view line);
/// Reads a numeric CSV with one header line.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                  std::vector<std::string>* header = nullptr);

double mean_of(const std::vector<double>& xs);
/// Sample standard deviation (n - 1); zero for fewer than two values.
double sample_std(const std::vector<double>& xs);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }
  void reset() { start_ = std::chrono::steady_clock::now(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace gridshed

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace redlab {

// splitmix64 finalizer; used to derive child seeds so that stream/replicate
// seeds are independent of enumeration order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

// FNV-1a over bytes. Stable across platforms and builds; used for resume
// keys, per-run seeds derived from string ids, and nothing security-relevant.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Shortest decimal form that round-trips the exact value (CSV exports).
std::string format_double(double v);

// Deterministic RNG. Draws come from mt19937_64 (bit-exact by the standard),
// but all shaping (bounded ints, normals, binomials) is done here because the
// <random> distributions are implementation-defined and would break replay
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of entropy.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n);

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; the sine half is discarded so draws stay stateless.
  double normal(double mean, double stddev);

  // Sum of Bernoulli draws. Exact and replayable; n up to ~10^6 is fine.
  long binomial(long n, double p);

 private:
  std::mt19937_64 engine_;
};

// --- small file helpers -----------------------------------------------------

std::string read_text_file(const std::filesystem::path& path);

// Write via a sibling temp file + rename so that readers never observe a
// partially written artifact.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

std::string sanitize_file_component(std::string_view raw);

}  // namespace redlab

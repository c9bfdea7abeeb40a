#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace attrxfer {

// Error categories mapped to CLI exit codes (see README).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit code 2
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit code 3
};
struct HashMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit code 4
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit code 5
};

// Deterministic RNG. Distribution transforms are hand-rolled so that a fixed
// seed gives the same stream regardless of standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::uint64_t s_;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Writes to <path>.tmp and renames, so a failed run never leaves a partial
// artifact behind.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer,
                  bool binary = false);

std::string read_text_file(const std::filesystem::path& path);

// %.17g, enough digits to round-trip a double exactly
std::string fmt_g17(double v);

}  // namespace attrxfer

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairrec {

// ============================================================================
// Errors
// ============================================================================

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operator shape disagreements.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Out-of-range lookups (embedding rows, class labels).
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Violated call contracts (non-scalar backward root, empty batch, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finiteness is required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed input files; message carries path and line number.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures (unreadable path, write refusal, bad magic).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Bad CLI flags or config keys; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// ============================================================================
// Deterministic RNG
// ============================================================================

// Thin wrapper over mt19937_64 with hand-rolled draws so that streams are
// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform double in [0, 1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Weighted index draw; weights need not be normalized.
  std::size_t weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw ContractError("Rng::weighted: weights sum to zero");
    double r = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with our own index draws, for cross-platform determinism.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a over bytes; used for sub-seed derivation and input content hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

// Stable sub-seed from a root seed and a purpose label, so adding a new
// consumer never shifts the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& purpose) {
  std::uint64_t h = fnv1a(purpose);
  h = fnv1a(&root, sizeof(root), h);
  // Final avalanche (splitmix64 tail) so nearby roots decorrelate.
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

// ============================================================================
// Small utilities
// ============================================================================

inline std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

// Shortest decimal form that round-trips a double; keeps CSV output stable.
inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace fairrec

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace idxsel {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes: configuration and
// input-file problems exit 2, runtime failures exit 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad file contents (syntax, missing fields).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A domain-type invariant does not hold; message names the violated rule.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition or passed unusable arguments.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Reference to a table or column that the schema does not define.
class UnknownNameError : public Error {
 public:
  using Error::Error;
};

// Vector/network shape mismatch (workload too large, pool size != K, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An agent tried to execute an action the feasibility mask forbids.
class InfeasibleActionError : public Error {
 public:
  using Error::Error;
};

// External cost source misbehaved (bad frame, handshake, timeout, exit).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A training loss went non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64). The standard <random> distributions are not
// pinned across library implementations; everything seed-sensitive in this
// project draws through this generator so traces are bit-identical anywhere.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform in [0, n). Modulo bias is negligible for the n used here.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Box-Muller, one value per pair of draws (no caching, keeps streams simple).
  double normal(double mean, double stddev) {
    double u1 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t tag) const {
    return Rng(state_ ^ (0x632be59bd9b4e019ULL * (tag + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for pool fingerprints and trace hashes.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace idxsel

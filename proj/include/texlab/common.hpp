#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace texlab {

enum class ErrorCode {
  InvalidParams,
  UnknownKind,
  CropTooLarge,
  EmptyDirectory,
  UndecodableImage,
  DimMismatch,
  SizeMismatch,
  EmptyBatch,
  EmptyCorpus,
  DivergenceDetected,
  FrozenParamsMutated,
  MissingEncoder,
  MissingMeanW,
  MissingArtifact,
  NonFiniteLoss,
  InvalidSpec,
  ImageTooSmall,
  ParseError,
  UnknownKey,
  TypeError,
  ConfigHashMismatch,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::CropTooLarge: return "CropTooLarge";
    case ErrorCode::EmptyDirectory: return "EmptyDirectory";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::FrozenParamsMutated: return "FrozenParamsMutated";
    case ErrorCode::MissingEncoder: return "MissingEncoder";
    case ErrorCode::MissingMeanW: return "MissingMeanW";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::ConfigHashMismatch: return "ConfigHashMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// FNV-1a, used for config hashes and parameter checksums.
inline std::uint64_t fnv1a_bytes(const void* data, std::size_t len,
                                 std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a_bytes(s.data(), s.size(), seed);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-seed for a named stream, so every consumer of randomness draws
// from its own generator and batch contents stay a pure function of (seed, step).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  return splitmix64(base ^ fnv1a(tag) ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

// Deterministic RNG with explicitly-coded distributions. The bit streams do not
// depend on library internals, so seeded values frozen into tests stay valid.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ull)) {}

  std::uint64_t next_u64() {
    // xorshift* variant; state seeded through splitmix64 above.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller; one spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename S>
  void fill_normal(std::vector<S>& out, double mean = 0.0, double stddev = 1.0) {
    for (auto& x : out) x = static_cast<S>(normal(mean, stddev));
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline bool is_finite_value(double v) { return std::isfinite(v); }

template <typename S>
bool all_finite(const std::vector<S>& v) {
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

}  // namespace texlab

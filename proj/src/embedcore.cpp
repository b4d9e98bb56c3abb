#include "geoprompt/embedcore.hpp"

#include <cstdio>
#include <numbers>

namespace geoprompt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NearZeroNorm: return "NearZeroNorm";
    case ErrorKind::EmptyList: return "EmptyList";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BadTokenId: return "BadTokenId";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyField: return "EmptyField";
    case ErrorKind::NoDescriptorsFound: return "NoDescriptorsFound";
    case ErrorKind::NetworkError: return "NetworkError";
    case ErrorKind::MissingDescriptors: return "MissingDescriptors";
    case ErrorKind::MissingGeography: return "MissingGeography";
    case ErrorKind::SpecInvariantViolated: return "SpecInvariantViolated";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyClassTokens: return "EmptyClassTokens";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::UnknownGroupKey: return "UnknownGroupKey";
    case ErrorKind::StructureMismatch: return "StructureMismatch";
    case ErrorKind::ClassSetMismatch: return "ClassSetMismatch";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::UnmappedCountry: return "UnmappedCountry";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::NotFound: return "NotFound";
  }
  return "Unknown";
}

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

Rng Rng::from_state(const State& state) {
  Rng r;
  r.s_ = state;
  return r;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  // 1 - uniform() lies in (0, 1], keeping log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::derive(std::uint64_t stream_id) const {
  std::uint64_t x = s_[0] ^ rotl(s_[1], 13) ^ rotl(s_[2], 29) ^ rotl(s_[3], 47);
  x ^= splitmix64(stream_id);
  return Rng(x);
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  // Row-major fill order so the layout of the stream is obvious.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  }
  return m;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t h) { return fnv1a64(s.data(), s.size(), h); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace geoprompt

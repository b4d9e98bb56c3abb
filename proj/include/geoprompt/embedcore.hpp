#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "geoprompt/error.hpp"

namespace geoprompt {

// Images (f), text embeddings (w = h(t)) and knowledge vectors (k) all share
// this representation. All arithmetic is 64-bit.
using EmbeddingVec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNormEpsilon = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> l2_normalize(
    const Eigen::MatrixBase<Derived>& v,
    typename Derived::Scalar eps = typename Derived::Scalar(kNormEpsilon)) {
  const auto norm = v.norm();
  if (!(norm > eps)) throw Error(ErrorKind::NearZeroNorm, "l2_normalize: norm " + std::to_string(norm));
  return v / norm;
}

// a.b / (|a||b|), clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& a,
                                     const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "cosine_sim: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(kNormEpsilon)) || !(nb > Scalar(kNormEpsilon))) {
    throw Error(ErrorKind::NearZeroNorm, "cosine_sim");
  }
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

// Componentwise arithmetic mean; not re-normalized.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_vectors(
    std::span<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vs) {
  if (vs.empty()) throw Error(ErrorKind::EmptyList, "mean_vectors");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(vs.front().size());
  for (const auto& v : vs) {
    if (v.size() != acc.size()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "mean_vectors: " + std::to_string(v.size()) + " vs " + std::to_string(acc.size()));
    }
    acc += v;
  }
  return acc / Scalar(vs.size());
}

inline EmbeddingVec mean_vectors(const std::vector<EmbeddingVec>& vs) {
  return mean_vectors<double>(std::span<const EmbeddingVec>(vs));
}

// xoshiro256** (Blackman & Vigna, 2018) seeded through splitmix64. The bit
// stream is fixed by the algorithm, independent of the standard library, so a
// seed reproduces the same sequence on every platform.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  static Rng from_state(const State& state);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n > 0. Unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; one value per call (no caching, so the
  // state fully describes the stream).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent stream derived from this generator's seed material and an id.
  Rng derive(std::uint64_t stream_id) const;

  const State& state() const { return s_; }

 private:
  State s_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

// Fisher-Yates with the project Rng (std::shuffle is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

// 64-bit FNV-1a; used for template hashes and parameter fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace geoprompt

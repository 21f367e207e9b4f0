#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>

namespace mkin {

/// Deterministic pseudo-random generator (splitmix64 core).
///
/// The standard library distributions are deliberately avoided: their
/// output is not pinned across implementations, and dataset / model /
/// episode artifacts must be byte-identical for a given seed. Every
/// sampling routine below has a fixed draw sequence.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double next_double();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  /// Uniform rotation (Shoemake's method), canonicalized to w >= 0.
  Eigen::Quaterniond uniform_quaternion();

  /// Uniform point in the axis-aligned box [lo, hi].
  Eigen::Vector3d uniform_in_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

private:
  std::uint64_t state_;
};

/// Stateless avalanche mix of a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent child seed from (root, stream, index).
/// Used for per-sample seeding so parallel generation is order- and
/// thread-count-independent.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index);

}  // namespace mkin

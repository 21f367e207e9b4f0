#include "manifold_kin/rng.hpp"

#include <cmath>

namespace mkin {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) { return finalize(x + kGolden); }

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t s = finalize(root + kGolden * (stream + 1));
  return finalize(s ^ (index + kGolden));
}

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return finalize(state_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling over the largest multiple of n, so every value
  // in [0, n) is equally likely.
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

double Rng::normal() {
  // Box-Muller, cosine branch only: fixed two-draw cost per call.
  double u1 = next_double();
  const double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Eigen::Quaterniond Rng::uniform_quaternion() {
  const double u1 = next_double();
  const double u2 = next_double();
  const double u3 = next_double();
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(2.0 * M_PI * u3),   // w
                       a * std::sin(2.0 * M_PI * u2),   // x
                       a * std::cos(2.0 * M_PI * u2),   // y
                       b * std::sin(2.0 * M_PI * u3));  // z
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Eigen::Vector3d Rng::uniform_in_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  Eigen::Vector3d p;
  for (int i = 0; i < 3; ++i) p[i] = uniform(lo[i], hi[i]);
  return p;
}

}  // namespace mkin

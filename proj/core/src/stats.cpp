#include "manifold_kin/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "manifold_kin/errors.hpp"

namespace mkin {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw InputError("mean: empty input");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) throw InputError("stddev: need at least 2 values");
  const double m = mean(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double percentile(std::vector<double> xs, double p) {
  if (xs.empty()) throw InputError("percentile: empty input");
  if (p < 0.0 || p > 100.0) throw InputError("percentile: p outside [0, 100]");
  std::sort(xs.begin(), xs.end());
  const double rank = p / 100.0 * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

double median(std::vector<double> xs) { return percentile(std::move(xs), 50.0); }

double paired_permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw InputError("paired test: size mismatch or empty");
  const std::size_t n = a.size();
  if (n > 20) throw InputError("paired test: exact enumeration limited to n <= 20");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double observed = 0;
  for (double x : d) observed += x;

  // Under H0 each difference is symmetric about 0; count sign
  // assignments with a sum at least as extreme (as negative).
  const std::uint64_t total = std::uint64_t{1} << n;
  std::uint64_t at_most = 0;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (mask >> i) & 1 ? -d[i] : d[i];
    if (s <= observed) ++at_most;
  }
  return static_cast<double>(at_most) / static_cast<double>(total);
}

double mann_whitney_pvalue_greater(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InputError("mann-whitney: empty sample");
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());

  struct Tagged {
    double value;
    bool from_a;
  };
  std::vector<Tagged> all;
  all.reserve(a.size() + b.size());
  for (double x : a) all.push_back({x, true});
  for (double x : b) all.push_back({x, false});
  std::sort(all.begin(), all.end(), [](const Tagged& l, const Tagged& r) { return l.value < r.value; });

  // Midranks with tie correction.
  const std::size_t n = all.size();
  std::vector<double> rank(n);
  double tie_term = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].value == all[i].value) ++j;
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[k] = r;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  double rank_sum_a = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (all[k].from_a) rank_sum_a += rank[k];
  }
  const double u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
  const double mu = n1 * n2 / 2.0;
  const double nn = n1 + n2;
  const double sigma2 = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (sigma2 <= 0.0) return 1.0;
  const double z = (u - mu - 0.5) / std::sqrt(sigma2);  // continuity correction
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace mkin

#pragma once

#include <vector>

namespace mkin {

double mean(const std::vector<double>& xs);
double stddev(const std::vector<double>& xs);  // sample standard deviation

/// Percentile in [0, 100] with linear interpolation between order
/// statistics. Input need not be sorted.
double percentile(std::vector<double> xs, double p);
double median(std::vector<double> xs);

/// Exact paired sign-flip permutation test for mean(a - b) < 0,
/// enumerating all 2^n sign assignments (n <= 20). Returns the
/// one-sided p-value.
double paired_permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b);

/// One-sided Mann-Whitney U test that `a` is stochastically greater
/// than `b`; normal approximation with tie correction. Returns the
/// p-value.
double mann_whitney_pvalue_greater(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mkin

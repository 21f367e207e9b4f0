#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "manifold_kin/chain.hpp"
#include "manifold_kin/dataset.hpp"
#include "manifold_kin/hash.hpp"
#include "manifold_kin/ik.hpp"

namespace mkin {

enum class KmpVariant : std::uint8_t { S = 0, L = 1 };

/// S is the lightweight variant, L the deeper one.
int kmp_block_count(KmpVariant v);    // 4 / 5
int kmp_default_width(KmpVariant v);  // 64 / 128

/// Pre-layer-norm residual block: x += W2 * gelu(W1 * LN(x) + b1) + b2.
/// Weights are row-major [out][in]; float32 at inference.
struct KmpBlock {
  std::vector<float> ln_gamma, ln_beta;  // width
  std::vector<float> w1, b1;             // width*width, width
  std::vector<float> w2, b2;             // width*width, width
};

/// Feed-forward joint-configuration prior. Inputs are 19-dimensional
/// encoded commands (position + 6D orientation per arm + alpha),
/// outputs 17 upper-body joint angles. Normalization statistics live in
/// double precision; weights in float32. Immutable after construction;
/// inference is pure.
struct KmpModel {
  KmpVariant variant = KmpVariant::L;
  int width = 128;
  int input_dim = 19;
  int output_dim = 17;
  std::vector<float> w_in, b_in;    // width*input_dim, width
  std::vector<KmpBlock> blocks;     // 4 (S) or 5 (L)
  std::vector<float> w_out, b_out;  // output_dim*width, output_dim
  Eigen::VectorXd in_mean, in_scale;    // input_dim
  Eigen::VectorXd out_mean, out_scale;  // output_dim
  Eigen::VectorXd lower, upper;         // joint limits, output_dim
  Sha256 chain_hash{};
  double dropout_rate = 0.1;  // training-time record; inference never drops
};

/// Throws ValidationError when tensor sizes disagree with the declared
/// dimensions or the block count does not match the variant.
void validate_model(const KmpModel& model);

/// 19-vector [left pos, left 6D rot, right pos, right 6D rot, alpha].
/// An absent arm's nine entries take the model's input means, which
/// normalize to zero (mean imputation for the unilateral extension).
Eigen::VectorXd encode_command(const KmpModel& model, const CommandSample& c);

/// q = clamp(out_mean + out_scale .* f(z)); deterministic and pure.
JointConfig kmp_infer(const KmpModel& model, const Eigen::VectorXd& z);
JointConfig kmp_infer(const KmpModel& model, const CommandSample& c);

/// Element i equals kmp_infer(models, samples[i]); parallelized over
/// contiguous chunks, layer-at-a-time within a chunk, bit-identical to
/// the single-sample path for any worker count.
std::vector<JointConfig> kmp_infer_batch(const KmpModel& model,
                                         const std::vector<CommandSample>& samples);

/// reference + residual with the residual first clipped to +/- cap per
/// joint, then the sum clamped to the limit box. Total function of its
/// inputs: never throws, non-finite residual entries are treated as 0.
JointConfig kmp_residual_apply(const JointConfig& reference, const JointConfig& residual,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               double cap = 0.3);

/// Binary model file (magic KMPM, float32 tensors, CRC-32 trailer);
/// load(save(m)) gives bit-identical inference.
void save_model(const KmpModel& model, const std::filesystem::path& path);
KmpModel load_model(const std::filesystem::path& path);
/// Additionally requires the stored variant to match.
KmpModel load_model(const std::filesystem::path& path, KmpVariant expected);

struct LatencyStats {
  double mean_us = 0;
  double median_us = 0;
};

struct ErrorStats {
  double median = 0;
  double p90 = 0;
};

struct BatchPoint {
  std::size_t batch_size = 0;
  double per_sample_us = 0;
};

struct KmpBenchReport {
  LatencyStats kmp_single;        // one encoded command per call
  LatencyStats solver_single;     // solve_ik at the iteration cap, one start
  std::vector<BatchPoint> kmp_batched;
  ErrorStats kmp_position, kmp_orientation;        // FK(prediction) vs command
  ErrorStats solver_position, solver_orientation;  // full-default solver vs command
  double speedup() const { return solver_single.median_us / kmp_single.median_us; }
};

/// Latency protocol: 100 warm-up calls, median of 1000 timed calls on a
/// monotonic clock; batched points time whole batches and divide.
/// Error distributions cover every test sample: the model against the
/// commands, and the solver at its full interactive defaults (the
/// iteration cap applies to the latency measurement only).
KmpBenchReport bench_kmp(const KinematicChain& chain, const KmpModel& model,
                         const std::vector<CommandSample>& test_samples,
                         const std::vector<std::size_t>& batch_sizes, int solver_iteration_cap = 5);

}  // namespace mkin

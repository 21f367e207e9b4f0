#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "manifold_kin/dataset.hpp"
#include "manifold_kin/errors.hpp"
#include "manifold_kin/kmp.hpp"

namespace mkin {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 1024;
  double learning_rate = 1e-3;  // peak; cosine-decayed to 0 over all steps
  double dropout_rate = 0.1;
  double validation_fraction = 0.1;  // in (0, 0.5]
  std::uint64_t seed = 0;
  int width = 0;  // 0 selects the variant default
};

/// Per-epoch mean squared joint-angle error (rad^2).
struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

struct TrainResult {
  KmpModel model;
  TrainReport report;
};

/// Thrown when a training loss turns non-finite. Carries the weights
/// as they stood at the end of the last epoch that completed with
/// finite losses (the freshly initialized model when none has).
class TrainingDivergedError : public Error {
public:
  TrainingDivergedError(const std::string& message, KmpModel checkpoint, TrainReport report)
      : Error(message), checkpoint_(std::move(checkpoint)), report_(std::move(report)) {}

  const KmpModel& checkpoint() const { return checkpoint_; }
  const TrainReport& report() const { return report_; }

private:
  KmpModel checkpoint_;
  TrainReport report_;
};

/// Double-precision mirror of the inference network, exposed so the
/// analytic gradients can be finite-difference checked. Layout matches
/// KmpModel: row-major weights, pre-layer-norm residual blocks.
struct KmpNetBlock {
  Eigen::VectorXd ln_gamma, ln_beta;
  Eigen::MatrixXd w1, w2;  // width x width
  Eigen::VectorXd b1, b2;
};

struct KmpNet {
  int input_dim = 0;
  int output_dim = 0;
  int width = 0;
  Eigen::MatrixXd w_in;  // width x input_dim
  Eigen::VectorXd b_in;
  std::vector<KmpNetBlock> blocks;
  Eigen::MatrixXd w_out;  // output_dim x width
  Eigen::VectorXd b_out;
};

/// Seeded He-style initialization; layer norms start at identity and
/// biases at zero. zero_decoder zeroes the output layer so the fresh
/// network predicts the normalization mean for every input.
KmpNet kmp_net_init(int input_dim, int output_dim, int width, int blocks, std::uint64_t seed,
                    bool zero_decoder);

/// Mean squared error of the network over rows of X against Y, plus
/// analytic gradients into `grad` (same shapes as `net`, overwritten).
/// `dropout_masks`, when given, holds one batch x width matrix per
/// block with entries 0 or 1/keep applied to each block's residual
/// branch (inverted dropout); pass nullptr for evaluation.
double kmp_net_loss_and_grad(const KmpNet& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             const std::vector<Eigen::MatrixXd>* dropout_masks, KmpNet* grad);

/// Evaluation-mode forward pass (no dropout), rows of X to rows of the
/// returned matrix.
Eigen::MatrixXd kmp_net_forward(const KmpNet& net, const Eigen::MatrixXd& X);

/// Trains a joint-configuration prior on a curated dataset with Adam
/// and cosine learning-rate decay. The loss is the mean squared
/// joint-angle error: outputs are centered on the dataset mean posture
/// (unit output scale), inputs are standardized. Deterministic for a
/// given (dataset, variant, config).
///
/// Throws ValidationError when the dataset was built for a different
/// chain, InputError for fewer than 1000 records or out-of-range
/// config values, TrainingDivergedError when a loss turns non-finite.
TrainResult kmp_train(const KinematicChain& chain, const Dataset& dataset, KmpVariant variant,
                      const TrainConfig& config = {});

}  // namespace mkin

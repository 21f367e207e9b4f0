#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "manifold_kin/chain.hpp"
#include "manifold_kin/hash.hpp"
#include "manifold_kin/ik.hpp"
#include "manifold_kin/pose.hpp"

namespace mkin {

struct Box {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

bool operator==(const Box& a, const Box& b);

/// Where mixture_sample drew a command from.
enum class SampleBranch : std::uint8_t { uniform, prior };

/// One end-effector command: base-frame target pose per active arm plus
/// the waist-regularization weight. `branch` is a sampling-provenance
/// tag, not part of the command's value (ignored by equality and
/// serialization).
struct CommandSample {
  std::optional<Pose> left_target;
  std::optional<Pose> right_target;
  double alpha = 1.0;
  SampleBranch branch = SampleBranch::uniform;
};

bool operator==(const CommandSample& a, const CommandSample& b);

/// Sampling region: two axis-aligned position boxes, mirror images of
/// each other across the y = 0 sagittal plane, full SO(3) orientation
/// coverage, and the fixed alpha range the solver accepts.
struct CommandSpace {
  Box left_volume;
  Box right_volume;
  double alpha_lo = 0.1;
  double alpha_hi = 10.0;
  // Extension, off by default: probability that a sample drops one arm's
  // target, exercising the single-arm pathway downstream.
  double unilateral_fraction = 0.0;

  /// Boxes sized to the shipped chain's reach: left x [0, 0.55],
  /// y [0, 0.55], z [-0.35, 0.45] meters in the base frame, right
  /// mirrored in y. Outer shells are intentionally unreachable; the
  /// IK-error prune removes them.
  static CommandSpace default_space();
};

bool operator==(const CommandSpace& a, const CommandSpace& b);

/// Throws InputError on zero-extent boxes, broken mirror symmetry, an
/// alpha range other than [0.1, 10], or unilateral_fraction outside [0, 1].
void validate_space(const CommandSpace& space);

struct DatasetRecord {
  CommandSample command;
  JointConfig q_solution;
  double ik_position_error = 0;     // max over active arms, meters
  double ik_orientation_error = 0;  // max over active arms, radians
  double manipulability_left = 0;
  double manipulability_right = 0;
};

bool operator==(const DatasetRecord& a, const DatasetRecord& b);

struct DatasetMeta {
  std::uint64_t seed = 0;
  Sha256 chain_hash{};
  CommandSpace space;
  double prune_threshold = 0;
  std::uint64_t raw_count = 0;       // samples drawn before any filtering
  std::uint64_t retained_count = 0;  // survivors of the IK-error prune
  std::uint64_t target_count = 0;    // requested curated size
};

bool operator==(const DatasetMeta& a, const DatasetMeta& b);

struct Dataset {
  DatasetMeta meta;
  std::vector<DatasetRecord> records;
};

bool operator==(const Dataset& a, const Dataset& b);

/// n commands: positions uniform in the volumes, orientations uniform
/// on SO(3), alpha uniform in the range. Deterministic in (space, seed)
/// and independent of the worker count (per-index seeding).
std::vector<CommandSample> sample_raw(const CommandSpace& space, std::size_t n, std::uint64_t seed);

struct CurateOptions {
  double prune_threshold = 0.02;  // meters of IK position error
  std::size_t target_count = 0;
  std::uint64_t seed = 0;
  // Record the sampling region in the dataset metadata; curate itself
  // only sees the drawn samples.
  CommandSpace space = CommandSpace::default_space();
  // Replaces the manipulability weights with 1: curation degenerates to
  // uniform subsampling of the survivors.
  bool uniform_weights = false;
  // Cheaper solver settings than the interactive defaults: failures are
  // pruned anyway and the oversampling absorbs the lost yield.
  IkOptions ik{.max_iterations = 60, .damping = 1e-3, .tolerance = 1e-3, .max_restarts = 2};
};

/// Solves IK for every raw command, discards solutions whose position
/// error exceeds the prune threshold, then resamples the survivors
/// without replacement down to target_count with probability
/// proportional to min(left, right manipulability) + 1e-6 (all
/// survivors are kept when fewer). Throws ValidationError with filter
/// statistics when nothing survives.
Dataset curate(const KinematicChain& chain, const std::vector<CommandSample>& raw,
               const CurateOptions& opts);

struct PerturbationScale {
  double position = 0.01;               // meters, Gaussian sigma per axis
  double rotation = 2.0 * 0.0174532925199432957692;  // radians, sigma per rotation-vector axis
};

/// Each draw is uniform from the space with probability beta, otherwise
/// a dataset record's command with Gaussian position noise and a small
/// random rotation applied to every present target; draws carry their
/// branch tag. Deterministic in (inputs, seed).
std::vector<CommandSample> mixture_sample(const CommandSpace& space, const Dataset& dataset,
                                          double beta, const PerturbationScale& scale,
                                          std::size_t n, std::uint64_t seed);

/// Binary dataset file: little-endian, CRC-32 trailer; read(write(d))
/// reproduces d and the bytes exactly.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
/// Additionally requires the stored chain hash to match.
Dataset read_dataset(const std::filesystem::path& path, const Sha256& expected_chain_hash);

}  // namespace mkin

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "manifold_kin/chain.hpp"
#include "manifold_kin/pose.hpp"

namespace mkin {

struct IkWeights {
  // Task weights are large relative to the posture regularizers so the
  // cost minimum sits within millimeters of a reachable target; the
  // regularizers only resolve redundancy.
  double position = 1e4;          // m^-2
  double orientation = 1e3;      // rad^-2
  double other_joints_reg = 0.2;  // fixed weight pulling non-waist joints to default
};

/// One IK query. Targets are base-frame poses; alpha in [0.1, 10]
/// weights the waist-deviation regularizer (low alpha frees the waist,
/// high alpha pins it). An absent target leaves that arm governed by
/// the other_joints_reg pull alone. Empty initial_q means the chain's
/// default posture.
struct IkProblem {
  std::optional<Pose> left_target;
  std::optional<Pose> right_target;
  double alpha = 1.0;
  JointConfig initial_q;
  IkWeights weights;
};

struct IkOptions {
  int max_iterations = 100;  // outer linearizations per start
  double damping = 1e-3;     // initial Levenberg-Marquardt lambda
  double tolerance = 1e-3;   // position convergence threshold, meters
  // Additional deterministic random-restart initializations tried when
  // the provided start fails to converge (pose targets have discrete
  // elbow-style local minima). 0 disables restarts.
  int max_restarts = 30;
};

struct IkResult {
  JointConfig q;
  std::optional<double> left_position_error;       // meters, active arms only
  std::optional<double> left_orientation_error;    // radians
  std::optional<double> right_position_error;
  std::optional<double> right_orientation_error;
  int iterations = 0;              // total across all starts
  bool converged = false;
  std::vector<double> cost_trace;  // accepted costs of the winning start, from its initial point
  std::string error;               // batch_solve: per-element failure message, empty on success

  double max_position_error() const;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) minimization of
///   sum_active( w_pos ||dp||^2 + w_rot ||dtheta||^2 )
///   + alpha ||q_waist - default||^2 + 0.2 ||q_other - default||^2
/// with every iterate clamped to joint limits. `converged` means the
/// position error of every active arm fell below opts.tolerance.
IkResult solve_ik(const KinematicChain& chain, const IkProblem& problem, const IkOptions& opts = {});

/// Element i equals solve_ik(problems[i]); order preserved. Invalid
/// elements report through IkResult::error instead of aborting the
/// batch. Parallelized over elements; results are independent of the
/// worker count.
std::vector<IkResult> batch_solve(const KinematicChain& chain, const std::vector<IkProblem>& problems,
                                  const IkOptions& opts = {});

struct LatencyRow {
  int iteration_cap = 0;
  double mean_us = 0;
  double median_us = 0;
};

/// Wall-clock latency of solve_ik at each iteration cap, cycling over
/// `problems`: `solves` timed solves per cap after a short warm-up.
std::vector<LatencyRow> solver_latency_profile(const KinematicChain& chain,
                                               const std::vector<IkProblem>& problems,
                                               const std::vector<int>& iteration_caps,
                                               int solves = 1000);

}  // namespace mkin

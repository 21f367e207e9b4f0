#pragma once

#include <Eigen/Core>

#include "manifold_kin/chain.hpp"
#include "manifold_kin/pose.hpp"

namespace mkin {

/// Knee flexion range of the reduced leg: 0 = fully extended.
struct KneeLimits {
  double lower = 0.0;
  double upper = 2.9;
};

/// Which arms the current command activates. At least one is active.
struct ArmMask {
  bool left = true;
  bool right = true;
};

struct RewardParams {
  double sigma_kmp = 0.1;  // rad
  KneeLimits knee_limits;
  // exp-tracking sigmas, one per channel
  double sigma_ee_pos = 0.05;    // m
  double sigma_ee_rot = 0.2;     // rad
  double sigma_lin_vel = 0.25;   // m/s
  double sigma_ang_vel = 0.3;    // rad/s
  double sigma_height = 0.06;    // m
  int ramp_steps = 25;           // post-resample schedule length
  // zero-velocity gate for the height term
  double zero_vel_linear = 0.05;   // m/s
  double zero_vel_angular = 0.1;   // rad/s
};

/// Throws InputError when a sigma or gate is non-positive, the knee
/// limits are out of order, or the ramp is shorter than one step.
void validate_reward_params(const RewardParams& params);

/// exp(-||q_up - q_hat_up||^2 / (n_up * sigma^2)), in (0, 1].
/// n_up must equal the configuration dimension; sigma must be > 0.
double reward_kmp(const JointConfig& q_up, const JointConfig& q_hat_up, double sigma_kmp,
                  int n_up);

/// exp(-error^2 / sigma^2), in (0, 1]; 1 exactly at zero error.
double exp_tracking_reward(double error_norm, double sigma);

/// Normalized distance to the flexion (upper) limit, in [0, 1].
double knee_flexion_margin(double knee_angle, const KneeLimits& limits);
/// Normalized distance to the extension (lower) limit, in [0, 1].
double knee_extension_margin(double knee_angle, const KneeLimits& limits);

/// Knee flexion of the reduced two-link leg (thigh = shank = 0.3 m)
/// standing at base height `h`: theta = pi - 2 asin(h_leg / 0.6) with
/// h_leg = h - 0.18 (the non-leg share of standing height), clamped to
/// the limits. Height 0.78 m gives a straight knee, 0.30 m a deep bend.
double knee_angle_from_height(double h, const KneeLimits& limits);

/// Signed height error weighted by the mean knee margin on the side
/// the correction would push into: flexion margin when too high,
/// extension margin when too low. Margins of zero null the error.
double knee_aware_height_error(double h, double h_des, const Eigen::Vector2d& knee_angles,
                               const KneeLimits& limits);

/// True when the commanded planar and yaw rates are inside the
/// zero-velocity gate, i.e. the height term should be active.
bool zero_velocity_gate(const Eigen::Vector3d& v_cmd, const RewardParams& params);

/// Linear ramp 0 -> 1 over `ramp_steps` control steps after a command
/// resample, applied to the reference-tracking reward.
double post_resample_scale(int steps_since_resample, int ramp_steps = 25);

struct SmoothnessPenalties {
  double action_rate = 0;       // ||a_t - a_{t-1}||^2
  double torque_variation = 0;  // ||tau_t - tau_{t-1}||^2
  double joint_velocity = 0;    // ||qdot||^2
};

/// Quadratic regularizers; each is >= 0 and zero exactly on its null set.
SmoothnessPenalties smoothness_penalties(const Eigen::VectorXd& action,
                                         const Eigen::VectorXd& prev_action,
                                         const Eigen::VectorXd& torque,
                                         const Eigen::VectorXd& prev_torque,
                                         const Eigen::VectorXd& joint_vel);

/// Scored components of the scripted commander's objective.
struct CommanderScore {
  double base_distance_penalty = 0;      // planar base-to-target distance, m
  double heading_alignment = 0;          // cosine, [-1, 1]
  double velocity_alignment = 0;         // cosine, [-1, 1]
  double ee_tracking_reward = 0;         // (0, 1]
  double inactive_deviation_penalty = 0; // squared neutral-pose deviation
};

/// Scores a base pose and velocity command against the active target
/// centroid: distance penalty, heading / commanded-velocity alignment
/// with the target direction, end-effector tracking reward, and the
/// inactive arm's deviation from neutral (zero when both arms are
/// active). v_cmd = (vx, vy, wz) in the base frame. A base standing on
/// the target counts as aligned; a zero planar velocity has alignment 0.
CommanderScore commander_objective(const Pose& base, const Eigen::Vector3d& v_cmd,
                                   const Eigen::Vector3d& target_center, double ee_error,
                                   ArmMask mask, double inactive_arm_deviation,
                                   const RewardParams& params);

}  // namespace mkin

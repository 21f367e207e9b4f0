#include "manifold_kin/rewards.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <string>

#include "manifold_kin/errors.hpp"

namespace mkin {

namespace {

constexpr double kThigh = 0.3;       // m
constexpr double kShank = 0.3;       // m
constexpr double kLegOffset = 0.18;  // standing height minus the extended leg

void check_sigma(double sigma, const char* name) {
  if (!(sigma > 0) || !std::isfinite(sigma)) {
    throw InputError(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

void validate_reward_params(const RewardParams& p) {
  check_sigma(p.sigma_kmp, "sigma_kmp");
  check_sigma(p.sigma_ee_pos, "sigma_ee_pos");
  check_sigma(p.sigma_ee_rot, "sigma_ee_rot");
  check_sigma(p.sigma_lin_vel, "sigma_lin_vel");
  check_sigma(p.sigma_ang_vel, "sigma_ang_vel");
  check_sigma(p.sigma_height, "sigma_height");
  check_sigma(p.zero_vel_linear, "zero_vel_linear");
  check_sigma(p.zero_vel_angular, "zero_vel_angular");
  if (!(p.knee_limits.lower < p.knee_limits.upper)) {
    throw InputError("knee limits must satisfy lower < upper");
  }
  if (p.ramp_steps < 1) throw InputError("ramp_steps must be >= 1");
}

double reward_kmp(const JointConfig& q_up, const JointConfig& q_hat_up, double sigma_kmp,
                  int n_up) {
  check_sigma(sigma_kmp, "sigma_kmp");
  if (q_up.size() != q_hat_up.size()) throw InputError("reward_kmp: dimension mismatch");
  if (n_up != q_up.size()) {
    throw InputError("reward_kmp: n_up = " + std::to_string(n_up) + " but configurations have " +
                     std::to_string(q_up.size()) + " joints");
  }
  const double sq = (q_up - q_hat_up).squaredNorm();
  return std::exp(-sq / (static_cast<double>(n_up) * sigma_kmp * sigma_kmp));
}

double exp_tracking_reward(double error_norm, double sigma) {
  check_sigma(sigma, "sigma");
  return std::exp(-(error_norm * error_norm) / (sigma * sigma));
}

double knee_flexion_margin(double knee_angle, const KneeLimits& limits) {
  const double range = limits.upper - limits.lower;
  return std::clamp((limits.upper - knee_angle) / range, 0.0, 1.0);
}

double knee_extension_margin(double knee_angle, const KneeLimits& limits) {
  const double range = limits.upper - limits.lower;
  return std::clamp((knee_angle - limits.lower) / range, 0.0, 1.0);
}

double knee_angle_from_height(double h, const KneeLimits& limits) {
  const double ratio = std::clamp((h - kLegOffset) / (kThigh + kShank), 0.0, 1.0);
  const double theta = M_PI - 2.0 * std::asin(ratio);
  return std::clamp(theta, limits.lower, limits.upper);
}

double knee_aware_height_error(double h, double h_des, const Eigen::Vector2d& knee_angles,
                               const KneeLimits& limits) {
  if (!(limits.lower < limits.upper)) throw InputError("knee limits must satisfy lower < upper");
  const double err = h - h_des;
  if (err == 0) return 0;
  double margin = 0;
  for (int i = 0; i < 2; ++i) {
    margin += err > 0 ? knee_flexion_margin(knee_angles[i], limits)
                      : knee_extension_margin(knee_angles[i], limits);
  }
  return err * (margin / 2.0);
}

bool zero_velocity_gate(const Eigen::Vector3d& v_cmd, const RewardParams& params) {
  return v_cmd.head<2>().norm() < params.zero_vel_linear &&
         std::abs(v_cmd[2]) < params.zero_vel_angular;
}

double post_resample_scale(int steps_since_resample, int ramp_steps) {
  if (ramp_steps < 1) throw InputError("ramp_steps must be >= 1");
  return std::clamp(static_cast<double>(steps_since_resample) / static_cast<double>(ramp_steps),
                    0.0, 1.0);
}

SmoothnessPenalties smoothness_penalties(const Eigen::VectorXd& action,
                                         const Eigen::VectorXd& prev_action,
                                         const Eigen::VectorXd& torque,
                                         const Eigen::VectorXd& prev_torque,
                                         const Eigen::VectorXd& joint_vel) {
  if (action.size() != prev_action.size() || torque.size() != prev_torque.size()) {
    throw InputError("smoothness_penalties: dimension mismatch");
  }
  SmoothnessPenalties p;
  p.action_rate = (action - prev_action).squaredNorm();
  p.torque_variation = (torque - prev_torque).squaredNorm();
  p.joint_velocity = joint_vel.squaredNorm();
  return p;
}

CommanderScore commander_objective(const Pose& base, const Eigen::Vector3d& v_cmd,
                                   const Eigen::Vector3d& target_center, double ee_error,
                                   ArmMask mask, double inactive_arm_deviation,
                                   const RewardParams& params) {
  if (!mask.left && !mask.right) {
    throw InputError("commander_objective: at least one arm must be active");
  }
  validate_reward_params(params);

  CommanderScore s;
  const Eigen::Vector2d to_target = (target_center - base.position).head<2>();
  s.base_distance_penalty = to_target.norm();

  const Eigen::Vector3d forward3 = base.orientation * Eigen::Vector3d::UnitX();
  const Eigen::Vector2d heading = forward3.head<2>();
  const Eigen::Vector2d v_world =
      heading.norm() > 1e-12
          ? Eigen::Vector2d(Eigen::Rotation2Dd(std::atan2(heading.y(), heading.x())) *
                            v_cmd.head<2>())
          : Eigen::Vector2d(v_cmd.head<2>());

  if (s.base_distance_penalty < 1e-12) {
    s.heading_alignment = 1.0;  // standing on the target counts as aligned
    s.velocity_alignment = 0.0;
  } else {
    const Eigen::Vector2d dir = to_target / s.base_distance_penalty;
    s.heading_alignment = heading.norm() > 1e-12 ? heading.normalized().dot(dir) : 0.0;
    s.velocity_alignment = v_world.norm() > 1e-12 ? v_world.normalized().dot(dir) : 0.0;
  }

  s.ee_tracking_reward = exp_tracking_reward(ee_error, params.sigma_ee_pos);
  const bool has_inactive = !mask.left || !mask.right;
  s.inactive_deviation_penalty =
      has_inactive ? inactive_arm_deviation * inactive_arm_deviation : 0.0;
  return s;
}

}  // namespace mkin

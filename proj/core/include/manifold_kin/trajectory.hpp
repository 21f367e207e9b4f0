#pragma once

#include <Eigen/Core>
#include <string>

#include "manifold_kin/pose.hpp"

namespace mkin {

enum class TrajectoryShape { circle, star, heart, spiral, rectangle, square };

std::string shape_name(TrajectoryShape shape);
/// Throws InputError for an unknown name.
TrajectoryShape parse_shape(const std::string& name);

/// A figure traced on a vertical world plane at constant speed along
/// arc length. `facing` is the planar unit normal of that plane,
/// pointing toward the side the robot stands on; the in-plane axes are
/// horizontal (facing rotated +90 degrees in plan) and world-up.
struct TrajectorySpec {
  TrajectoryShape shape = TrajectoryShape::circle;
  double scale = 0.15;                      // m, characteristic half-size
  Eigen::Vector3d anchor{0.5, 0.0, 0.9};    // world center of the figure
  Eigen::Vector2d facing{-1.0, 0.0};        // plane normal toward the robot
  int duration = 1000;                      // steps for one full trace
  double dt = 0.02;                         // s per step
};

/// Throws InputError when the spec violates its invariants
/// (non-positive scale/duration/dt, non-unit facing, non-finite anchor).
void validate_trajectory(const TrajectorySpec& spec);

/// Arc length of one full trace, metres.
double path_length(TrajectoryShape shape, double scale);

/// Steps for one trace at `speed` m/s: round(path_length / (speed * dt)).
int duration_for(TrajectoryShape shape, double scale, double speed, double dt);

/// World target pose at `step`, 0 <= step <= duration. Closed shapes
/// return the identical pose at step 0 and step = duration. The
/// orientation is constant palm-forward: the tool axis points into the
/// traced plane.
Pose trajectory_sampler(const TrajectorySpec& spec, int step);

}  // namespace mkin

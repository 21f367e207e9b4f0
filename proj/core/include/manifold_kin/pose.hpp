#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mkin {

/// Rigid transform in SE(3). Orientation is kept normalized with a
/// canonical sign (w >= 0) after every operation so that serialized
/// poses compare and hash deterministically.
struct Pose {
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }

  /// Normalizes the quaternion and flips its sign so w >= 0.
  void canonicalize();

  /// this ∘ other: apply `other` in the frame of `this`.
  Pose compose(const Pose& other) const;

  Pose inverse() const;

  /// Transforms a point from the local frame to the parent frame.
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return orientation * p + position; }

  bool is_finite() const;
};

Pose make_pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& p);

/// Euclidean distance between positions.
double position_error(const Pose& a, const Pose& b);

/// Geodesic rotation angle between orientations, in [0, pi].
double orientation_error(const Pose& a, const Pose& b);

/// Rotation vector (axis * angle) taking a's orientation to b's,
/// expressed in the common parent frame.
Eigen::Vector3d orientation_delta(const Pose& a, const Pose& b);

/// First two columns of the rotation matrix: the standard
/// continuous 6-scalar orientation encoding for regression.
Eigen::Matrix<double, 6, 1> rotation_to_6d(const Eigen::Quaterniond& q);

/// Gram-Schmidt decode of the 6-scalar encoding back to a rotation.
Eigen::Quaterniond rotation_from_6d(const Eigen::Matrix<double, 6, 1>& v);

/// Rotation about a unit axis by `angle` radians.
Eigen::Quaterniond axis_rotation(const Eigen::Vector3d& axis, double angle);

}  // namespace mkin

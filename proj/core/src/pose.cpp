#include "manifold_kin/pose.hpp"

#include <cmath>

namespace mkin {

void Pose::canonicalize() {
  orientation.normalize();
  if (orientation.w() < 0.0) orientation.coeffs() = -orientation.coeffs();
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  out.orientation = orientation * other.orientation;
  out.position = orientation * other.position + position;
  out.canonicalize();
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.orientation = orientation.conjugate();
  out.position = -(out.orientation * position);
  out.canonicalize();
  return out;
}

bool Pose::is_finite() const {
  return position.allFinite() && orientation.coeffs().allFinite();
}

Pose make_pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& p) {
  Pose out;
  out.orientation = q;
  out.position = p;
  out.canonicalize();
  return out;
}

double position_error(const Pose& a, const Pose& b) {
  return (a.position - b.position).norm();
}

double orientation_error(const Pose& a, const Pose& b) {
  const Eigen::Quaterniond d = a.orientation.conjugate() * b.orientation;
  const double w = std::min(1.0, std::abs(d.w()));
  return 2.0 * std::acos(w);
}

Eigen::Vector3d orientation_delta(const Pose& a, const Pose& b) {
  Eigen::Quaterniond d = b.orientation * a.orientation.conjugate();
  if (d.w() < 0.0) d.coeffs() = -d.coeffs();
  const double vec_norm = d.vec().norm();
  if (vec_norm < 1e-12) return Eigen::Vector3d::Zero();
  const double angle = 2.0 * std::atan2(vec_norm, d.w());
  return d.vec() * (angle / vec_norm);
}

Eigen::Matrix<double, 6, 1> rotation_to_6d(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d r = q.toRotationMatrix();
  Eigen::Matrix<double, 6, 1> v;
  v.head<3>() = r.col(0);
  v.tail<3>() = r.col(1);
  return v;
}

Eigen::Quaterniond rotation_from_6d(const Eigen::Matrix<double, 6, 1>& v) {
  Eigen::Vector3d a = v.head<3>();
  Eigen::Vector3d b = v.tail<3>();
  a.normalize();
  b = (b - a.dot(b) * a).normalized();
  Eigen::Matrix3d r;
  r.col(0) = a;
  r.col(1) = b;
  r.col(2) = a.cross(b);
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Eigen::Quaterniond axis_rotation(const Eigen::Vector3d& axis, double angle) {
  Eigen::Quaterniond q(Eigen::AngleAxisd(angle, axis));
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace mkin

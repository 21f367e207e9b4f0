#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "manifold_kin/hash.hpp"
#include "manifold_kin/pose.hpp"

namespace mkin {

/// Joint configuration: one angle per chain joint, in chain order.
using JointConfig = Eigen::VectorXd;

enum class Side { left, right };

struct JointSpec {
  std::string name;
  std::string parent;      // parent link
  std::string child;       // link created by this joint
  Eigen::Vector3d axis;    // unit rotation axis, child-frame
  Pose origin;             // fixed offset from parent link to joint frame
  double lower_limit = 0;  // radians
  double upper_limit = 0;
  double default_angle = 0;
};

struct JointGroups {
  std::vector<int> waist;      // exactly 3
  std::vector<int> left_arm;   // exactly 7
  std::vector<int> right_arm;  // exactly 7
};

/// Reduced upper-body model: a revolute-joint tree rooted at the base
/// link (the floating base itself: planar position, yaw, and height,
/// which live in the simulator, not here). Immutable after load.
struct KinematicChain {
  std::vector<JointSpec> joints;  // topologically ordered
  JointGroups groups;
  std::string base_link;
  std::string left_ee_link;
  std::string right_ee_link;

  // Derived at load time.
  std::vector<int> parent_joint;      // index of parent joint, -1 if parent is base
  int left_ee_joint = -1;             // joint whose child link is the end effector
  int right_ee_joint = -1;
  std::vector<bool> on_left_path;     // joint lies on base -> left EE path
  std::vector<bool> on_right_path;
  Eigen::VectorXd lower;              // cached limit/default vectors
  Eigen::VectorXd upper;
  Eigen::VectorXd defaults;
  Sha256 hash{};                      // of the canonical serialized form

  int joint_count() const { return static_cast<int>(joints.size()); }
  int index_of(const std::string& joint_name) const;  // -1 if absent
  int ee_joint(Side side) const { return side == Side::left ? left_ee_joint : right_ee_joint; }
  const std::vector<int>& arm_indices(Side side) const {
    return side == Side::left ? groups.left_arm : groups.right_arm;
  }
};

/// Loads and validates a chain description (JSON, see the shipped
/// asset for the schema). Throws ParseError for malformed files and
/// ValidationError for invariant violations, naming the joint.
KinematicChain load_chain(const std::filesystem::path& path);
KinematicChain parse_chain(const std::string& json_text);

/// Canonical compact serialization; its SHA-256 is the chain hash
/// embedded in dataset and model artifacts.
std::string canonical_chain_json(const KinematicChain& chain);

struct FkResult {
  Pose left;                     // left end-effector pose
  Pose right;                    // right end-effector pose
  std::vector<Pose> link_poses;  // child link of joint i, same frame as `base`

  const Pose& ee(Side side) const { return side == Side::left ? left : right; }
};

/// Forward kinematics. All returned poses are expressed in the frame
/// `base` is given in: FK(q, G ∘ base) = G ∘ FK(q, base).
FkResult forward_kinematics(const KinematicChain& chain, const JointConfig& q,
                            const Pose& base = Pose::identity());

/// Geometric Jacobian of one end effector, 6 x joint_count: rows 0-2
/// linear (m/rad), rows 3-5 angular (rad/rad), base frame, columns in
/// chain joint order. Off-path columns are exactly zero.
Eigen::Matrix<double, 6, Eigen::Dynamic> geometric_jacobian(const KinematicChain& chain,
                                                            const JointConfig& q, Side ee);

/// sqrt(det(J Jᵀ)) with negative round-off determinants clamped to 0.
/// Accepts the 3xN position block or the full 6xN matrix.
double manipulability(const Eigen::MatrixXd& J);

/// Position rows of the end effector's own arm columns (3x7): the
/// per-arm dexterity measure used to weight dataset sampling.
Eigen::MatrixXd arm_position_jacobian(const KinematicChain& chain,
                                      const Eigen::Matrix<double, 6, Eigen::Dynamic>& J, Side ee);

JointConfig clamp_to_limits(const KinematicChain& chain, const JointConfig& q);

}  // namespace mkin

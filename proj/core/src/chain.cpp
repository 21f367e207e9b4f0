#include "manifold_kin/chain.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "manifold_kin/errors.hpp"
#include "manifold_kin/io.hpp"

namespace mkin {

using nlohmann::json;

namespace {

Eigen::Vector3d parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(where + ": expected an array of 3 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Eigen::Quaterniond parse_quat(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ParseError(where + ": expected [w, x, y, z]");
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw ParseError(where + ": expected [w, x, y, z]");
  }
  Eigen::Quaterniond q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                       j[3].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-6) throw ValidationError(where + ": quaternion is not unit length");
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

std::vector<int> parse_group(const json& j, const std::string& name,
                             const std::unordered_map<std::string, int>& joint_index) {
  if (!j.contains(name)) throw ParseError("groups: missing '" + name + "'");
  const json& g = j.at(name);
  if (!g.is_array()) throw ParseError("groups." + name + ": expected an array of joint names");
  std::vector<int> out;
  for (const auto& item : g) {
    if (!item.is_string()) throw ParseError("groups." + name + ": expected joint names");
    const auto it = joint_index.find(item.get<std::string>());
    if (it == joint_index.end()) {
      throw ValidationError("groups." + name + ": unknown joint '" + item.get<std::string>() + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void finalize(KinematicChain& chain) {
  const int n = chain.joint_count();

  std::unordered_map<std::string, int> link_owner;  // link name -> joint that creates it
  for (int i = 0; i < n; ++i) {
    const auto& js = chain.joints[i];
    if (js.child == chain.base_link) {
      throw ValidationError("joint '" + js.name + "': child link shadows the base link");
    }
    if (!link_owner.emplace(js.child, i).second) {
      throw ValidationError("joint '" + js.name + "': duplicate child link '" + js.child + "'");
    }
  }

  // Resolve parents and verify the graph is a tree rooted at the base:
  // every joint's parent link must either be the base or be created by
  // another joint, and following parents must terminate at the base.
  chain.parent_joint.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    const auto& js = chain.joints[i];
    if (js.parent == chain.base_link) continue;
    const auto it = link_owner.find(js.parent);
    if (it == link_owner.end()) {
      throw ValidationError("joint '" + js.name + "': unknown parent link '" + js.parent + "'");
    }
    chain.parent_joint[i] = it->second;
  }
  for (int i = 0; i < n; ++i) {
    int hops = 0;
    for (int j = chain.parent_joint[i]; j != -1; j = chain.parent_joint[j]) {
      if (++hops > n) {
        throw ValidationError("joint '" + chain.joints[i].name + "': cycle in parent links");
      }
    }
  }

  // Reorder topologically (parents before children) so FK is one pass.
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> placed(n, 0);
  while (static_cast<int>(order.size()) < n) {
    bool progressed = false;
    for (int i = 0; i < n; ++i) {
      if (placed[i]) continue;
      const int p = chain.parent_joint[i];
      if (p == -1 || placed[p]) {
        order.push_back(i);
        placed[i] = 1;
        progressed = true;
      }
    }
    if (!progressed) throw ValidationError("chain: cycle in parent links");
  }
  std::vector<int> new_index(n);
  for (int k = 0; k < n; ++k) new_index[order[k]] = k;
  {
    std::vector<JointSpec> joints;
    joints.reserve(n);
    std::vector<int> parents(n);
    for (int k = 0; k < n; ++k) {
      joints.push_back(chain.joints[order[k]]);
      const int p = chain.parent_joint[order[k]];
      parents[k] = p == -1 ? -1 : new_index[p];
    }
    chain.joints = std::move(joints);
    chain.parent_joint = std::move(parents);
    for (auto& g : {&chain.groups.waist, &chain.groups.left_arm, &chain.groups.right_arm}) {
      for (auto& idx : *g) idx = new_index[idx];
    }
  }

  // Per-joint invariants.
  for (auto& js : chain.joints) {
    if (std::abs(js.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("joint '" + js.name + "': axis is not unit length");
    }
    if (!(js.lower_limit <= js.default_angle && js.default_angle <= js.upper_limit)) {
      throw ValidationError("joint '" + js.name + "': default outside [lower, upper]");
    }
    if (!(js.lower_limit <= js.upper_limit)) {
      throw ValidationError("joint '" + js.name + "': lower_limit > upper_limit");
    }
  }

  // Group partition: waist 3, each arm 7.
  const auto check_group = [](const std::vector<int>& g, const char* name, std::size_t expected) {
    if (g.size() != expected) {
      throw ValidationError(std::string("groups.") + name + ": expected " +
                            std::to_string(expected) + " joints, got " + std::to_string(g.size()));
    }
  };
  check_group(chain.groups.waist, "waist", 3);
  check_group(chain.groups.left_arm, "left_arm", 7);
  check_group(chain.groups.right_arm, "right_arm", 7);

  // End effectors.
  std::unordered_map<std::string, int> owner;
  for (int i = 0; i < n; ++i) owner[chain.joints[i].child] = i;
  const auto find_ee = [&](const std::string& link, const char* side) {
    const auto it = owner.find(link);
    if (it == owner.end()) {
      throw ValidationError(std::string("end_effectors.") + side + ": unknown link '" + link + "'");
    }
    return it->second;
  };
  chain.left_ee_joint = find_ee(chain.left_ee_link, "left");
  chain.right_ee_joint = find_ee(chain.right_ee_link, "right");

  const auto mark_path = [&](int ee_joint) {
    std::vector<bool> on(n, false);
    for (int j = ee_joint; j != -1; j = chain.parent_joint[j]) on[j] = true;
    return on;
  };
  chain.on_left_path = mark_path(chain.left_ee_joint);
  chain.on_right_path = mark_path(chain.right_ee_joint);

  chain.lower.resize(n);
  chain.upper.resize(n);
  chain.defaults.resize(n);
  for (int i = 0; i < n; ++i) {
    chain.lower[i] = chain.joints[i].lower_limit;
    chain.upper[i] = chain.joints[i].upper_limit;
    chain.defaults[i] = chain.joints[i].default_angle;
  }

  const std::string canon = canonical_chain_json(chain);
  chain.hash = sha256(canon);
}

}  // namespace

int KinematicChain::index_of(const std::string& joint_name) const {
  for (int i = 0; i < joint_count(); ++i) {
    if (joints[i].name == joint_name) return i;
  }
  return -1;
}

KinematicChain parse_chain(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("chain file: ") + e.what());
  }

  KinematicChain chain;
  try {
    if (!root.contains("joints") || !root["joints"].is_array() || root["joints"].empty()) {
      throw ParseError("chain file: missing non-empty 'joints' array");
    }
    chain.base_link = root.value("base_link", std::string("base"));

    std::unordered_map<std::string, int> joint_index;
    for (const auto& j : root["joints"]) {
      JointSpec spec;
      spec.name = j.at("name").get<std::string>();
      spec.parent = j.at("parent").get<std::string>();
      spec.child = j.at("child").get<std::string>();
      spec.axis = parse_vec3(j.at("axis"), "joint '" + spec.name + "' axis");
      const json& origin = j.at("origin");
      spec.origin.position = parse_vec3(origin.at("xyz"), "joint '" + spec.name + "' origin.xyz");
      if (origin.contains("quat")) {
        spec.origin.orientation = parse_quat(origin.at("quat"), "joint '" + spec.name + "' origin.quat");
      }
      spec.lower_limit = j.at("lower_limit").get<double>();
      spec.upper_limit = j.at("upper_limit").get<double>();
      spec.default_angle = j.at("default").get<double>();
      if (!joint_index.emplace(spec.name, static_cast<int>(chain.joints.size())).second) {
        throw ValidationError("joint '" + spec.name + "': duplicate joint name");
      }
      chain.joints.push_back(std::move(spec));
    }

    if (!root.contains("groups")) throw ParseError("chain file: missing 'groups'");
    chain.groups.waist = parse_group(root["groups"], "waist", joint_index);
    chain.groups.left_arm = parse_group(root["groups"], "left_arm", joint_index);
    chain.groups.right_arm = parse_group(root["groups"], "right_arm", joint_index);

    if (!root.contains("end_effectors")) throw ParseError("chain file: missing 'end_effectors'");
    chain.left_ee_link = root["end_effectors"].at("left").get<std::string>();
    chain.right_ee_link = root["end_effectors"].at("right").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("chain file: ") + e.what());
  }

  finalize(chain);
  return chain;
}

KinematicChain load_chain(const std::filesystem::path& path) {
  return parse_chain(read_text_file(path));
}

std::string canonical_chain_json(const KinematicChain& chain) {
  // Compact, key-ordered, shortest-round-trip numbers: whitespace and
  // float formatting of the source file do not affect the hash.
  std::string s = "{\"base_link\":\"" + chain.base_link + "\",\"joints\":[";
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    const auto& j = chain.joints[i];
    if (i) s += ',';
    s += "{\"name\":\"" + j.name + "\",\"parent\":\"" + j.parent + "\",\"child\":\"" + j.child +
         "\",\"axis\":[" + format_double(j.axis.x()) + ',' + format_double(j.axis.y()) + ',' +
         format_double(j.axis.z()) + "],\"xyz\":[" + format_double(j.origin.position.x()) + ',' +
         format_double(j.origin.position.y()) + ',' + format_double(j.origin.position.z()) +
         "],\"quat\":[" + format_double(j.origin.orientation.w()) + ',' +
         format_double(j.origin.orientation.x()) + ',' + format_double(j.origin.orientation.y()) +
         ',' + format_double(j.origin.orientation.z()) + "],\"limits\":[" +
         format_double(j.lower_limit) + ',' + format_double(j.upper_limit) + "],\"default\":" +
         format_double(j.default_angle) + '}';
  }
  const auto group = [&](const std::vector<int>& g) {
    std::string out = "[";
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i) out += ',';
      out += '"' + chain.joints[g[i]].name + '"';
    }
    return out + ']';
  };
  s += "],\"groups\":{\"waist\":" + group(chain.groups.waist) +
       ",\"left_arm\":" + group(chain.groups.left_arm) +
       ",\"right_arm\":" + group(chain.groups.right_arm) + "},\"end_effectors\":{\"left\":\"" +
       chain.left_ee_link + "\",\"right\":\"" + chain.right_ee_link + "\"}}";
  return s;
}

FkResult forward_kinematics(const KinematicChain& chain, const JointConfig& q, const Pose& base) {
  const int n = chain.joint_count();
  if (q.size() != n) throw InputError("forward_kinematics: q has wrong dimension");

  FkResult out;
  out.link_poses.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& js = chain.joints[i];
    const Pose& parent = chain.parent_joint[i] == -1 ? base : out.link_poses[chain.parent_joint[i]];
    Pose frame = parent.compose(js.origin);
    Pose rotated;
    rotated.orientation = frame.orientation * axis_rotation(js.axis, q[i]);
    rotated.position = frame.position;
    rotated.canonicalize();
    out.link_poses[i] = rotated;
  }
  out.left = out.link_poses[chain.left_ee_joint];
  out.right = out.link_poses[chain.right_ee_joint];
  return out;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> geometric_jacobian(const KinematicChain& chain,
                                                            const JointConfig& q, Side ee) {
  const int n = chain.joint_count();
  if (q.size() != n) throw InputError("geometric_jacobian: q has wrong dimension");

  const FkResult fk = forward_kinematics(chain, q);
  const int ee_joint = chain.ee_joint(ee);
  const auto& on_path = ee == Side::left ? chain.on_left_path : chain.on_right_path;
  const Eigen::Vector3d p_ee = fk.link_poses[ee_joint].position;

  Eigen::Matrix<double, 6, Eigen::Dynamic> J(6, n);
  J.setZero();
  for (int i = 0; i < n; ++i) {
    if (!on_path[i]) continue;
    const Eigen::Vector3d z = fk.link_poses[i].orientation * chain.joints[i].axis;
    const Eigen::Vector3d p = fk.link_poses[i].position;
    J.block<3, 1>(0, i) = z.cross(p_ee - p);
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

double manipulability(const Eigen::MatrixXd& J) {
  const Eigen::MatrixXd gram = J * J.transpose();
  const double det = gram.determinant();
  return det > 0.0 ? std::sqrt(det) : 0.0;
}

Eigen::MatrixXd arm_position_jacobian(const KinematicChain& chain,
                                      const Eigen::Matrix<double, 6, Eigen::Dynamic>& J, Side ee) {
  const auto& arm = chain.arm_indices(ee);
  Eigen::MatrixXd block(3, static_cast<int>(arm.size()));
  for (std::size_t k = 0; k < arm.size(); ++k) block.col(static_cast<int>(k)) = J.block<3, 1>(0, arm[k]);
  return block;
}

JointConfig clamp_to_limits(const KinematicChain& chain, const JointConfig& q) {
  if (q.size() != chain.joint_count()) throw InputError("clamp_to_limits: q has wrong dimension");
  return q.cwiseMax(chain.lower).cwiseMin(chain.upper);
}

}  // namespace mkin

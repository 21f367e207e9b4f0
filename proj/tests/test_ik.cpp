#include <doctest.h>

#include <cmath>

#include "manifold_kin/chain.hpp"
#include "manifold_kin/errors.hpp"
#include "manifold_kin/ik.hpp"
#include "manifold_kin/rng.hpp"

using namespace mkin;

namespace {

KinematicChain& test_chain() {
  static KinematicChain chain = load_chain(MKIN_ASSET_DIR "/humanoid_upper.json");
  return chain;
}

JointConfig random_in_limit_config(const KinematicChain& chain, Rng& rng) {
  JointConfig q(chain.joint_count());
  for (int i = 0; i < chain.joint_count(); ++i) {
    q[i] = rng.uniform(chain.joints[i].lower_limit, chain.joints[i].upper_limit);
  }
  return q;
}

double waist_deviation(const KinematicChain& chain, const JointConfig& q) {
  double s = 0;
  for (int i : chain.groups.waist) {
    const double d = q[i] - chain.defaults[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE_BEGIN("ik");

TEST_CASE("fk round trip: random reachable targets are recovered") {
  const KinematicChain& chain = test_chain();
  Rng rng(31);

  const int trials = 200;
  int good = 0;
  for (int t = 0; t < trials; ++t) {
    const JointConfig q_rand = random_in_limit_config(chain, rng);
    const FkResult fk = forward_kinematics(chain, q_rand);

    IkProblem p;
    p.left_target = fk.left;
    p.right_target = fk.right;
    p.alpha = 1.0;
    IkOptions opts;
    opts.max_iterations = 100;

    const IkResult r = solve_ik(chain, p, opts);
    REQUIRE(r.error.empty());
    if (r.max_position_error() < 5e-3 && *r.left_orientation_error < 2.0 * M_PI / 180.0 &&
        *r.right_orientation_error < 2.0 * M_PI / 180.0) {
      ++good;
    }
  }
  // The acceptance suite runs the full 1000-trial protocol; this is a
  // faster smoke version with the same >= 95% bar.
  CHECK(good >= static_cast<int>(0.95 * trials));
}

TEST_CASE("unreachable target reports non-convergence") {
  const KinematicChain& chain = test_chain();
  IkProblem p;
  Pose far;
  far.position = Eigen::Vector3d(10, 0, 0);
  p.left_target = far;
  const IkResult r = solve_ik(chain, p);
  CHECK_FALSE(r.converged);
  CHECK(*r.left_position_error > 1.0);
}

TEST_CASE("alpha controls waist usage on boundary targets") {
  const KinematicChain& chain = test_chain();
  Rng rng(32);

  // Boundary-region targets: forward kinematics of configurations with
  // strong waist involvement and an extended arm, so the rigid-torso
  // workspace cannot reach them.
  int checked = 0;
  double dev_low_sum = 0, dev_high_sum = 0;
  for (int t = 0; t < 20; ++t) {
    JointConfig q = chain.defaults;
    q[chain.index_of("waist_yaw")] = rng.uniform(0.5, 1.2);
    q[chain.index_of("waist_pitch")] = rng.uniform(0.4, 0.9);
    q[chain.index_of("left_shoulder_pitch")] = rng.uniform(-0.6, -0.2);
    q[chain.index_of("left_elbow")] = rng.uniform(-0.25, -0.05);
    const FkResult fk = forward_kinematics(chain, q);

    IkOptions opts;
    opts.max_iterations = 150;
    opts.tolerance = 1e-4;

    double dev[3];
    const double alphas[3] = {0.1, 1.0, 10.0};
    for (int k = 0; k < 3; ++k) {
      IkProblem p;
      p.left_target = fk.left;
      p.alpha = alphas[k];
      const IkResult r = solve_ik(chain, p, opts);
      dev[k] = waist_deviation(chain, r.q);
    }
    // Nonincreasing in alpha, small numerical slack.
    CHECK(dev[0] >= dev[1] - 1e-6);
    CHECK(dev[1] >= dev[2] - 1e-6);
    dev_low_sum += dev[0];
    dev_high_sum += dev[2];
    ++checked;
  }
  CHECK(checked == 20);
  // Strict on average: these targets genuinely need the waist.
  CHECK(dev_low_sum > dev_high_sum + 0.1);
}

TEST_CASE("cost trace is monotone over accepted iterations") {
  const KinematicChain& chain = test_chain();
  Rng rng(33);
  for (int t = 0; t < 20; ++t) {
    const FkResult fk = forward_kinematics(chain, random_in_limit_config(chain, rng));
    IkProblem p;
    p.left_target = fk.left;
    p.right_target = fk.right;
    const IkResult r = solve_ik(chain, p);
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i) {
      CHECK(r.cost_trace[i] < r.cost_trace[i - 1]);
    }
  }
}

TEST_CASE("iterates respect joint limits") {
  const KinematicChain& chain = test_chain();
  Pose far;
  far.position = Eigen::Vector3d(0.9, 0.4, 0.2);  // near/outside boundary: big steps
  IkProblem p;
  p.left_target = far;
  p.alpha = 0.1;
  const IkResult r = solve_ik(chain, p);
  for (int i = 0; i < chain.joint_count(); ++i) {
    CHECK(r.q[i] >= chain.lower[i]);
    CHECK(r.q[i] <= chain.upper[i]);
  }
}

TEST_CASE("determinism: identical inputs give identical results") {
  const KinematicChain& chain = test_chain();
  Rng rng(34);
  const FkResult fk = forward_kinematics(chain, random_in_limit_config(chain, rng));
  IkProblem p;
  p.left_target = fk.left;
  const IkResult a = solve_ik(chain, p);
  const IkResult b = solve_ik(chain, p);
  CHECK((a.q - b.q).norm() == 0.0);
  CHECK(a.iterations == b.iterations);
  CHECK(a.cost_trace == b.cost_trace);
}

TEST_CASE("input validation") {
  const KinematicChain& chain = test_chain();
  IkProblem p;
  CHECK_THROWS_AS(solve_ik(chain, p), InputError);  // no targets

  p.left_target = Pose::identity();
  p.alpha = 0.01;
  CHECK_THROWS_AS(solve_ik(chain, p), InputError);  // alpha range

  p.alpha = 1.0;
  Pose bad;
  bad.position = Eigen::Vector3d(std::nan(""), 0, 0);
  p.left_target = bad;
  CHECK_THROWS_AS(solve_ik(chain, p), InputError);  // non-finite target

  p.left_target = Pose::identity();
  p.initial_q = JointConfig::Zero(3);
  CHECK_THROWS_AS(solve_ik(chain, p), InputError);  // wrong dimension
}

TEST_CASE("batch solve matches element-wise solve and reports failures in place") {
  const KinematicChain& chain = test_chain();
  Rng rng(35);

  std::vector<IkProblem> problems;
  for (int i = 0; i < 8; ++i) {
    const FkResult fk = forward_kinematics(chain, random_in_limit_config(chain, rng));
    IkProblem p;
    p.left_target = fk.left;
    p.alpha = 1.0;
    problems.push_back(p);
  }
  // Poison one element: batch must not abort.
  Pose bad;
  bad.position = Eigen::Vector3d(std::nan(""), 0, 0);
  problems[3].left_target = bad;

  const auto results = batch_solve(chain, problems);
  REQUIRE(results.size() == problems.size());
  CHECK_FALSE(results[3].error.empty());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i == 3) continue;
    const IkResult single = solve_ik(chain, problems[i]);
    CHECK((results[i].q - single.q).norm() == 0.0);
  }

  CHECK_THROWS_AS(batch_solve(chain, {}), InputError);
}

TEST_CASE("latency profile rows and monotone mean") {
  const KinematicChain& chain = test_chain();
  Rng rng(36);
  std::vector<IkProblem> problems;
  for (int i = 0; i < 16; ++i) {
    const FkResult fk = forward_kinematics(chain, random_in_limit_config(chain, rng));
    IkProblem p;
    p.left_target = fk.left;
    p.right_target = fk.right;
    problems.push_back(p);
  }

  const auto table = solver_latency_profile(chain, problems, {1, 20}, 200);
  REQUIRE(table.size() == 2);
  CHECK(table[0].iteration_cap == 1);
  CHECK(table[1].iteration_cap == 20);
  CHECK(table[1].mean_us >= table[0].mean_us);

  const auto single = solver_latency_profile(chain, problems, {1}, 50);
  CHECK(single.size() == 1);
}

TEST_SUITE_END();

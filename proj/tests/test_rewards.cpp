#include <doctest.h>

#include <cmath>

#include "manifold_kin/errors.hpp"
#include "manifold_kin/rewards.hpp"

using namespace mkin;

TEST_SUITE_BEGIN("rewards");

TEST_CASE("reward_kmp evaluates the exponential form exactly") {
  const int n = 17;
  const JointConfig q = JointConfig::Constant(n, 0.4);

  SUBCASE("zero error gives exactly one") {
    CHECK(reward_kmp(q, q, 0.1, n) == 1.0);
  }
  SUBCASE("squared error of n * sigma^2 lands on 1/e") {
    const double sigma = 0.25;
    JointConfig q2 = q;
    // spread n * sigma^2 evenly over the joints
    for (int i = 0; i < n; ++i) q2[i] += sigma;
    CHECK(reward_kmp(q, q2, sigma, n) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("doubling sigma takes the fourth root") {
    JointConfig q2 = q;
    q2[3] += 0.2;
    q2[9] -= 0.15;
    const double r1 = reward_kmp(q, q2, 0.1, n);
    const double r2 = reward_kmp(q, q2, 0.2, n);
    CHECK(r2 == doctest::Approx(std::pow(r1, 0.25)).epsilon(1e-12));
  }
  SUBCASE("strictly decreasing in the error norm, always in (0, 1]") {
    double prev = 2;
    for (int k = 0; k <= 20; ++k) {
      JointConfig q2 = q;
      q2[0] += 0.05 * k;
      const double r = reward_kmp(q, q2, 0.3, n);
      CHECK(r > 0);
      CHECK(r <= 1);
      if (k > 0) CHECK(r < prev);
      prev = r;
    }
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(reward_kmp(q, q, 0.0, n), InputError);
    CHECK_THROWS_AS(reward_kmp(q, q, -0.5, n), InputError);
    CHECK_THROWS_AS(reward_kmp(q, JointConfig::Zero(n - 1), 0.1, n), InputError);
    CHECK_THROWS_AS(reward_kmp(q, q, 0.1, n + 1), InputError);
  }
}

TEST_CASE("exp_tracking_reward is the standard bell") {
  CHECK(exp_tracking_reward(0.0, 0.5) == 1.0);
  CHECK(exp_tracking_reward(0.5, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  double prev = 2;
  for (int k = 0; k <= 10; ++k) {
    const double r = exp_tracking_reward(0.1 * k, 0.3);
    CHECK(r > 0);
    CHECK(r <= 1);
    if (k > 0) CHECK(r < prev);
    prev = r;
  }
  CHECK(exp_tracking_reward(-0.4, 0.3) == exp_tracking_reward(0.4, 0.3));
  CHECK_THROWS_AS(exp_tracking_reward(0.1, 0.0), InputError);
}

TEST_CASE("knee margins normalize to the unit interval") {
  const KneeLimits limits;
  CHECK(knee_flexion_margin(limits.upper, limits) == 0.0);
  CHECK(knee_flexion_margin(limits.lower, limits) == 1.0);
  CHECK(knee_extension_margin(limits.lower, limits) == 0.0);
  CHECK(knee_extension_margin(limits.upper, limits) == 1.0);
  const double mid = 0.5 * (limits.lower + limits.upper);
  CHECK(knee_flexion_margin(mid, limits) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(knee_extension_margin(mid, limits) == doctest::Approx(0.5).epsilon(1e-12));
  // out-of-range angles clamp instead of leaving [0, 1]
  CHECK(knee_flexion_margin(limits.upper + 1, limits) == 0.0);
  CHECK(knee_extension_margin(limits.lower - 1, limits) == 0.0);
}

TEST_CASE("knee angle from height spans the reduced leg geometry") {
  const KneeLimits limits;
  CHECK(knee_angle_from_height(0.78, limits) == 0.0);  // straight leg at full height
  const double deep = knee_angle_from_height(0.30, limits);
  CHECK(deep > 2.5);
  CHECK(deep < limits.upper);
  CHECK(knee_angle_from_height(0.05, limits) == limits.upper);  // clamped below the leg
  double prev = -1;
  for (int k = 0; k <= 16; ++k) {
    const double h = 0.30 + 0.03 * k;
    const double theta = knee_angle_from_height(h, limits);
    if (k > 0) CHECK(theta < prev);
    prev = theta;
  }
}

TEST_CASE("knee-aware height error weights, signs, and nulls") {
  const KneeLimits limits;
  const double mid = 0.5 * (limits.lower + limits.upper);

  SUBCASE("exact height gives zero") {
    CHECK(knee_aware_height_error(0.6, 0.6, {mid, mid}, limits) == 0.0);
  }
  SUBCASE("flexion margin zero nulls the error above target") {
    CHECK(knee_aware_height_error(0.75, 0.5, {limits.upper, limits.upper}, limits) == 0.0);
  }
  SUBCASE("hand-evaluated mid-range squat") {
    const double e = knee_aware_height_error(0.5, 0.6, {mid, mid}, limits);
    CHECK(e == doctest::Approx(-0.05).epsilon(1e-12));
  }
  SUBCASE("sign follows the height error and magnitude never exceeds it") {
    for (int i = 0; i <= 20; ++i) {
      const double h = 0.3 + 0.024 * i;
      const double h_des = 0.55;
      const double theta = knee_angle_from_height(h, limits);
      const double e = knee_aware_height_error(h, h_des, {theta, theta}, limits);
      if (h > h_des) CHECK(e >= 0);
      if (h < h_des) CHECK(e <= 0);
      CHECK(std::abs(e) <= std::abs(h - h_des) + 1e-15);
    }
  }
}

TEST_CASE("zero-velocity gate") {
  const RewardParams params;
  CHECK(zero_velocity_gate({0.04, 0.0, 0.05}, params));
  CHECK(zero_velocity_gate({0.0, 0.0, 0.0}, params));
  CHECK_FALSE(zero_velocity_gate({0.06, 0.0, 0.0}, params));
  CHECK_FALSE(zero_velocity_gate({0.03, 0.04, 0.0}, params));  // planar norm 0.05
  CHECK_FALSE(zero_velocity_gate({0.0, 0.0, 0.2}, params));
}

TEST_CASE("post-resample ramp is linear and saturates") {
  CHECK(post_resample_scale(0) == 0.0);
  CHECK(post_resample_scale(25) == 1.0);
  CHECK(post_resample_scale(40) == 1.0);
  CHECK(post_resample_scale(12) == doctest::Approx(0.48).epsilon(1e-12));
  CHECK(post_resample_scale(-3) == 0.0);
  CHECK(post_resample_scale(5, 10) == 0.5);
  CHECK_THROWS_AS(post_resample_scale(5, 0), InputError);
}

TEST_CASE("smoothness penalties are quadratic forms with exact null sets") {
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(4, 0.7);
  const Eigen::VectorXd tau = Eigen::VectorXd::Constant(6, 2.0);
  const Eigen::VectorXd qd = Eigen::VectorXd::Zero(5);

  const SmoothnessPenalties zero = smoothness_penalties(a, a, tau, tau, qd);
  CHECK(zero.action_rate == 0.0);
  CHECK(zero.torque_variation == 0.0);
  CHECK(zero.joint_velocity == 0.0);

  Eigen::VectorXd a2 = a;
  a2[1] += 0.5;
  const double rate1 = smoothness_penalties(a2, a, tau, tau, qd).action_rate;
  Eigen::VectorXd a4 = a;
  a4[1] += 1.0;  // doubled step
  const double rate2 = smoothness_penalties(a4, a, tau, tau, qd).action_rate;
  CHECK(rate2 == doctest::Approx(4.0 * rate1).epsilon(1e-12));

  Eigen::VectorXd qd2 = qd;
  qd2[0] = 1.5;
  CHECK(smoothness_penalties(a, a, tau, tau, qd2).joint_velocity == doctest::Approx(2.25));

  CHECK_THROWS_AS(smoothness_penalties(a, Eigen::VectorXd::Zero(3), tau, tau, qd), InputError);
}

TEST_CASE("commander objective scores geometry and masks") {
  const RewardParams params;
  Pose base;  // identity at the origin, facing +x
  const Eigen::Vector3d target(2.0, 0.0, 1.0);

  SUBCASE("heading at the target center is perfectly aligned") {
    const CommanderScore s = commander_objective(base, {0.5, 0, 0}, target, 0.0,
                                                 ArmMask{true, true}, 0.0, params);
    CHECK(s.heading_alignment == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.velocity_alignment == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.base_distance_penalty == doctest::Approx(2.0).epsilon(1e-12));  // planar, z ignored
    CHECK(s.ee_tracking_reward == 1.0);
    CHECK(s.inactive_deviation_penalty == 0.0);
  }
  SUBCASE("antiparallel command velocity scores minus one") {
    const CommanderScore s = commander_objective(base, {-0.8, 0, 0}, target, 0.01,
                                                 ArmMask{true, true}, 0.0, params);
    CHECK(s.velocity_alignment == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(s.ee_tracking_reward < 1.0);
    CHECK(s.ee_tracking_reward > 0.0);
  }
  SUBCASE("zero planar velocity has zero alignment") {
    const CommanderScore s = commander_objective(base, {0, 0, 1.0}, target, 0.0,
                                                 ArmMask{true, true}, 0.0, params);
    CHECK(s.velocity_alignment == 0.0);
  }
  SUBCASE("a yawed base rotates both heading and the commanded velocity") {
    Pose yawed;
    yawed.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()));
    // facing +y while the target sits at +x
    const CommanderScore s = commander_objective(yawed, {1.0, 0, 0}, target, 0.0,
                                                 ArmMask{true, true}, 0.0, params);
    CHECK(s.heading_alignment == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.velocity_alignment == doctest::Approx(0.0).epsilon(1e-9));
    // commanding sideways-right in the base frame points at the target again
    const CommanderScore s2 = commander_objective(yawed, {0, -1.0, 0}, target, 0.0,
                                                  ArmMask{true, true}, 0.0, params);
    CHECK(s2.velocity_alignment == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("standing on the target counts as aligned") {
    Pose on_target;
    on_target.position = target;
    const CommanderScore s = commander_objective(on_target, {0.2, 0, 0}, target, 0.0,
                                                 ArmMask{true, true}, 0.0, params);
    CHECK(s.base_distance_penalty == 0.0);
    CHECK(s.heading_alignment == 1.0);
    CHECK(s.velocity_alignment == 0.0);
  }
  SUBCASE("inactive arm deviation is squared, active pairs ignore it") {
    const CommanderScore left_only = commander_objective(base, {0, 0, 0}, target, 0.0,
                                                         ArmMask{true, false}, 0.3, params);
    CHECK(left_only.inactive_deviation_penalty == doctest::Approx(0.09).epsilon(1e-12));
    const CommanderScore neutral = commander_objective(base, {0, 0, 0}, target, 0.0,
                                                       ArmMask{false, true}, 0.0, params);
    CHECK(neutral.inactive_deviation_penalty == 0.0);
    const CommanderScore both = commander_objective(base, {0, 0, 0}, target, 0.0,
                                                    ArmMask{true, true}, 5.0, params);
    CHECK(both.inactive_deviation_penalty == 0.0);
  }
  SUBCASE("an all-inactive mask is rejected") {
    CHECK_THROWS_AS(
        commander_objective(base, {0, 0, 0}, target, 0.0, ArmMask{false, false}, 0.0, params),
        InputError);
  }
}

TEST_CASE("reward parameter validation") {
  RewardParams p;
  CHECK_NOTHROW(validate_reward_params(p));
  p.sigma_kmp = 0;
  CHECK_THROWS_AS(validate_reward_params(p), InputError);
  p = RewardParams{};
  p.knee_limits.upper = p.knee_limits.lower;
  CHECK_THROWS_AS(validate_reward_params(p), InputError);
  p = RewardParams{};
  p.ramp_steps = 0;
  CHECK_THROWS_AS(validate_reward_params(p), InputError);
  p = RewardParams{};
  p.sigma_height = -1;
  CHECK_THROWS_AS(validate_reward_params(p), InputError);
}

TEST_SUITE_END();

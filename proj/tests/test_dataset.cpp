#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "manifold_kin/dataset.hpp"
#include "manifold_kin/errors.hpp"
#include "manifold_kin/io.hpp"
#include "manifold_kin/rng.hpp"
#include "manifold_kin/stats.hpp"

using namespace mkin;

namespace {

KinematicChain& test_chain() {
  static KinematicChain chain = load_chain(MKIN_ASSET_DIR "/humanoid_upper.json");
  return chain;
}

/// Shrunken command space inside the comfortably reachable shell, so
/// nearly every sample survives the IK prune at unit-test scale.
CommandSpace easy_space() {
  CommandSpace s;
  s.left_volume.lo = {0.15, 0.05, 0.0};
  s.left_volume.hi = {0.42, 0.45, 0.35};
  s.right_volume.lo = {0.15, -0.45, 0.0};
  s.right_volume.hi = {0.42, -0.05, 0.35};
  return s;
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("sample_raw is deterministic and seed-sensitive") {
  const CommandSpace space = CommandSpace::default_space();
  const auto a = sample_raw(space, 50, 99);
  const auto b = sample_raw(space, 50, 99);
  const auto c = sample_raw(space, 50, 100);
  REQUIRE(a.size() == 50);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("sample_raw marginals match the box and SO(3) laws") {
  const CommandSpace space = CommandSpace::default_space();
  const std::size_t n = 10000;
  const auto samples = sample_raw(space, n, 4242);

  Eigen::Vector3d mean_left = Eigen::Vector3d::Zero();
  int above_right_angle = 0;
  double alpha_sum = 0;
  for (const auto& s : samples) {
    REQUIRE(s.left_target.has_value());
    REQUIRE(s.right_target.has_value());
    mean_left += s.left_target->position;
    // rotation angle from identity
    const double w = std::abs(s.left_target->orientation.w());
    if (2.0 * std::acos(std::min(1.0, w)) > M_PI / 2.0) ++above_right_angle;
    alpha_sum += s.alpha;
    CHECK(s.alpha >= 0.1);
    CHECK(s.alpha <= 10.0);
  }
  mean_left /= static_cast<double>(n);

  const Eigen::Vector3d center = 0.5 * (space.left_volume.lo + space.left_volume.hi);
  const Eigen::Vector3d extent = space.left_volume.hi - space.left_volume.lo;
  for (int a = 0; a < 3; ++a) {
    const double se = extent[a] / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean_left[a] - center[a]) < 3.0 * se);
  }

  // P(angle > pi/2) for uniform SO(3) = (pi/2 + 1)/pi
  const double expected = (M_PI / 2.0 + 1.0) / M_PI;
  CHECK(std::abs(static_cast<double>(above_right_angle) / n - expected) < 0.02);

  const double alpha_se = (10.0 - 0.1) / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(alpha_sum / n - 5.05) < 3.0 * alpha_se);
}

TEST_CASE("sample_raw unilateral fraction drops one arm") {
  CommandSpace space = CommandSpace::default_space();
  space.unilateral_fraction = 0.2;
  const auto samples = sample_raw(space, 5000, 7);
  int single = 0;
  for (const auto& s : samples) {
    CHECK((s.left_target.has_value() || s.right_target.has_value()));
    if (!s.left_target || !s.right_target) ++single;
  }
  CHECK(std::abs(single / 5000.0 - 0.2) < 0.02);
}

TEST_CASE("space validation rejects degenerate and asymmetric volumes") {
  CommandSpace flat = CommandSpace::default_space();
  flat.left_volume.hi.z() = flat.left_volume.lo.z();
  flat.right_volume.hi.z() = flat.right_volume.lo.z();
  CHECK_THROWS_AS(sample_raw(flat, 10, 1), InputError);

  CommandSpace skewed = CommandSpace::default_space();
  skewed.right_volume.hi.y() = -0.1;
  CHECK_THROWS_AS(sample_raw(skewed, 10, 1), InputError);

  CommandSpace bad_alpha = CommandSpace::default_space();
  bad_alpha.alpha_hi = 5.0;
  CHECK_THROWS_AS(sample_raw(bad_alpha, 10, 1), InputError);
}

TEST_CASE("curate prunes by IK error and records metadata counts") {
  const KinematicChain& chain = test_chain();
  auto raw = sample_raw(easy_space(), 300, 11);
  // Adulterate with clearly unreachable commands.
  for (int i = 0; i < 60; ++i) {
    CommandSample far = raw[static_cast<std::size_t>(i)];
    far.left_target->position = {10.0, 0.0, 0.0};
    raw.push_back(far);
  }

  CurateOptions opts;
  opts.target_count = 100;
  opts.seed = 5;
  opts.space = easy_space();
  const Dataset d = curate(chain, raw, opts);

  CHECK(d.records.size() == 100);
  CHECK(d.meta.raw_count == 360);
  CHECK(d.meta.retained_count <= 300);
  CHECK(d.meta.retained_count >= 100);
  CHECK(d.meta.target_count == 100);
  CHECK(d.meta.chain_hash == chain.hash);
  for (const auto& rec : d.records) {
    CHECK(rec.ik_position_error <= opts.prune_threshold);
    CHECK(rec.manipulability_left >= 0.0);
    CHECK(rec.manipulability_right >= 0.0);
    CHECK(rec.q_solution.size() == chain.joint_count());
  }
}

TEST_CASE("curate with all-unreachable targets reports filter statistics") {
  const KinematicChain& chain = test_chain();
  auto raw = sample_raw(easy_space(), 20, 3);
  for (auto& s : raw) {
    s.left_target->position = {10.0, 0.0, 0.0};
    s.right_target->position = {10.0, -1.0, 0.0};
  }
  CurateOptions opts;
  opts.target_count = 10;
  CHECK_THROWS_WITH_AS(curate(chain, raw, opts), doctest::Contains("zero survivors"),
                       ValidationError);
}

TEST_CASE("uniform-weight curation preserves the survivor marginals") {
  const KinematicChain& chain = test_chain();
  const auto raw = sample_raw(easy_space(), 1200, 17);

  CurateOptions opts;
  opts.prune_threshold = 1e9;  // keep everything: isolates the resampling step
  opts.target_count = 400;
  opts.seed = 23;
  opts.uniform_weights = true;
  opts.space = easy_space();
  const Dataset d = curate(chain, raw, opts);
  REQUIRE(d.records.size() == 400);
  REQUIRE(d.meta.retained_count == 1200);

  Eigen::Vector3d mean_raw = Eigen::Vector3d::Zero();
  for (const auto& s : raw) mean_raw += s.left_target->position;
  mean_raw /= 1200.0;
  Eigen::Vector3d mean_cur = Eigen::Vector3d::Zero();
  for (const auto& r : d.records) mean_cur += r.command.left_target->position;
  mean_cur /= 400.0;

  const Eigen::Vector3d extent = easy_space().left_volume.hi - easy_space().left_volume.lo;
  for (int a = 0; a < 3; ++a) {
    const double se = extent[a] / std::sqrt(12.0) / std::sqrt(400.0);
    CHECK(std::abs(mean_cur[a] - mean_raw[a]) < 4.0 * se);
  }
}

TEST_CASE("manipulability weighting shifts the curated set upward") {
  const KinematicChain& chain = test_chain();
  // Mann-Whitney on curated-vs-uniform manipulability, multiple seeds.
  int dominated = 0;
  const int seeds = 3;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto raw = sample_raw(easy_space(), 2500, 1000 + static_cast<std::uint64_t>(seed));

    CurateOptions weighted;
    weighted.target_count = 800;
    weighted.seed = static_cast<std::uint64_t>(seed);
    weighted.space = easy_space();
    const Dataset dw = curate(chain, raw, weighted);

    CurateOptions uniform = weighted;
    uniform.uniform_weights = true;
    const Dataset du = curate(chain, raw, uniform);

    const auto min_manip = [](const Dataset& d) {
      std::vector<double> v;
      v.reserve(d.records.size());
      for (const auto& r : d.records) {
        v.push_back(std::min(r.manipulability_left, r.manipulability_right));
      }
      return v;
    };
    const std::vector<double> mw = min_manip(dw);
    const std::vector<double> mu = min_manip(du);
    if (mann_whitney_pvalue_greater(mw, mu) < 0.01) ++dominated;
    CHECK(mean(mw) > mean(mu));
  }
  CHECK(dominated == seeds);
}

TEST_CASE("mixture sampler: branch frequencies and degenerate settings") {
  const KinematicChain& chain = test_chain();
  const auto raw = sample_raw(easy_space(), 200, 41);
  CurateOptions opts;
  opts.target_count = 80;
  opts.seed = 41;
  opts.space = easy_space();
  const Dataset d = curate(chain, raw, opts);

  SUBCASE("beta outside range") {
    CHECK_THROWS_AS(mixture_sample(easy_space(), d, -0.1, {}, 10, 1), InputError);
    CHECK_THROWS_AS(mixture_sample(easy_space(), d, 1.5, {}, 10, 1), InputError);
  }

  SUBCASE("beta = 1 ignores the dataset and matches uniform stats") {
    const Dataset empty;
    const auto s = mixture_sample(easy_space(), empty, 1.0, {}, 3000, 77);
    for (const auto& c : s) CHECK(c.branch == SampleBranch::uniform);
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& c : s) m += c.left_target->position;
    m /= 3000.0;
    const Eigen::Vector3d center = 0.5 * (easy_space().left_volume.lo + easy_space().left_volume.hi);
    const Eigen::Vector3d extent = easy_space().left_volume.hi - easy_space().left_volume.lo;
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(m[a] - center[a]) < 4.0 * extent[a] / std::sqrt(12.0) / std::sqrt(3000.0));
    }
  }

  SUBCASE("beta = 0 with zero perturbation reproduces dataset records") {
    PerturbationScale zero{0.0, 0.0};
    const auto s = mixture_sample(easy_space(), d, 0.0, zero, 500, 13);
    for (const auto& c : s) {
      CHECK(c.branch == SampleBranch::prior);
      bool found = false;
      for (const auto& rec : d.records) {
        if (rec.command == c) {
          found = true;
          break;
        }
      }
      CHECK(found);
    }
  }

  SUBCASE("beta = 0 with empty dataset is an input error") {
    const Dataset empty;
    CHECK_THROWS_AS(mixture_sample(easy_space(), empty, 0.0, {}, 10, 1), InputError);
  }

  SUBCASE("beta = 0.3 branch fraction concentrates") {
    const auto s = mixture_sample(easy_space(), d, 0.3, {}, 100000, 99);
    std::size_t uniform_count = 0;
    for (const auto& c : s) {
      if (c.branch == SampleBranch::uniform) ++uniform_count;
    }
    CHECK(std::abs(static_cast<double>(uniform_count) / 100000.0 - 0.3) < 0.005);
  }

  SUBCASE("prior-branch perturbations stay small") {
    PerturbationScale scale;  // defaults: 1 cm, 2 degrees
    const auto s = mixture_sample(easy_space(), d, 0.0, scale, 300, 55);
    for (const auto& c : s) {
      double best = 1e9;
      for (const auto& rec : d.records) {
        if (!rec.command.left_target || !c.left_target) continue;
        best = std::min(best,
                        (rec.command.left_target->position - c.left_target->position).norm());
      }
      CHECK(best < 6.0 * scale.position * std::sqrt(3.0));
    }
  }
}

TEST_CASE("dataset file round-trips bit-exactly") {
  const KinematicChain& chain = test_chain();
  const auto raw = sample_raw(easy_space(), 120, 61);
  CurateOptions opts;
  opts.target_count = 50;
  opts.seed = 61;
  opts.space = easy_space();
  const Dataset d = curate(chain, raw, opts);

  const auto path = temp_path("mkin_test_dataset.kmpd");
  write_dataset(d, path);
  const Dataset back = read_dataset(path);
  CHECK(back == d);

  // Byte-identical re-serialization.
  const auto path2 = temp_path("mkin_test_dataset2.kmpd");
  write_dataset(back, path2);
  CHECK(read_text_file(path) == read_text_file(path2));

  // Strict hash check passes with the right chain and fails otherwise.
  CHECK(read_dataset(path, chain.hash) == d);
  Sha256 wrong = chain.hash;
  wrong[0] ^= 0xff;
  CHECK_THROWS_WITH_AS(read_dataset(path, wrong), doctest::Contains("chain hash"),
                       ValidationError);

  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupt dataset files are rejected whole") {
  const KinematicChain& chain = test_chain();
  const auto raw = sample_raw(easy_space(), 60, 71);
  CurateOptions opts;
  opts.target_count = 20;
  opts.seed = 71;
  opts.space = easy_space();
  const Dataset d = curate(chain, raw, opts);
  const auto path = temp_path("mkin_test_corrupt.kmpd");
  write_dataset(d, path);

  const std::string bytes = read_text_file(path);

  SUBCASE("truncation") {
    write_text_file(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  SUBCASE("flipped byte") {
    std::string corrupted = bytes;
    corrupted[corrupted.size() / 3] ^= 0x01;
    write_text_file(path, corrupted);
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  SUBCASE("bad magic") {
    std::string corrupted = bytes;
    corrupted[0] = 'X';
    write_text_file(path, corrupted);
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }

  std::filesystem::remove(path);
}

TEST_SUITE_END();

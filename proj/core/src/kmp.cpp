#include "manifold_kin/kmp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include "manifold_kin/errors.hpp"
#include "manifold_kin/io.hpp"
#include "manifold_kin/stats.hpp"
#include "manifold_kin/threads.hpp"

namespace mkin {

namespace {

constexpr char kMagic[4] = {'K', 'M', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr float kLayerNormEps = 1e-5f;

/// y = W x + b with row-major W[out][in].
void affine(const float* w, const float* b, const float* x, int in, int out, float* y) {
  for (int o = 0; o < out; ++o) {
    const float* row = w + static_cast<std::ptrdiff_t>(o) * in;
    float acc = 0.0f;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc + b[o];
  }
}

void layer_norm(const float* gamma, const float* beta, const float* x, int n, float* y) {
  float mean = 0.0f;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < n; ++i) y[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

struct Scratch {
  std::vector<float> x, h, t, u, v;
  void ensure(int input_dim, int width) {
    x.resize(static_cast<std::size_t>(input_dim));
    h.resize(static_cast<std::size_t>(width));
    t.resize(static_cast<std::size_t>(width));
    u.resize(static_cast<std::size_t>(width));
    v.resize(static_cast<std::size_t>(width));
  }
};

/// Normalized 19-input to normalized 17-output, float32 path shared by
/// the single and batched entry points (bit-identical results).
void forward_normalized(const KmpModel& m, const float* z_norm, Scratch& s, float* y_out) {
  s.ensure(m.input_dim, m.width);
  affine(m.w_in.data(), m.b_in.data(), z_norm, m.input_dim, m.width, s.h.data());
  for (const KmpBlock& blk : m.blocks) {
    layer_norm(blk.ln_gamma.data(), blk.ln_beta.data(), s.h.data(), m.width, s.t.data());
    affine(blk.w1.data(), blk.b1.data(), s.t.data(), m.width, m.width, s.u.data());
    for (int i = 0; i < m.width; ++i) s.u[static_cast<std::size_t>(i)] = gelu(s.u[static_cast<std::size_t>(i)]);
    affine(blk.w2.data(), blk.b2.data(), s.u.data(), m.width, m.width, s.v.data());
    for (int i = 0; i < m.width; ++i) s.h[static_cast<std::size_t>(i)] += s.v[static_cast<std::size_t>(i)];
  }
  affine(m.w_out.data(), m.b_out.data(), s.h.data(), m.width, m.output_dim, y_out);
}

JointConfig decode_output(const KmpModel& m, const float* y) {
  JointConfig q(m.output_dim);
  for (int i = 0; i < m.output_dim; ++i) {
    const double raw = m.out_mean[i] + m.out_scale[i] * static_cast<double>(y[i]);
    q[i] = std::clamp(raw, m.lower[i], m.upper[i]);
  }
  return q;
}

void normalize_input(const KmpModel& m, const Eigen::VectorXd& z, float* out) {
  for (int i = 0; i < m.input_dim; ++i) {
    out[i] = static_cast<float>((z[i] - m.in_mean[i]) / m.in_scale[i]);
  }
}

void check_tensor(std::size_t actual, std::size_t expected, const char* name) {
  if (actual != expected) {
    throw ValidationError(std::string("kmp model: tensor ") + name + " has " +
                          std::to_string(actual) + " values, expected " +
                          std::to_string(expected));
  }
}

void write_f64_vec(BinaryWriter& w, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Eigen::VectorXd read_f64_vec(BinaryReader& r, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

void write_tensor(BinaryWriter& w, const std::vector<float>& t) {
  w.u64(t.size());
  for (const float f : t) w.f32(f);
}

std::vector<float> read_tensor(BinaryReader& r, std::size_t expected, const char* name) {
  const std::uint64_t n = r.u64();
  if (n != expected) {
    throw FormatError(std::string("kmp model file: tensor ") + name + " has " +
                      std::to_string(n) + " values, expected " + std::to_string(expected));
  }
  std::vector<float> t(n);
  for (std::uint64_t i = 0; i < n; ++i) t[i] = r.f32();
  return t;
}

}  // namespace

int kmp_block_count(KmpVariant v) { return v == KmpVariant::S ? 4 : 5; }

int kmp_default_width(KmpVariant v) { return v == KmpVariant::S ? 64 : 128; }

void validate_model(const KmpModel& m) {
  if (m.width < 1 || m.input_dim < 1 || m.output_dim < 1) {
    throw ValidationError("kmp model: non-positive dimension");
  }
  if (static_cast<int>(m.blocks.size()) != kmp_block_count(m.variant)) {
    throw ValidationError("kmp model: variant " +
                          std::string(m.variant == KmpVariant::S ? "S" : "L") + " requires " +
                          std::to_string(kmp_block_count(m.variant)) + " blocks, has " +
                          std::to_string(m.blocks.size()));
  }
  const auto w = static_cast<std::size_t>(m.width);
  check_tensor(m.w_in.size(), w * static_cast<std::size_t>(m.input_dim), "w_in");
  check_tensor(m.b_in.size(), w, "b_in");
  for (const KmpBlock& blk : m.blocks) {
    check_tensor(blk.ln_gamma.size(), w, "ln_gamma");
    check_tensor(blk.ln_beta.size(), w, "ln_beta");
    check_tensor(blk.w1.size(), w * w, "w1");
    check_tensor(blk.b1.size(), w, "b1");
    check_tensor(blk.w2.size(), w * w, "w2");
    check_tensor(blk.b2.size(), w, "b2");
  }
  check_tensor(m.w_out.size(), static_cast<std::size_t>(m.output_dim) * w, "w_out");
  check_tensor(m.b_out.size(), static_cast<std::size_t>(m.output_dim), "b_out");
  check_tensor(static_cast<std::size_t>(m.in_mean.size()), static_cast<std::size_t>(m.input_dim), "in_mean");
  check_tensor(static_cast<std::size_t>(m.in_scale.size()), static_cast<std::size_t>(m.input_dim), "in_scale");
  check_tensor(static_cast<std::size_t>(m.out_mean.size()), static_cast<std::size_t>(m.output_dim), "out_mean");
  check_tensor(static_cast<std::size_t>(m.out_scale.size()), static_cast<std::size_t>(m.output_dim), "out_scale");
  check_tensor(static_cast<std::size_t>(m.lower.size()), static_cast<std::size_t>(m.output_dim), "lower");
  check_tensor(static_cast<std::size_t>(m.upper.size()), static_cast<std::size_t>(m.output_dim), "upper");
}

Eigen::VectorXd encode_command(const KmpModel& model, const CommandSample& c) {
  if (model.input_dim != 19) {
    throw InputError("encode_command: model input dimension is not 19");
  }
  Eigen::VectorXd z(19);
  const auto put = [&](int base, const std::optional<Pose>& target) {
    if (target) {
      if (!target->is_finite()) throw InputError("encode_command: non-finite target pose");
      z.segment<3>(base) = target->position;
      z.segment<6>(base + 3) = rotation_to_6d(target->orientation);
    } else {
      z.segment<9>(base) = model.in_mean.segment<9>(base);
    }
  };
  put(0, c.left_target);
  put(9, c.right_target);
  if (!std::isfinite(c.alpha)) throw InputError("encode_command: non-finite alpha");
  z[18] = c.alpha;
  return z;
}

JointConfig kmp_infer(const KmpModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.input_dim) {
    throw InputError("kmp_infer: input has " + std::to_string(z.size()) + " values, expected " +
                     std::to_string(model.input_dim));
  }
  if (!z.allFinite()) throw InputError("kmp_infer: non-finite input");
  thread_local Scratch scratch;
  thread_local std::vector<float> zbuf, ybuf;
  zbuf.resize(static_cast<std::size_t>(model.input_dim));
  ybuf.resize(static_cast<std::size_t>(model.output_dim));
  normalize_input(model, z, zbuf.data());
  forward_normalized(model, zbuf.data(), scratch, ybuf.data());
  return decode_output(model, ybuf.data());
}

JointConfig kmp_infer(const KmpModel& model, const CommandSample& c) {
  return kmp_infer(model, encode_command(model, c));
}

std::vector<JointConfig> kmp_infer_batch(const KmpModel& model,
                                         const std::vector<CommandSample>& samples) {
  std::vector<JointConfig> out(samples.size());
  parallel_for(static_cast<std::int64_t>(samples.size()), [&](std::int64_t begin, std::int64_t end) {
    Scratch scratch;
    std::vector<float> zbuf(static_cast<std::size_t>(model.input_dim));
    std::vector<float> ybuf(static_cast<std::size_t>(model.output_dim));
    for (std::int64_t i = begin; i < end; ++i) {
      const Eigen::VectorXd z = encode_command(model, samples[static_cast<std::size_t>(i)]);
      normalize_input(model, z, zbuf.data());
      forward_normalized(model, zbuf.data(), scratch, ybuf.data());
      out[static_cast<std::size_t>(i)] = decode_output(model, ybuf.data());
    }
  });
  return out;
}

JointConfig kmp_residual_apply(const JointConfig& reference, const JointConfig& residual,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               double cap) {
  if (reference.size() != residual.size() || reference.size() != lower.size() ||
      reference.size() != upper.size()) {
    throw InputError("kmp_residual_apply: dimension mismatch");
  }
  JointConfig out(reference.size());
  for (Eigen::Index i = 0; i < reference.size(); ++i) {
    double r = residual[i];
    if (!std::isfinite(r)) r = 0.0;
    r = std::clamp(r, -cap, cap);
    double v = reference[i] + r;
    // ordered comparisons so a non-finite sum still lands inside the box
    if (!(v >= lower[i])) v = lower[i];
    if (v > upper[i]) v = upper[i];
    out[i] = v;
  }
  return out;
}

void save_model(const KmpModel& model, const std::filesystem::path& path) {
  validate_model(model);
  BinaryWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(model.variant));
  w.u32(static_cast<std::uint32_t>(model.width));
  w.u32(static_cast<std::uint32_t>(model.input_dim));
  w.u32(static_cast<std::uint32_t>(model.output_dim));
  w.u32(static_cast<std::uint32_t>(model.blocks.size()));
  w.f64(model.dropout_rate);
  w.bytes(model.chain_hash.data(), model.chain_hash.size());
  write_f64_vec(w, model.in_mean);
  write_f64_vec(w, model.in_scale);
  write_f64_vec(w, model.out_mean);
  write_f64_vec(w, model.out_scale);
  write_f64_vec(w, model.lower);
  write_f64_vec(w, model.upper);
  write_tensor(w, model.w_in);
  write_tensor(w, model.b_in);
  for (const KmpBlock& blk : model.blocks) {
    write_tensor(w, blk.ln_gamma);
    write_tensor(w, blk.ln_beta);
    write_tensor(w, blk.w1);
    write_tensor(w, blk.b1);
    write_tensor(w, blk.w2);
    write_tensor(w, blk.b2);
  }
  write_tensor(w, model.w_out);
  write_tensor(w, model.b_out);
  w.u32(w.crc());
  w.save(path);
}

KmpModel load_model(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  if (r.size() < 4 + 4 + 1 + 4 * 4 + 8 + 32 + 4) throw FormatError("kmp model file: truncated header");
  r.seek(r.size() - 4);
  const std::uint32_t stored_crc = r.u32();
  if (stored_crc != r.crc_of_prefix(r.size() - 4)) {
    throw FormatError("kmp model file: checksum mismatch");
  }
  r.seek(0);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("kmp model file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("kmp model file: unsupported version " + std::to_string(version));
  }

  KmpModel m;
  const std::uint8_t variant = r.u8();
  if (variant > 1) throw FormatError("kmp model file: unknown variant tag");
  m.variant = static_cast<KmpVariant>(variant);
  m.width = static_cast<int>(r.u32());
  m.input_dim = static_cast<int>(r.u32());
  m.output_dim = static_cast<int>(r.u32());
  const std::uint32_t block_count = r.u32();
  m.dropout_rate = r.f64();
  r.bytes(m.chain_hash.data(), m.chain_hash.size());
  if (m.width < 1 || m.width > 65536 || m.input_dim < 1 || m.output_dim < 1 ||
      block_count > 64) {
    throw FormatError("kmp model file: implausible dimensions");
  }
  m.in_mean = read_f64_vec(r, m.input_dim);
  m.in_scale = read_f64_vec(r, m.input_dim);
  m.out_mean = read_f64_vec(r, m.output_dim);
  m.out_scale = read_f64_vec(r, m.output_dim);
  m.lower = read_f64_vec(r, m.output_dim);
  m.upper = read_f64_vec(r, m.output_dim);

  const auto w = static_cast<std::size_t>(m.width);
  m.w_in = read_tensor(r, w * static_cast<std::size_t>(m.input_dim), "w_in");
  m.b_in = read_tensor(r, w, "b_in");
  m.blocks.resize(block_count);
  for (KmpBlock& blk : m.blocks) {
    blk.ln_gamma = read_tensor(r, w, "ln_gamma");
    blk.ln_beta = read_tensor(r, w, "ln_beta");
    blk.w1 = read_tensor(r, w * w, "w1");
    blk.b1 = read_tensor(r, w, "b1");
    blk.w2 = read_tensor(r, w * w, "w2");
    blk.b2 = read_tensor(r, w, "b2");
  }
  m.w_out = read_tensor(r, static_cast<std::size_t>(m.output_dim) * w, "w_out");
  m.b_out = read_tensor(r, static_cast<std::size_t>(m.output_dim), "b_out");
  r.u32();  // checksum, already verified
  if (r.remaining() != 0) throw FormatError("kmp model file: trailing bytes");
  validate_model(m);
  return m;
}

KmpModel load_model(const std::filesystem::path& path, KmpVariant expected) {
  KmpModel m = load_model(path);
  if (m.variant != expected) {
    throw ValidationError(std::string("kmp model file: variant mismatch, expected ") +
                          (expected == KmpVariant::S ? "S" : "L") + ", file holds " +
                          (m.variant == KmpVariant::S ? "S" : "L"));
  }
  return m;
}

KmpBenchReport bench_kmp(const KinematicChain& chain, const KmpModel& model,
                         const std::vector<CommandSample>& test_samples,
                         const std::vector<std::size_t>& batch_sizes, int solver_iteration_cap) {
  validate_model(model);
  if (test_samples.size() < 1000) {
    throw InputError("bench_kmp: need at least 1000 test samples, got " +
                     std::to_string(test_samples.size()));
  }
  if (batch_sizes.empty()) throw InputError("bench_kmp: empty batch size list");
  for (const std::size_t b : batch_sizes) {
    if (b < 1) throw InputError("bench_kmp: batch sizes must be >= 1");
  }
  if (solver_iteration_cap < 1) throw InputError("bench_kmp: solver iteration cap must be >= 1");
  if (model.chain_hash != chain.hash) {
    throw ValidationError("bench_kmp: model was trained for a different chain");
  }

  using clock = std::chrono::steady_clock;
  KmpBenchReport report;
  volatile double sink = 0;

  // Single-sample inference latency.
  {
    const int warmup = 100, timed = 1000;
    for (int i = 0; i < warmup; ++i) {
      sink = sink + kmp_infer(model, test_samples[static_cast<std::size_t>(i) % test_samples.size()])[0];
    }
    std::vector<double> us;
    us.reserve(timed);
    for (int i = 0; i < timed; ++i) {
      const auto& s = test_samples[static_cast<std::size_t>(i) % test_samples.size()];
      const auto t0 = clock::now();
      const JointConfig q = kmp_infer(model, s);
      const auto t1 = clock::now();
      sink = sink + q[0];
      us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    report.kmp_single = {mean(us), median(us)};
  }

  // Solver latency at the iteration cap (one descent, one start).
  {
    const std::size_t pool = std::min<std::size_t>(test_samples.size(), 64);
    std::vector<IkProblem> problems;
    problems.reserve(pool);
    for (std::size_t i = 0; i < pool; ++i) {
      IkProblem p;
      p.left_target = test_samples[i].left_target;
      p.right_target = test_samples[i].right_target;
      p.alpha = test_samples[i].alpha;
      problems.push_back(p);
    }
    const auto rows = solver_latency_profile(chain, problems, {solver_iteration_cap}, 1000);
    report.solver_single = {rows[0].mean_us, rows[0].median_us};
  }

  // Batched per-sample latency.
  for (const std::size_t b : batch_sizes) {
    std::vector<CommandSample> batch(b);
    for (std::size_t i = 0; i < b; ++i) batch[i] = test_samples[i % test_samples.size()];
    for (int r = 0; r < 2; ++r) sink = sink + kmp_infer_batch(model, batch)[0][0];
    const int runs = std::max<int>(5, static_cast<int>((1000 + b - 1) / b));
    std::vector<double> per_sample;
    per_sample.reserve(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) {
      const auto t0 = clock::now();
      const auto out = kmp_infer_batch(model, batch);
      const auto t1 = clock::now();
      sink = sink + out[0][0];
      per_sample.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count() /
                           static_cast<double>(b));
    }
    report.kmp_batched.push_back({b, median(per_sample)});
  }

  // Accuracy: model predictions and full-default solver solutions
  // against the commanded poses.
  {
    const std::vector<JointConfig> pred = kmp_infer_batch(model, test_samples);
    std::vector<double> kp, ko;
    kp.reserve(test_samples.size());
    ko.reserve(test_samples.size());
    for (std::size_t i = 0; i < test_samples.size(); ++i) {
      const FkResult fk = forward_kinematics(chain, pred[i]);
      double pe = 0, oe = 0;
      const auto account = [&](Side side, const std::optional<Pose>& target) {
        if (!target) return;
        pe = std::max(pe, position_error(fk.ee(side), *target));
        oe = std::max(oe, orientation_error(fk.ee(side), *target));
      };
      account(Side::left, test_samples[i].left_target);
      account(Side::right, test_samples[i].right_target);
      kp.push_back(pe);
      ko.push_back(oe);
    }
    report.kmp_position = {median(kp), percentile(kp, 90.0)};
    report.kmp_orientation = {median(ko), percentile(ko, 90.0)};

    std::vector<IkProblem> problems(test_samples.size());
    for (std::size_t i = 0; i < test_samples.size(); ++i) {
      problems[i].left_target = test_samples[i].left_target;
      problems[i].right_target = test_samples[i].right_target;
      problems[i].alpha = test_samples[i].alpha;
    }
    const std::vector<IkResult> solved = batch_solve(chain, problems);
    std::vector<double> sp, so;
    sp.reserve(solved.size());
    so.reserve(solved.size());
    for (const IkResult& r : solved) {
      sp.push_back(r.max_position_error());
      double oe = 0;
      if (r.left_orientation_error) oe = std::max(oe, *r.left_orientation_error);
      if (r.right_orientation_error) oe = std::max(oe, *r.right_orientation_error);
      so.push_back(oe);
    }
    report.solver_position = {median(sp), percentile(sp, 90.0)};
    report.solver_orientation = {median(so), percentile(so, 90.0)};
  }

  return report;
}

}  // namespace mkin

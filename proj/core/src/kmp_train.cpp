#include "manifold_kin/kmp_train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "manifold_kin/rng.hpp"

namespace mkin {

namespace {

constexpr std::uint64_t kStreamInit = 0x74726e5f696e6974ULL;     // "trn_init"
constexpr std::uint64_t kStreamSplit = 0x74726e5f73706c74ULL;    // "trn_splt"
constexpr std::uint64_t kStreamShuffle = 0x74726e5f73687566ULL;  // "trn_shuf"
constexpr std::uint64_t kStreamDropout = 0x74726e5f64726f70ULL;  // "trn_drop"

constexpr double kLnEps = 1e-5;  // must match the float32 inference path
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double phi_cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

/// Fixed parameter traversal order shared by the Adam state and the
/// gradient: flat views over every tensor.
std::vector<Eigen::Map<Eigen::ArrayXd>> tensor_views(KmpNet& n) {
  std::vector<Eigen::Map<Eigen::ArrayXd>> v;
  const auto add = [&](auto& m) { v.emplace_back(m.data(), m.size()); };
  add(n.w_in);
  add(n.b_in);
  for (KmpNetBlock& b : n.blocks) {
    add(b.ln_gamma);
    add(b.ln_beta);
    add(b.w1);
    add(b.b1);
    add(b.w2);
    add(b.b2);
  }
  add(n.w_out);
  add(n.b_out);
  return v;
}

KmpNet zeros_like(const KmpNet& n) {
  KmpNet z;
  z.input_dim = n.input_dim;
  z.output_dim = n.output_dim;
  z.width = n.width;
  z.w_in = Eigen::MatrixXd::Zero(n.w_in.rows(), n.w_in.cols());
  z.b_in = Eigen::VectorXd::Zero(n.b_in.size());
  z.blocks.resize(n.blocks.size());
  for (std::size_t k = 0; k < n.blocks.size(); ++k) {
    const KmpNetBlock& b = n.blocks[k];
    KmpNetBlock& o = z.blocks[k];
    o.ln_gamma = Eigen::VectorXd::Zero(b.ln_gamma.size());
    o.ln_beta = Eigen::VectorXd::Zero(b.ln_beta.size());
    o.w1 = Eigen::MatrixXd::Zero(b.w1.rows(), b.w1.cols());
    o.b1 = Eigen::VectorXd::Zero(b.b1.size());
    o.w2 = Eigen::MatrixXd::Zero(b.w2.rows(), b.w2.cols());
    o.b2 = Eigen::VectorXd::Zero(b.b2.size());
  }
  z.w_out = Eigen::MatrixXd::Zero(n.w_out.rows(), n.w_out.cols());
  z.b_out = Eigen::VectorXd::Zero(n.b_out.size());
  return z;
}

struct LnCache {
  Eigen::MatrixXd nhat;   // normalized rows
  Eigen::ArrayXd inv_s;   // per-row 1/sqrt(var + eps)
};

/// Row-wise layer norm of x scaled by gamma/beta, filling the cache.
Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                const Eigen::VectorXd& beta, LnCache& cache) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  Eigen::MatrixXd centered = x;
  centered.colwise() -= mean;
  const Eigen::ArrayXd var = centered.array().square().rowwise().mean();
  cache.inv_s = (var + kLnEps).rsqrt();
  cache.nhat = (centered.array().colwise() * cache.inv_s).matrix();
  Eigen::MatrixXd t = cache.nhat * gamma.asDiagonal();
  t.rowwise() += beta.transpose();
  return t;
}

struct BlockCache {
  LnCache ln;
  Eigen::MatrixXd t;  // layer-norm output
  Eigen::MatrixXd u;  // first affine pre-activation
  Eigen::MatrixXd a;  // gelu(u)
};

float to_f32(double v) { return static_cast<float>(v); }

void flatten_f32(const Eigen::MatrixXd& m, std::vector<float>& out) {
  out.resize(static_cast<std::size_t>(m.size()));
  std::size_t p = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[p++] = to_f32(m(r, c));
  }
}

void flatten_f32(const Eigen::VectorXd& v, std::vector<float>& out) {
  out.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = to_f32(v[i]);
}

}  // namespace

KmpNet kmp_net_init(int input_dim, int output_dim, int width, int blocks, std::uint64_t seed,
                    bool zero_decoder) {
  if (input_dim < 1 || output_dim < 1 || width < 1 || blocks < 1) {
    throw InputError("kmp_net_init: non-positive dimension");
  }
  Rng rng(seed);
  const auto fill = [&](Eigen::MatrixXd& m, double std) {
    // Row-major draw order; never reorder, initialization is seeded.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = std * rng.normal();
    }
  };
  KmpNet n;
  n.input_dim = input_dim;
  n.output_dim = output_dim;
  n.width = width;
  n.w_in.resize(width, input_dim);
  fill(n.w_in, std::sqrt(2.0 / input_dim));
  n.b_in = Eigen::VectorXd::Zero(width);
  n.blocks.resize(static_cast<std::size_t>(blocks));
  // Residual branch outputs are down-scaled with depth so the fresh
  // network stays well-conditioned at any block count.
  const double branch_std = std::sqrt(2.0 / width) / std::sqrt(2.0 * blocks);
  for (KmpNetBlock& b : n.blocks) {
    b.ln_gamma = Eigen::VectorXd::Ones(width);
    b.ln_beta = Eigen::VectorXd::Zero(width);
    b.w1.resize(width, width);
    fill(b.w1, std::sqrt(2.0 / width));
    b.b1 = Eigen::VectorXd::Zero(width);
    b.w2.resize(width, width);
    fill(b.w2, branch_std);
    b.b2 = Eigen::VectorXd::Zero(width);
  }
  n.w_out.resize(output_dim, width);
  if (zero_decoder) {
    n.w_out.setZero();
  } else {
    fill(n.w_out, std::sqrt(1.0 / width));
  }
  n.b_out = Eigen::VectorXd::Zero(output_dim);
  return n;
}

Eigen::MatrixXd kmp_net_forward(const KmpNet& net, const Eigen::MatrixXd& X) {
  if (X.cols() != net.input_dim) throw InputError("kmp_net_forward: input dimension mismatch");
  Eigen::MatrixXd h = X * net.w_in.transpose();
  h.rowwise() += net.b_in.transpose();
  for (const KmpNetBlock& b : net.blocks) {
    LnCache ln;
    const Eigen::MatrixXd t = layer_norm_rows(h, b.ln_gamma, b.ln_beta, ln);
    Eigen::MatrixXd u = t * b.w1.transpose();
    u.rowwise() += b.b1.transpose();
    const Eigen::MatrixXd a = u.unaryExpr([](double x) { return gelu(x); });
    Eigen::MatrixXd v = a * b.w2.transpose();
    v.rowwise() += b.b2.transpose();
    h += v;
  }
  Eigen::MatrixXd y = h * net.w_out.transpose();
  y.rowwise() += net.b_out.transpose();
  return y;
}

double kmp_net_loss_and_grad(const KmpNet& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             const std::vector<Eigen::MatrixXd>* dropout_masks, KmpNet* grad) {
  const Eigen::Index B = X.rows();
  if (B < 1) throw InputError("kmp_net_loss_and_grad: empty batch");
  if (X.cols() != net.input_dim || Y.cols() != net.output_dim || Y.rows() != B) {
    throw InputError("kmp_net_loss_and_grad: shape mismatch");
  }
  if (dropout_masks && dropout_masks->size() != net.blocks.size()) {
    throw InputError("kmp_net_loss_and_grad: one dropout mask per block required");
  }
  if (grad == nullptr) throw InputError("kmp_net_loss_and_grad: null gradient output");

  // Forward with caches.
  const std::size_t nb = net.blocks.size();
  std::vector<BlockCache> caches(nb);
  Eigen::MatrixXd h = X * net.w_in.transpose();
  h.rowwise() += net.b_in.transpose();
  for (std::size_t k = 0; k < nb; ++k) {
    const KmpNetBlock& b = net.blocks[k];
    BlockCache& c = caches[k];
    c.t = layer_norm_rows(h, b.ln_gamma, b.ln_beta, c.ln);
    c.u = c.t * b.w1.transpose();
    c.u.rowwise() += b.b1.transpose();
    c.a = c.u.unaryExpr([](double x) { return gelu(x); });
    Eigen::MatrixXd v = c.a * b.w2.transpose();
    v.rowwise() += b.b2.transpose();
    if (dropout_masks) {
      const Eigen::MatrixXd& m = (*dropout_masks)[k];
      if (m.rows() != B || m.cols() != net.width) {
        throw InputError("kmp_net_loss_and_grad: dropout mask shape mismatch");
      }
      v.array() *= m.array();
    }
    h += v;
  }
  Eigen::MatrixXd yhat = h * net.w_out.transpose();
  yhat.rowwise() += net.b_out.transpose();

  const Eigen::MatrixXd resid = yhat - Y;
  const double denom = static_cast<double>(B) * static_cast<double>(net.output_dim);
  const double loss = resid.squaredNorm() / denom;

  // Backward.
  *grad = zeros_like(net);
  const Eigen::MatrixXd dy = (2.0 / denom) * resid;
  grad->w_out = dy.transpose() * h;
  grad->b_out = dy.colwise().sum().transpose();
  Eigen::MatrixXd dh = dy * net.w_out;
  for (std::size_t k = nb; k-- > 0;) {
    const KmpNetBlock& b = net.blocks[k];
    const BlockCache& c = caches[k];
    KmpNetBlock& g = grad->blocks[k];
    Eigen::MatrixXd dv = dh;  // branch share; the skip share stays in dh
    if (dropout_masks) dv.array() *= (*dropout_masks)[k].array();
    g.w2 = dv.transpose() * c.a;
    g.b2 = dv.colwise().sum().transpose();
    Eigen::MatrixXd du = (dv * b.w2).cwiseProduct(
        c.u.unaryExpr([](double x) { return gelu_grad(x); }));
    g.w1 = du.transpose() * c.t;
    g.b1 = du.colwise().sum().transpose();
    const Eigen::MatrixXd dt = du * b.w1;
    g.ln_gamma = dt.cwiseProduct(c.ln.nhat).colwise().sum().transpose();
    g.ln_beta = dt.colwise().sum().transpose();
    const Eigen::MatrixXd gz = dt * b.ln_gamma.asDiagonal();
    const Eigen::ArrayXd m1 = gz.rowwise().mean().array();
    const Eigen::ArrayXd m2 = gz.cwiseProduct(c.ln.nhat).rowwise().mean().array();
    Eigen::MatrixXd dx = gz;
    dx.array().colwise() -= m1;
    dx.array() -= c.ln.nhat.array().colwise() * m2;
    dx.array().colwise() *= c.ln.inv_s;
    dh += dx;
  }
  grad->w_in = dh.transpose() * X;
  grad->b_in = dh.colwise().sum().transpose();
  return loss;
}

namespace {

/// Raw 19-feature row; absent arm entries are NaN until imputation.
Eigen::RowVectorXd encode_raw(const CommandSample& c) {
  Eigen::RowVectorXd row(19);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto put = [&](int base, const std::optional<Pose>& target) {
    if (target) {
      row.segment<3>(base) = target->position.transpose();
      row.segment<6>(base + 3) = rotation_to_6d(target->orientation).transpose();
    } else {
      row.segment<9>(base).setConstant(nan);
    }
  };
  put(0, c.left_target);
  put(9, c.right_target);
  row[18] = c.alpha;
  return row;
}

KmpModel export_model(const KmpNet& net, KmpVariant variant, const Eigen::VectorXd& in_mean,
                      const Eigen::VectorXd& in_scale, const Eigen::VectorXd& out_mean,
                      const KinematicChain& chain, double dropout_rate) {
  KmpModel m;
  m.variant = variant;
  m.width = net.width;
  m.input_dim = net.input_dim;
  m.output_dim = net.output_dim;
  flatten_f32(net.w_in, m.w_in);
  flatten_f32(net.b_in, m.b_in);
  m.blocks.resize(net.blocks.size());
  for (std::size_t k = 0; k < net.blocks.size(); ++k) {
    const KmpNetBlock& b = net.blocks[k];
    KmpBlock& o = m.blocks[k];
    flatten_f32(b.ln_gamma, o.ln_gamma);
    flatten_f32(b.ln_beta, o.ln_beta);
    flatten_f32(b.w1, o.w1);
    flatten_f32(b.b1, o.b1);
    flatten_f32(b.w2, o.w2);
    flatten_f32(b.b2, o.b2);
  }
  flatten_f32(net.w_out, m.w_out);
  flatten_f32(net.b_out, m.b_out);
  m.in_mean = in_mean;
  m.in_scale = in_scale;
  m.out_mean = out_mean;
  m.out_scale = Eigen::VectorXd::Ones(net.output_dim);
  m.lower = chain.lower;
  m.upper = chain.upper;
  m.chain_hash = chain.hash;
  m.dropout_rate = dropout_rate;
  validate_model(m);
  return m;
}

}  // namespace

TrainResult kmp_train(const KinematicChain& chain, const Dataset& dataset, KmpVariant variant,
                      const TrainConfig& config) {
  if (chain.hash != dataset.meta.chain_hash) {
    throw ValidationError("kmp_train: dataset was generated for a different chain");
  }
  const std::size_t n = dataset.records.size();
  if (n < 1000) {
    throw InputError("kmp_train: need at least 1000 records, got " + std::to_string(n));
  }
  if (config.epochs < 1) throw InputError("kmp_train: epochs must be >= 1");
  if (config.batch_size < 1) throw InputError("kmp_train: batch size must be >= 1");
  if (!(config.learning_rate > 0) || !std::isfinite(config.learning_rate)) {
    throw InputError("kmp_train: learning rate must be positive and finite");
  }
  if (!(config.dropout_rate >= 0 && config.dropout_rate < 1)) {
    throw InputError("kmp_train: dropout rate must be in [0, 1)");
  }
  if (!(config.validation_fraction > 0 && config.validation_fraction <= 0.5)) {
    throw InputError("kmp_train: validation fraction must be in (0, 0.5]");
  }
  if (config.width < 0) throw InputError("kmp_train: width must be >= 0");
  const int width = config.width > 0 ? config.width : kmp_default_width(variant);
  const int blocks = kmp_block_count(variant);
  const int d_in = 19;
  const int d_out = chain.joint_count();
  for (const DatasetRecord& r : dataset.records) {
    if (r.q_solution.size() != d_out) {
      throw ValidationError("kmp_train: record joint dimension does not match the chain");
    }
  }

  // Feature matrix with mean imputation for absent arms: the imputed
  // entries normalize to exactly zero, matching encode_command.
  Eigen::MatrixXd Xraw(static_cast<Eigen::Index>(n), d_in);
  for (std::size_t i = 0; i < n; ++i) {
    Xraw.row(static_cast<Eigen::Index>(i)) = encode_raw(dataset.records[i].command);
  }
  Eigen::VectorXd in_mean(d_in), in_scale(d_in);
  for (int j = 0; j < d_in; ++j) {
    double sum = 0, sum2 = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = Xraw(static_cast<Eigen::Index>(i), j);
      if (std::isfinite(v)) {
        sum += v;
        sum2 += v * v;
        ++count;
      }
    }
    if (count == 0) {
      in_mean[j] = 0;
      in_scale[j] = 1;
    } else {
      const double mu = sum / static_cast<double>(count);
      const double var = std::max(0.0, sum2 / static_cast<double>(count) - mu * mu);
      in_mean[j] = mu;
      in_scale[j] = std::max(std::sqrt(var), 1e-6);
    }
  }
  Eigen::MatrixXd Xall(static_cast<Eigen::Index>(n), d_in);
  for (Eigen::Index i = 0; i < Xall.rows(); ++i) {
    for (int j = 0; j < d_in; ++j) {
      const double v = Xraw(i, j);
      Xall(i, j) = std::isfinite(v) ? (v - in_mean[j]) / in_scale[j] : 0.0;
    }
  }
  Xraw.resize(0, 0);

  // Outputs are centered but not scaled, so the normalized-space MSE
  // is exactly the mean squared joint-angle error in rad^2.
  Eigen::VectorXd out_mean = Eigen::VectorXd::Zero(d_out);
  for (const DatasetRecord& r : dataset.records) out_mean += r.q_solution;
  out_mean /= static_cast<double>(n);
  Eigen::MatrixXd Yall(static_cast<Eigen::Index>(n), d_out);
  for (std::size_t i = 0; i < n; ++i) {
    Yall.row(static_cast<Eigen::Index>(i)) = (dataset.records[i].q_solution - out_mean).transpose();
  }

  // Validation split.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  {
    Rng rng(derive_seed(config.seed, kStreamSplit, 0));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.below(i + 1)]);
    }
  }
  const std::size_t val_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n))),
      1, n - 1);
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_count));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(val_count), idx.end());
  const std::size_t train_count = train_idx.size();

  Eigen::MatrixXd Xval(static_cast<Eigen::Index>(val_count), d_in);
  Eigen::MatrixXd Yval(static_cast<Eigen::Index>(val_count), d_out);
  for (std::size_t i = 0; i < val_count; ++i) {
    Xval.row(static_cast<Eigen::Index>(i)) = Xall.row(static_cast<Eigen::Index>(val_idx[i]));
    Yval.row(static_cast<Eigen::Index>(i)) = Yall.row(static_cast<Eigen::Index>(val_idx[i]));
  }

  KmpNet net = kmp_net_init(d_in, d_out, width, blocks, derive_seed(config.seed, kStreamInit, 0),
                            /*zero_decoder=*/true);
  KmpNet m_state = zeros_like(net);
  KmpNet v_state = zeros_like(net);
  KmpNet grad = zeros_like(net);
  auto params = tensor_views(net);
  auto m_views = tensor_views(m_state);
  auto v_views = tensor_views(v_state);

  const std::size_t steps_per_epoch = (train_count + static_cast<std::size_t>(config.batch_size) - 1) /
                                      static_cast<std::size_t>(config.batch_size);
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(config.epochs);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  TrainReport report;
  KmpModel checkpoint = export_model(net, variant, in_mean, in_scale, out_mean, chain,
                                     config.dropout_rate);
  const auto diverged = [&](const std::string& where) -> TrainingDivergedError {
    return TrainingDivergedError("kmp_train: non-finite " + where + " after " +
                                     std::to_string(report.val_loss.size()) +
                                     " completed epochs; returning the last stable checkpoint",
                                 checkpoint, report);
  };

  std::size_t global_step = 0;
  const bool use_dropout = config.dropout_rate > 0;
  std::vector<Eigen::MatrixXd> masks;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    {
      Rng rng(derive_seed(config.seed, kStreamShuffle, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = train_count - 1; i > 0; --i) {
        std::swap(train_idx[i], train_idx[rng.below(i + 1)]);
      }
    }
    double epoch_loss_sum = 0;
    for (std::size_t start = 0; start < train_count; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                                   train_count - start);
      Eigen::MatrixXd Xb(static_cast<Eigen::Index>(bs), d_in);
      Eigen::MatrixXd Yb(static_cast<Eigen::Index>(bs), d_out);
      for (std::size_t i = 0; i < bs; ++i) {
        Xb.row(static_cast<Eigen::Index>(i)) = Xall.row(static_cast<Eigen::Index>(train_idx[start + i]));
        Yb.row(static_cast<Eigen::Index>(i)) = Yall.row(static_cast<Eigen::Index>(train_idx[start + i]));
      }
      if (use_dropout) {
        Rng rng(derive_seed(config.seed, kStreamDropout, global_step));
        const double keep = 1.0 - config.dropout_rate;
        const double inv_keep = 1.0 / keep;
        masks.assign(static_cast<std::size_t>(blocks),
                     Eigen::MatrixXd(static_cast<Eigen::Index>(bs), width));
        for (Eigen::MatrixXd& m : masks) {
          for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
              m(r, c) = rng.next_double() < keep ? inv_keep : 0.0;
            }
          }
        }
      }
      const double loss = kmp_net_loss_and_grad(net, Xb, Yb, use_dropout ? &masks : nullptr, &grad);
      if (!std::isfinite(loss)) throw diverged("training loss");
      epoch_loss_sum += loss * static_cast<double>(bs);

      const double lr = config.learning_rate * 0.5 *
                        (1.0 + std::cos(M_PI * static_cast<double>(global_step) /
                                        static_cast<double>(total_steps)));
      ++global_step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(global_step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(global_step));
      auto g_views = tensor_views(grad);
      for (std::size_t t = 0; t < params.size(); ++t) {
        m_views[t] = kBeta1 * m_views[t] + (1.0 - kBeta1) * g_views[t];
        v_views[t] = kBeta2 * v_views[t] + (1.0 - kBeta2) * g_views[t].square();
        params[t] -= lr * (m_views[t] / bc1) / ((v_views[t] / bc2).sqrt() + kAdamEps);
      }
    }
    const double train_loss = epoch_loss_sum / static_cast<double>(train_count);

    const Eigen::MatrixXd pred = kmp_net_forward(net, Xval);
    const double val_loss = (pred - Yval).squaredNorm() /
                            (static_cast<double>(val_count) * static_cast<double>(d_out));
    if (!std::isfinite(val_loss)) throw diverged("validation loss");

    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val_loss);
    checkpoint = export_model(net, variant, in_mean, in_scale, out_mean, chain, config.dropout_rate);
  }

  return TrainResult{std::move(checkpoint), std::move(report)};
}

}  // namespace mkin

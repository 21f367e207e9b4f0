#include "manifold_kin/ik.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>

#include "manifold_kin/errors.hpp"
#include "manifold_kin/rng.hpp"
#include "manifold_kin/stats.hpp"
#include "manifold_kin/threads.hpp"

namespace mkin {

namespace {

struct ArmTask {
  Side side;
  const Pose* target;
  int row;  // first of its 6 residual rows
};

struct Workspace {
  Eigen::VectorXd r;       // residual
  Eigen::MatrixXd J;       // d r / d q
  Eigen::MatrixXd JtJ;
  Eigen::VectorXd g;       // J^T r
  Eigen::VectorXd dq;
  Eigen::VectorXd q_try;
};

double evaluate(const KinematicChain& chain, const IkProblem& p, const std::vector<ArmTask>& tasks,
                const Eigen::VectorXd& reg_weights, const Eigen::VectorXd& q, FkResult& fk,
                Eigen::VectorXd& r) {
  fk = forward_kinematics(chain, q);
  const double sw_pos = std::sqrt(p.weights.position);
  const double sw_rot = std::sqrt(p.weights.orientation);
  for (const auto& t : tasks) {
    const Pose& cur = fk.ee(t.side);
    r.segment<3>(t.row) = sw_pos * (t.target->position - cur.position);
    r.segment<3>(t.row + 3) = sw_rot * orientation_delta(cur, *t.target);
  }
  r.tail(chain.joint_count()) = reg_weights.cwiseProduct(q - chain.defaults);
  return r.squaredNorm();
}

struct Attempt {
  Eigen::VectorXd q;
  double cost = 0;
  FkResult fk;
  int iterations = 0;
  std::vector<double> trace;
  bool converged = false;
};

/// One damped Gauss-Newton descent from q0 (assumed within limits).
Attempt descend(const KinematicChain& chain, const IkProblem& problem, const std::vector<ArmTask>& tasks,
                const Eigen::VectorXd& reg_weights, const IkOptions& opts, Eigen::VectorXd q0) {
  const int n = chain.joint_count();
  const int rows = static_cast<int>(tasks.size()) * 6 + n;
  const int reg_row = static_cast<int>(tasks.size()) * 6;
  const double sw_pos = std::sqrt(problem.weights.position);
  const double sw_rot = std::sqrt(problem.weights.orientation);

  Workspace ws;
  ws.r.resize(rows);
  ws.J.resize(rows, n);
  ws.JtJ.resize(n, n);
  ws.g.resize(n);
  ws.q_try.resize(n);
  Eigen::VectorXd r_try(rows);

  Attempt a;
  a.q = std::move(q0);
  a.cost = evaluate(chain, problem, tasks, reg_weights, a.q, a.fk, ws.r);
  a.trace.push_back(a.cost);

  // The loop minimizes the full cost to a stall or the iteration cap;
  // the position tolerance only defines the converged flag afterwards.
  // Stopping at the first in-tolerance iterate would leave the
  // orientation terms unpolished.
  double lambda = opts.damping;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    ++a.iterations;

    // Linearize: task rows are -w * geometric Jacobian, regularizer
    // rows are the identity scaled per joint.
    ws.J.setZero();
    for (const auto& t : tasks) {
      const auto Jg = geometric_jacobian(chain, a.q, t.side);
      ws.J.block(t.row, 0, 3, n) = -sw_pos * Jg.topRows<3>();
      ws.J.block(t.row + 3, 0, 3, n) = -sw_rot * Jg.bottomRows<3>();
    }
    for (int i = 0; i < n; ++i) ws.J(reg_row + i, i) = reg_weights[i];

    ws.JtJ.noalias() = ws.J.transpose() * ws.J;
    ws.g.noalias() = ws.J.transpose() * ws.r;

    // Damping ladder, then backtracking on the most-damped step. The
    // ladder climbs until the step is effectively scaled gradient
    // descent; only a stationary (or limit-pinned) point fails that.
    bool accepted = false;
    double try_lambda = lambda;
    while (try_lambda <= 1e10 && !accepted) {
      Eigen::MatrixXd H = ws.JtJ;
      H.diagonal().array() += try_lambda;
      ws.dq = H.ldlt().solve(-ws.g);
      ws.q_try = clamp_to_limits(chain, a.q + ws.dq);
      FkResult fk_try;
      const double cost_try = evaluate(chain, problem, tasks, reg_weights, ws.q_try, fk_try, r_try);
      if (cost_try < a.cost) {
        a.q = ws.q_try;
        a.cost = cost_try;
        a.fk = fk_try;
        ws.r = r_try;
        lambda = std::max(try_lambda / 3.0, 1e-9);
        accepted = true;
        break;
      }
      try_lambda *= 10.0;
    }
    if (!accepted) {
      for (double scale : {0.5, 0.25, 0.125}) {
        ws.q_try = clamp_to_limits(chain, a.q + scale * ws.dq);
        FkResult fk_try;
        const double cost_try = evaluate(chain, problem, tasks, reg_weights, ws.q_try, fk_try, r_try);
        if (cost_try < a.cost) {
          a.q = ws.q_try;
          a.cost = cost_try;
          a.fk = fk_try;
          ws.r = r_try;
          lambda = try_lambda;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;  // stalled: no descent direction at this linearization

    a.trace.push_back(a.cost);
  }

  a.converged = true;
  for (const auto& t : tasks) {
    if (position_error(a.fk.ee(t.side), *t.target) >= opts.tolerance) a.converged = false;
  }
  return a;
}

}  // namespace

double IkResult::max_position_error() const {
  double e = 0;
  if (left_position_error) e = std::max(e, *left_position_error);
  if (right_position_error) e = std::max(e, *right_position_error);
  return e;
}

IkResult solve_ik(const KinematicChain& chain, const IkProblem& problem, const IkOptions& opts) {
  if (!problem.left_target && !problem.right_target) {
    throw InputError("solve_ik: at least one target must be present");
  }
  if (problem.alpha < 0.1 || problem.alpha > 10.0) {
    throw InputError("solve_ik: alpha outside [0.1, 10]");
  }
  if (opts.max_iterations < 1) throw InputError("solve_ik: max_iterations must be >= 1");
  if ((problem.left_target && !problem.left_target->is_finite()) ||
      (problem.right_target && !problem.right_target->is_finite())) {
    throw InputError("solve_ik: non-finite target pose");
  }

  const int n = chain.joint_count();
  Eigen::VectorXd q;
  if (problem.initial_q.size() == 0) {
    q = chain.defaults;
  } else {
    if (problem.initial_q.size() != n) throw InputError("solve_ik: initial_q has wrong dimension");
    if (!problem.initial_q.allFinite()) throw InputError("solve_ik: non-finite initial_q");
    q = clamp_to_limits(chain, problem.initial_q);
  }

  std::vector<ArmTask> tasks;
  if (problem.left_target) tasks.push_back({Side::left, &*problem.left_target, 0});
  if (problem.right_target) {
    tasks.push_back({Side::right, &*problem.right_target, static_cast<int>(tasks.size()) * 6});
  }

  const double sw_alpha = std::sqrt(problem.alpha);
  const double sw_other = std::sqrt(problem.weights.other_joints_reg);

  // Per-joint regularizer weights: alpha on the waist, the fixed
  // other-joints weight everywhere else.
  Eigen::VectorXd reg_weights = Eigen::VectorXd::Constant(n, sw_other);
  for (int i : chain.groups.waist) reg_weights[i] = sw_alpha;

  Attempt best = descend(chain, problem, tasks, reg_weights, opts, q);
  int total_iterations = best.iterations;

  // Pose targets carry discrete local minima (elbow-up vs. elbow-down
  // and mirrored waist postures). When the given start stalls short of
  // tolerance, retry from a fixed, seed-derived sequence of in-limit
  // configurations; results stay a pure function of the inputs.
  for (int restart = 1; restart <= opts.max_restarts && !best.converged; ++restart) {
    Rng rng(derive_seed(0x696b5f72657374ULL, static_cast<uint64_t>(restart), 0));
    Eigen::VectorXd q0(n);
    for (int i = 0; i < n; ++i) q0[i] = rng.uniform(chain.lower[i], chain.upper[i]);
    Attempt attempt = descend(chain, problem, tasks, reg_weights, opts, std::move(q0));
    total_iterations += attempt.iterations;
    if (attempt.converged || attempt.cost < best.cost) best = std::move(attempt);
  }

  IkResult out;
  out.q = best.q;
  out.iterations = total_iterations;
  out.converged = best.converged;
  out.cost_trace = std::move(best.trace);
  if (problem.left_target) {
    out.left_position_error = position_error(best.fk.left, *problem.left_target);
    out.left_orientation_error = orientation_error(best.fk.left, *problem.left_target);
  }
  if (problem.right_target) {
    out.right_position_error = position_error(best.fk.right, *problem.right_target);
    out.right_orientation_error = orientation_error(best.fk.right, *problem.right_target);
  }
  return out;
}

std::vector<IkResult> batch_solve(const KinematicChain& chain, const std::vector<IkProblem>& problems,
                                  const IkOptions& opts) {
  if (problems.empty()) throw InputError("batch_solve: empty problem list");
  std::vector<IkResult> results(problems.size());
  parallel_for(static_cast<std::int64_t>(problems.size()), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      try {
        results[static_cast<std::size_t>(i)] = solve_ik(chain, problems[static_cast<std::size_t>(i)], opts);
      } catch (const Error& e) {
        results[static_cast<std::size_t>(i)].converged = false;
        results[static_cast<std::size_t>(i)].error = e.what();
      }
    }
  });
  return results;
}

std::vector<LatencyRow> solver_latency_profile(const KinematicChain& chain,
                                               const std::vector<IkProblem>& problems,
                                               const std::vector<int>& iteration_caps, int solves) {
  if (problems.empty()) throw InputError("solver_latency_profile: empty problem list");
  for (int cap : iteration_caps) {
    if (cap < 1) throw InputError("solver_latency_profile: iteration caps must be >= 1");
  }

  using clock = std::chrono::steady_clock;
  std::vector<LatencyRow> table;
  volatile double sink = 0;

  for (int cap : iteration_caps) {
    IkOptions opts;
    opts.max_iterations = cap;
    opts.tolerance = 0.0;  // never converge early: measure the full cap
    opts.max_restarts = 0;  // time one descent from one start, the unit a tracker pays per tick

    const int warmup = std::min<int>(100, solves);
    for (int i = 0; i < warmup; ++i) {
      sink = sink + solve_ik(chain, problems[static_cast<std::size_t>(i) % problems.size()], opts).q[0];
    }

    std::vector<double> us;
    us.reserve(static_cast<std::size_t>(solves));
    for (int i = 0; i < solves; ++i) {
      const auto& p = problems[static_cast<std::size_t>(i) % problems.size()];
      const auto t0 = clock::now();
      const IkResult r = solve_ik(chain, p, opts);
      const auto t1 = clock::now();
      sink = sink + r.q[0];
      us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    table.push_back({cap, mean(us), median(us)});
  }
  (void)sink;
  return table;
}

}  // namespace mkin

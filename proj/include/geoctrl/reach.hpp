#pragma once

// Monte-Carlo reachability for the drifted system and the checks that
// compare its point clouds with criterion verdicts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "geoctrl/criterion.hpp"
#include "geoctrl/error.hpp"
#include "geoctrl/ode.hpp"
#include "geoctrl/parallel.hpp"
#include "geoctrl/system.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

enum class PolicyKind { kPiecewiseConstantRandom, kBangBang, kGreedyTowardTarget };

inline const char* PolicyName(PolicyKind k) {
  switch (k) {
    case PolicyKind::kPiecewiseConstantRandom: return "piecewise_constant_random";
    case PolicyKind::kBangBang: return "bang_bang";
    case PolicyKind::kGreedyTowardTarget: return "greedy_toward_target";
  }
  return "unknown";
}

struct ControlPolicy {
  PolicyKind kind = PolicyKind::kPiecewiseConstantRandom;
  double amplitude = 5.0;
  double min_segment = 0.05;
  double max_segment = 0.5;
  // Greedy policy: a fixed target, or else a random target per trajectory
  // redrawn at each segment with `retarget_probability`.
  std::optional<Point> target;
  double retarget_probability = 0.2;
  double jitter = 0.1;  // fraction of the amplitude added as noise
  // Greedy policy: random candidate controls tried by a rollout over the
  // segment; the one ending nearest the target (in window units) wins.
  int lookahead = 0;
};

inline void ValidatePolicy(const ControlPolicy& p) {
  if (!(p.amplitude > 0)) throw Error(ErrorCode::kDomain, "control amplitude must be positive");
  if (!(p.min_segment > 0 && p.min_segment <= p.max_segment)) {
    throw Error(ErrorCode::kDomain, "segment duration bounds must be positive and ordered");
  }
  if (!(p.retarget_probability >= 0 && p.retarget_probability <= 1)) {
    throw Error(ErrorCode::kDomain, "retarget probability must lie in [0, 1]");
  }
  if (p.lookahead < 0) throw Error(ErrorCode::kDomain, "lookahead must be >= 0");
}

/// Boolean occupancy over a box split into `cells` equal cells per axis,
/// stored with the first axis slowest.
class Occupancy {
 public:
  Occupancy(Box window, int cells) : window_(std::move(window)), cells_(cells) {
    if (cells < 1) throw Error(ErrorCode::kDomain, "cells per axis must be >= 1");
    std::size_t total = 1;
    for (int i = 0; i < window_.dim(); ++i) total *= static_cast<std::size_t>(cells);
    occupied_.assign(total, 0);
  }

  /// Marks the cell holding `p`; points outside the box are ignored.
  void Add(const Point& p) {
    std::size_t index = 0;
    for (int i = 0; i < window_.dim(); ++i) {
      if (!(p[i] >= window_.lo[i] && p[i] <= window_.hi[i])) return;
      const double u = (p[i] - window_.lo[i]) / (window_.hi[i] - window_.lo[i]);
      const int c = std::min(cells_ - 1, static_cast<int>(u * cells_));
      index = index * cells_ + c;
    }
    occupied_[index] = 1;
  }

  void Merge(const Occupancy& other) {
    for (std::size_t i = 0; i < occupied_.size(); ++i) occupied_[i] |= other.occupied_[i];
  }

  double Fraction() const {
    if (occupied_.empty()) return 0.0;
    return static_cast<double>(std::count(occupied_.begin(), occupied_.end(), 1)) /
           static_cast<double>(occupied_.size());
  }

  const std::vector<char>& cells() const { return occupied_; }
  int cells_per_axis() const { return cells_; }

 private:
  Box window_;
  int cells_;
  std::vector<char> occupied_;
};

struct CloudPoint {
  int traj = 0;
  double t = 0.0;
  Point x;
};

struct ReachCloud {
  Point origin;
  double horizon = 0.0;
  int trajectories = 0;
  int truncated = 0;  // trajectories stopped by a window escape or domain error
  std::vector<CloudPoint> points;
};

struct ReachSystem {
  std::vector<FlowField> drifts;
  std::vector<FlowField> controls;
  Box window;
};

/// Drifts and controls of `spec`, with the drifts negated for the
/// time-reversed system.
inline ReachSystem MakeReachSystem(const SystemSpec& spec, bool reversed = false) {
  ReachSystem sys;
  for (const auto& f : spec.DriftFields()) sys.drifts.emplace_back(reversed ? -f : f);
  sys.controls = CompileFields(spec.ControlFields());
  sys.window = spec.window;
  return sys;
}

namespace detail {

inline Point RandomPointIn(const Box& box, Rng& rng) {
  Point p(box.dim());
  for (int i = 0; i < box.dim(); ++i) p[i] = rng.Uniform(box.lo[i], box.hi[i]);
  return p;
}

inline Vector DrawControl(const ReachSystem& sys, const ControlPolicy& policy, const Point& x,
                          const Point& target, Rng& rng) {
  const int m = static_cast<int>(sys.controls.size());
  Vector u(m);
  switch (policy.kind) {
    case PolicyKind::kPiecewiseConstantRandom:
      for (int i = 0; i < m; ++i) u[i] = rng.Uniform(-policy.amplitude, policy.amplitude);
      break;
    case PolicyKind::kBangBang:
      for (int i = 0; i < m; ++i) u[i] = rng.Sign() * policy.amplitude;
      break;
    case PolicyKind::kGreedyTowardTarget: {
      // Per control direction, the push that would close the remaining gap
      // along g_i within one longest segment, saturated and jittered.
      const Vector to_target = target - x;
      for (int i = 0; i < m; ++i) {
        const Vector g = sys.controls[i](x);
        const double gg = g.squaredNorm();
        const double push = gg > 1e-12 ? g.dot(to_target) / (gg * policy.max_segment) : 0.0;
        u[i] = std::clamp(push, -policy.amplitude, policy.amplitude) +
               policy.jitter * policy.amplitude * rng.Uniform(-1, 1);
      }
      break;
    }
  }
  return u;
}

inline Vector BestRollout(const ReachSystem& sys, const FlowField& f, const ControlPolicy& policy,
                          const Point& x, const Point& target, const Vector& greedy,
                          double duration, const StepControl& step, Rng& rng) {
  const Vector scale = (sys.window.hi - sys.window.lo).cwiseInverse();
  const auto inside = [&sys](const Vector& y) { return sys.window.Contains(y); };
  Vector best = greedy;
  double best_score = std::numeric_limits<double>::infinity();
  for (int c = 0; c <= policy.lookahead; ++c) {
    Vector u = greedy;
    if (c > 0) {
      for (int i = 0; i < u.size(); ++i) u[i] = rng.Uniform(-policy.amplitude, policy.amplitude);
    }
    auto rhs = [&](const Vector& y) -> Vector {
      Vector dy = f(y);
      for (int i = 0; i < u.size(); ++i) {
        if (u[i] != 0.0) dy += u[i] * sys.controls[i](y);
      }
      return dy;
    };
    try {
      double hint = step.initial_step;
      const Point end = IntegrateRK45(rhs, x, duration, step, inside, &hint);
      const double score = (end - target).cwiseProduct(scale).norm();
      if (score < best_score) {
        best_score = score;
        best = u;
      }
    } catch (const Error&) {
    }
  }
  return best;
}

}  // namespace detail

/// Integrates x' = f_j(x) + sum u^i g_i(x) under `n_traj` random control
/// realizations of `policy`, recording the state at every multiple of
/// `stride` and at T. For drift families the active drift is redrawn at
/// each segment. Trajectories leaving the window stop there; the points
/// recorded before the escape are kept.
inline ReachCloud SimulateReach(const ReachSystem& sys, const Point& x0, double horizon,
                                int n_traj, const ControlPolicy& policy, double stride,
                                std::uint64_t seed, const StepControl& step = {1e-6, 1e-6}) {
  if (!(horizon > 0)) throw Error(ErrorCode::kDomain, "horizon must be positive");
  if (n_traj < 1) throw Error(ErrorCode::kDomain, "n_traj must be >= 1");
  if (!(stride > 0)) throw Error(ErrorCode::kDomain, "sample stride must be positive");
  ValidatePolicy(policy);
  if (sys.drifts.empty()) throw Error(ErrorCode::kEmptyInput, "system has no drift");
  if (!sys.window.Contains(x0)) throw Error(ErrorCode::kDomain, "start point outside the window");

  std::vector<std::vector<CloudPoint>> per_traj(n_traj);
  std::vector<char> truncated(n_traj, 0);
  const auto inside = [&sys](const Vector& y) { return sys.window.Contains(y); };
  ParallelFor(n_traj, [&](int id) {
    Rng rng(DeriveSeed(seed, id));
    std::vector<CloudPoint>& out = per_traj[id];
    out.push_back({id, 0.0, x0});
    Point x = x0;
    double t = 0.0;
    long next_sample = 1;
    double hint = step.initial_step;
    const bool greedy = policy.kind == PolicyKind::kGreedyTowardTarget;
    Point target = greedy && policy.target ? *policy.target : Point();
    if (greedy && !policy.target) target = detail::RandomPointIn(sys.window, rng);
    try {
      while (t < horizon) {
        if (greedy && !policy.target && rng.Uniform() < policy.retarget_probability) {
          target = detail::RandomPointIn(sys.window, rng);
        }
        const double seg_end =
            std::min(horizon, t + rng.Uniform(policy.min_segment, policy.max_segment));
        const int drift = static_cast<int>(sys.drifts.size()) > 1
                              ? rng.Index(static_cast<int>(sys.drifts.size()))
                              : 0;
        Vector u = detail::DrawControl(sys, policy, x, target, rng);
        const FlowField& f = sys.drifts[drift];
        if (greedy && policy.lookahead > 0) {
          u = detail::BestRollout(sys, f, policy, x, target, u, seg_end - t, step, rng);
        }
        auto rhs = [&](const Vector& y) -> Vector {
          Vector dy = f(y);
          for (int i = 0; i < u.size(); ++i) {
            if (u[i] != 0.0) dy += u[i] * sys.controls[i](y);
          }
          return dy;
        };
        while (t < seg_end) {
          const double sample_t = next_sample * stride;
          const double stop = std::min(seg_end, sample_t);
          x = IntegrateRK45(rhs, x, stop - t, step, inside, &hint);
          t = stop;
          if (t == sample_t || (t == horizon && sample_t > horizon)) {
            out.push_back({id, t, x});
            if (t == sample_t) ++next_sample;
          }
        }
      }
    } catch (const Error&) {
      truncated[id] = 1;
    }
  });

  ReachCloud cloud;
  cloud.origin = x0;
  cloud.horizon = horizon;
  cloud.trajectories = n_traj;
  for (int id = 0; id < n_traj; ++id) {
    cloud.truncated += truncated[id];
    for (auto& p : per_traj[id]) cloud.points.push_back(std::move(p));
  }
  return cloud;
}

inline ReachCloud SimulateReach(const SystemSpec& spec, const Point& x0, double horizon,
                                int n_traj, const ControlPolicy& policy, double stride,
                                std::uint64_t seed) {
  return SimulateReach(MakeReachSystem(spec), x0, horizon, n_traj, policy, stride, seed);
}

/// Fraction of window cells holding at least one cloud point.
inline double Coverage(const ReachCloud& cloud, const Box& window, int cells_per_axis) {
  Occupancy occ(window, cells_per_axis);
  for (const auto& p : cloud.points) occ.Add(p.x);
  return occ.Fraction();
}

/// Separating covector frozen at a base point.
struct SeparatingWitness {
  Point base;
  Matrix quotient_basis;  // n x k
  Vector covector;        // k
};

/// True iff <d, pi(p - x0)> >= -tol for every cloud point. Exact only when
/// the quotient direction is the same over the whole window.
inline bool MonotoneWitnessCheck(const ReachCloud& cloud, const SeparatingWitness& w,
                                 double tol) {
  const Vector ambient = w.quotient_basis * w.covector;
  for (const auto& p : cloud.points) {
    if (ambient.dot(p.x - w.base) < -tol) return false;
  }
  return true;
}

/// One row per point: traj_id, t, x1..xn.
inline void WriteCloudCsv(std::ostream& out, const ReachCloud& cloud,
                          const std::vector<std::string>& var_names) {
  out << "traj_id,t";
  for (const auto& v : var_names) out << ',' << v;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& p : cloud.points) {
    out << p.traj << ',' << p.t;
    for (Eigen::Index i = 0; i < p.x.size(); ++i) out << ',' << p.x[i];
    out << '\n';
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// Cross-validation against the criterion verdict

enum class Agreement { kAgree, kDisagree, kUntested };

inline const char* AgreementName(Agreement a) {
  switch (a) {
    case Agreement::kAgree: return "AGREE";
    case Agreement::kDisagree: return "DISAGREE";
    case Agreement::kUntested: return "UNTESTED";
  }
  return "UNKNOWN";
}

struct OracleCheck {
  Point start;
  std::string direction;  // "forward", "reverse" or "witness"
  double coverage = 0.0;  // forward/reverse
  bool witness_ok = false;
  bool agree = false;
  int truncated = 0;
};

struct OracleReport {
  Agreement status = Agreement::kUntested;
  std::vector<OracleCheck> checks;
  bool witness_exact = false;  // G spans the same subspace over the window
  std::string note;
};

struct OracleBudget {
  int n_traj = 2000;
  double horizon = 20.0;
  int cells = 8;
  double threshold = 0.9;
  double stride = 0.1;
  double witness_tol = 1e-6;
  int max_witness_points = 5;
};

inline OracleBudget OracleBudgetFor(const SystemSpec& spec) {
  OracleBudget b;
  b.n_traj = spec.budgets.n_traj;
  b.horizon = spec.budgets.horizon;
  b.cells = spec.budgets.coverage_cells;
  b.threshold = spec.budgets.coverage_threshold;
  return b;
}

/// Start points for the coverage check: the window center and four random
/// points from the central half of the window.
inline std::vector<Point> OracleStarts(const Box& window, std::uint64_t seed) {
  std::vector<Point> starts{window.Center()};
  Rng rng(DeriveSeed(seed, 0x0AC1Eull));
  for (int s = 0; s < 4; ++s) {
    Point p(window.dim());
    for (int i = 0; i < window.dim(); ++i) {
      const double quarter = 0.25 * (window.hi[i] - window.lo[i]);
      p[i] = rng.Uniform(window.lo[i] + quarter, window.hi[i] - quarter);
    }
    starts.push_back(std::move(p));
  }
  return starts;
}

/// Certified verdicts are checked by coverage of the forward and the
/// time-reversed system from several starts; evidence of non-controllability
/// by checking that clouds from failing base points never cross the
/// separating witness.
inline OracleReport CrossValidate(const GlobalVerdict& verdict, const AnalysisContext& ctx,
                                  const SystemSpec& spec, const OracleBudget& budget,
                                  std::uint64_t seed) {
  OracleReport report;
  // Random controls explore for crossings of the witness; retargeting
  // greedy controls reach far cells of the window before leaving it.
  const ControlPolicy explore;
  ControlPolicy steer;
  steer.kind = PolicyKind::kGreedyTowardTarget;
  steer.lookahead = 3;
  if (verdict.status == VerdictStatus::kControllableCertified) {
    const ReachSystem forward = MakeReachSystem(spec, false);
    const ReachSystem reverse = MakeReachSystem(spec, true);
    const std::vector<Point> starts = OracleStarts(spec.window, seed);
    bool all = true;
    for (std::size_t s = 0; s < starts.size(); ++s) {
      for (int dir = 0; dir < 2; ++dir) {
        const ReachCloud cloud =
            SimulateReach(dir == 0 ? forward : reverse, starts[s], budget.horizon, budget.n_traj,
                          steer, budget.stride, DeriveSeed(seed, 2 * s + dir));
        OracleCheck check;
        check.start = starts[s];
        check.direction = dir == 0 ? "forward" : "reverse";
        check.coverage = Coverage(cloud, spec.window, budget.cells);
        check.agree = check.coverage >= budget.threshold;
        check.truncated = cloud.truncated;
        all = all && check.agree;
        report.checks.push_back(std::move(check));
      }
    }
    report.status = all ? Agreement::kAgree : Agreement::kDisagree;
    return report;
  }
  if (verdict.status == VerdictStatus::kUncontrollableEvidence) {
    const ReachSystem forward = MakeReachSystem(spec, false);
    // The witness is exact when G|_x is the same subspace at every grid point.
    report.witness_exact = true;
    const Matrix q0 = QuotientProjection(ctx.family.EvaluateAt(ctx.audit.grid.front()));
    for (const auto& p : ctx.audit.grid) {
      const Matrix q = QuotientProjection(ctx.family.EvaluateAt(p));
      if ((q * q.transpose() - q0 * q0.transpose()).norm() > 1e-9) {
        report.witness_exact = false;
        break;
      }
    }
    bool all = true;
    int used = 0;
    for (std::size_t i = 0; i < verdict.points.size() && used < budget.max_witness_points; ++i) {
      const PointVerdict& pv = verdict.points[i];
      if (pv.condition_holds) continue;
      const ReachCloud cloud = SimulateReach(forward, pv.base, budget.horizon, budget.n_traj,
                                             explore, budget.stride, DeriveSeed(seed, 1000 + i));
      OracleCheck check;
      check.start = pv.base;
      check.direction = "witness";
      check.witness_ok =
          MonotoneWitnessCheck(cloud, {pv.base, pv.quotient_basis, pv.covector}, budget.witness_tol);
      check.agree = check.witness_ok;
      check.truncated = cloud.truncated;
      all = all && check.agree;
      report.checks.push_back(std::move(check));
      ++used;
    }
    report.status = all ? Agreement::kAgree : Agreement::kDisagree;
    if (!report.witness_exact) {
      report.note = "G varies over the window; the witness check is heuristic";
    }
    return report;
  }
  report.status = Agreement::kUntested;
  report.note = std::string("no oracle check for status ") + StatusName(verdict.status);
  return report;
}

}  // namespace geoctrl

#pragma once

// Shooting estimators for the control cost d(x, y), the driftless distance
// of the extended system, and the loop length. Every value is an upper
// bound: the cost of the best control word found.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/SVD>

#include "geoctrl/error.hpp"
#include "geoctrl/leaf.hpp"
#include "geoctrl/ode.hpp"
#include "geoctrl/parallel.hpp"
#include "geoctrl/system.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

/// Constant controls held for `duration`.
struct ControlSegment {
  Vector u;
  double duration = 0.0;
};

struct CostEstimate {
  bool reachable = false;
  double value = std::numeric_limits<double>::infinity();
  std::vector<ControlSegment> word;
  double endpoint_error = std::numeric_limits<double>::infinity();
  int budget_spent = 0;
  double horizon_cap = 0.0;
};

struct MetricOptions {
  int budget = 48;             // shooting candidates
  double endpoint_tol = 1e-2;
  int segments = 4;
  double amplitude = 10.0;     // bound on each control entry during search
  double horizon_cap = 50.0;
  int evaluations = 2000;      // refinement evaluations per candidate
  StepControl step{1e-8, 1e-8};
};

/// A shooting problem on piecewise-constant controls: the state moves with
/// velocity(x, u) and accumulates running_cost(x, u).
struct ShootingProblem {
  int m = 0;  // control entries per segment
  std::function<Vector(const Vector&, const Vector&)> velocity;
  std::function<double(const Vector&, const Vector&)> running_cost;
  Point from;
  Point to;
  double min_duration = 0.0;  // loops need a nontrivial duration
  std::optional<std::vector<ControlSegment>> seed_word;  // tried as candidate 0
};

namespace detail {

struct Rollout {
  double cost = std::numeric_limits<double>::infinity();
  double error = std::numeric_limits<double>::infinity();
  double total = 0.0;
};

inline Rollout RollOut(const ShootingProblem& p, const std::vector<ControlSegment>& word,
                       const StepControl& step) {
  Rollout r;
  const int n = static_cast<int>(p.from.size());
  Vector state(n + 1);
  state << p.from, 0.0;
  try {
    for (const auto& seg : word) {
      r.total += seg.duration;
      if (seg.duration <= 0) continue;
      state = IntegrateRK45(
          [&](const Vector& s) -> Vector {
            const Vector x = s.head(n);
            Vector ds(n + 1);
            ds.head(n) = p.velocity(x, seg.u);
            ds[n] = p.running_cost(x, seg.u);
            return ds;
          },
          state, seg.duration, step, [](const Vector& s) { return s.allFinite(); });
    }
  } catch (const Error&) {
    return r;
  }
  r.cost = state[n];
  r.error = (state.head(n) - p.to).norm();
  return r;
}

inline std::vector<ControlSegment> Unpack(const Vector& params, int m, double cap) {
  const int k = static_cast<int>(params.size()) / (m + 1);
  std::vector<ControlSegment> word(k);
  double total = 0.0;
  for (int s = 0; s < k; ++s) {
    word[s].u = params.segment(s * (m + 1), m);
    word[s].duration = std::max(0.0, params[s * (m + 1) + m]);
    total += word[s].duration;
  }
  if (total > cap) {
    for (auto& seg : word) seg.duration *= cap / total;
  }
  return word;
}

inline Vector Pack(const std::vector<ControlSegment>& word, int m) {
  Vector params(word.size() * (m + 1));
  for (std::size_t s = 0; s < word.size(); ++s) {
    params.segment(s * (m + 1), m) = word[s].u;
    params[s * (m + 1) + m] = word[s].duration;
  }
  return params;
}

/// Hooke-Jeeves pattern search: coordinate exploration around the base
/// point, extrapolation along successful moves, step halving on failure.
inline Vector PatternSearch(const std::function<double(const Vector&)>& objective, Vector base,
                            Vector steps, double min_step, int max_evals, int* evals) {
  int used = 0;
  auto eval = [&](const Vector& q) {
    ++used;
    ++*evals;
    return objective(q);
  };
  auto explore = [&](Vector x, double fx, double* out) {
    for (Eigen::Index i = 0; i < x.size() && used < max_evals; ++i) {
      for (double dir : {1.0, -1.0}) {
        Vector trial = x;
        trial[i] += dir * steps[i];
        const double value = eval(trial);
        if (value < fx) {
          fx = value;
          x = std::move(trial);
          break;
        }
      }
    }
    *out = fx;
    return x;
  };
  double f_base = eval(base);
  while (used < max_evals && steps.maxCoeff() > min_step) {
    double f_new;
    Vector x = explore(base, f_base, &f_new);
    if (!(f_new < f_base)) {
      steps *= 0.5;
      continue;
    }
    while (used < max_evals) {
      const Vector pattern = x + (x - base);
      base = x;
      f_base = f_new;
      double f_pattern = eval(pattern);
      const Vector moved = explore(pattern, f_pattern, &f_pattern);
      if (!(f_pattern < f_base)) break;
      x = moved;
      f_new = f_pattern;
    }
  }
  return base;
}

/// Gauss-Newton on the endpoint residual with least-norm steps,
/// backtracking and `clamp` applied to every trial: moves the parameters
/// onto the endpoint constraint within the box.
inline Vector ProjectToEndpoint(const std::function<Vector(const Vector&)>& residual,
                                const std::function<Vector(Vector)>& clamp, Vector q,
                                int iterations, int* evals) {
  Vector r = residual(q);
  ++*evals;
  if (!r.allFinite()) return q;
  for (int it = 0; it < iterations && r.norm() > 1e-10; ++it) {
    Matrix jac(r.size(), q.size());
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(q[j]));
      Vector shifted = q;
      shifted[j] += h;
      jac.col(j) = (residual(shifted) - r) / h;
      ++*evals;
    }
    if (!jac.allFinite()) return q;
    const Vector delta = jac.completeOrthogonalDecomposition().solve(-r);
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-3; alpha *= 0.5) {
      const Vector trial = clamp(q + alpha * delta);
      const Vector rt = residual(trial);
      ++*evals;
      if (rt.allFinite() && rt.norm() < r.norm()) {
        q = trial;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return q;
}

/// Cost and endpoint residual of one parameter vector.
struct Evaluation {
  double cost = std::numeric_limits<double>::infinity();
  Vector residual;
  bool ok() const { return std::isfinite(cost) && residual.allFinite(); }
};

/// Descent on the cost along the constraint surface: each step combines the
/// cost gradient projected onto the null space of the residual Jacobian with
/// a Gauss-Newton correction of the residual, backtracking on the merit
/// cost + mu * |residual|.
inline Vector ReducedGradient(const std::function<Evaluation(const Vector&)>& evaluate,
                              const std::function<Vector(Vector)>& clamp, Vector q,
                              int max_evals, double mu, int* evals) {
  int used = 0;
  auto eval = [&](const Vector& x) {
    ++used;
    ++*evals;
    return evaluate(x);
  };
  Evaluation e = eval(q);
  if (!e.ok()) return q;
  auto merit = [mu](const Evaluation& v) {
    return v.ok() ? v.cost + mu * v.residual.norm() : std::numeric_limits<double>::infinity();
  };
  double alpha = 1.0;
  while (used + q.size() + 1 < max_evals) {
    Vector grad(q.size());
    Matrix jac(e.residual.size(), q.size());
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(q[j]));
      Vector shifted = q;
      shifted[j] += h;
      const Evaluation ej = eval(shifted);
      if (!ej.ok()) return q;
      grad[j] = (ej.cost - e.cost) / h;
      jac.col(j) = (ej.residual - e.residual) / h;
    }
    const auto cod = jac.completeOrthogonalDecomposition();
    const Matrix pinv = cod.pseudoInverse();
    const Vector correction = -pinv * e.residual;
    const Vector tangent = -(grad - pinv * (jac * grad));
    const double current = merit(e);
    bool accepted = false;
    for (; alpha > 1e-6 && used < max_evals; alpha *= 0.5) {
      const Vector trial = clamp(q + correction + alpha * tangent);
      const Evaluation et = eval(trial);
      if (merit(et) < current - 1e-12) {
        q = trial;
        e = et;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    alpha = std::min(4.0, 2.0 * alpha);
  }
  return q;
}

inline std::vector<ControlSegment> RandomWord(int m, int segments, double amplitude, Rng& rng) {
  std::vector<ControlSegment> word(segments);
  for (auto& seg : word) {
    seg.u = Vector::Zero(m);
    if (rng.Uniform() >= 0.25) {
      for (int i = 0; i < m; ++i) seg.u[i] = rng.Uniform(-0.5 * amplitude, 0.5 * amplitude);
    }
    seg.duration = rng.Uniform(0.05, 1.0);
  }
  return word;
}

}  // namespace detail

/// Multi-start shooting: candidate i starts from a word drawn with seed
/// DeriveSeed(seed, i) (candidate 0 from `seed_word` when given) and is
/// refined by pattern search on cost + mu * endpoint error with increasing
/// mu. The result is the cheapest candidate meeting the endpoint tolerance,
/// so a larger budget never returns a larger value.
inline CostEstimate Shoot(const ShootingProblem& p, const MetricOptions& opt, std::uint64_t seed) {
  if (!(opt.endpoint_tol > 0)) throw Error(ErrorCode::kDomain, "endpoint tolerance must be > 0");
  if (opt.budget < 1) throw Error(ErrorCode::kDomain, "metric budget must be >= 1");
  const int m = p.m;
  struct Result {
    std::vector<ControlSegment> word;
    detail::Rollout rollout;
    int evals = 0;
  };
  std::vector<Result> results(opt.budget);
  ParallelFor(opt.budget, [&](int i) {
    Rng rng(DeriveSeed(seed, i));
    std::vector<ControlSegment> start = (i == 0 && p.seed_word)
                                            ? *p.seed_word
                                            : detail::RandomWord(m, opt.segments, opt.amplitude, rng);
    Vector params = detail::Pack(start, m);
    Vector steps(params.size());
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      steps[j] = (j % (m + 1) == m) ? 0.25 : 0.5;
    }
    int evals = 0;
    auto clamp = [&](Vector q) {
      for (Eigen::Index j = 0; j < q.size(); ++j) {
        if (j % (m + 1) != m) q[j] = std::clamp(q[j], -opt.amplitude, opt.amplitude);
      }
      return q;
    };
    auto in_bounds = [&](const Vector& q) {
      for (Eigen::Index j = 0; j < q.size(); ++j) {
        if (j % (m + 1) != m && std::abs(q[j]) > opt.amplitude) return false;
      }
      return true;
    };
    // Residual: endpoint miss plus any shortfall of the minimum duration.
    auto residual = [&](const Vector& q) {
      const auto word = detail::Unpack(q, m, opt.horizon_cap);
      Vector out(p.from.size() + 1);
      const int n = static_cast<int>(p.from.size());
      Vector state(n);
      double total = 0.0;
      state = p.from;
      try {
        for (const auto& seg : word) {
          total += seg.duration;
          if (seg.duration <= 0) continue;
          state = IntegrateRK45([&](const Vector& x) -> Vector { return p.velocity(x, seg.u); },
                                state, seg.duration, opt.step,
                                [](const Vector& x) { return x.allFinite(); });
        }
      } catch (const Error&) {
        out.setConstant(std::numeric_limits<double>::infinity());
        return out;
      }
      out.head(n) = state - p.to;
      out[n] = std::max(0.0, p.min_duration - total);
      return out;
    };
    auto evaluate = [&](const Vector& q) {
      detail::Evaluation out;
      out.residual = residual(q);
      if (!out.residual.allFinite()) return out;
      out.cost = detail::RollOut(p, detail::Unpack(q, m, opt.horizon_cap), opt.step).cost;
      return out;
    };
    auto objective = [&](const Vector& q) {
      if (!in_bounds(q)) return std::numeric_limits<double>::infinity();
      const detail::Evaluation e = evaluate(q);
      return e.ok() ? e.cost + 10.0 * e.residual.norm() : std::numeric_limits<double>::infinity();
    };
    // Coarse exploration on a soft penalty, then descent along the
    // constraint, then a final projection onto the endpoint.
    params = detail::PatternSearch(objective, params, steps, 1e-3, opt.evaluations / 3, &evals);
    params = detail::ProjectToEndpoint(residual, clamp, params, 15, &evals);
    params = detail::ReducedGradient(evaluate, clamp, params, opt.evaluations, 100.0, &evals);
    params = detail::ProjectToEndpoint(residual, clamp, params, 15, &evals);
    results[i].word = detail::Unpack(params, m, opt.horizon_cap);
    results[i].rollout = detail::RollOut(p, results[i].word, opt.step);
    results[i].evals = evals;
  });

  CostEstimate best;
  best.horizon_cap = opt.horizon_cap;
  for (const auto& r : results) {
    best.budget_spent += r.evals;
    double total = 0.0;
    for (const auto& seg : r.word) total += seg.duration;
    const bool feasible =
        r.rollout.error <= opt.endpoint_tol && total >= p.min_duration - 1e-12;
    if (feasible && r.rollout.cost < best.value) {
      best.reachable = true;
      best.value = r.rollout.cost;
      best.endpoint_error = r.rollout.error;
      best.word = r.word;
    }
  }
  if (best.reachable) {
    // Drop idle segments from the reported word.
    std::erase_if(best.word, [](const ControlSegment& s) { return s.duration <= 0; });
  }
  return best;
}

namespace detail {

/// Pure-drift word: coast along the drift for the time of closest approach
/// to `to`, located on a 0.05 grid and refined by golden section.
inline std::vector<ControlSegment> CoastWord(const FlowField& drift, const Point& from,
                                             const Point& to, int m, double cap,
                                             const StepControl& step) {
  double best_t = 0.0, best_err = (from - to).norm();
  Point x = from;
  const double dt = 0.05;
  try {
    for (double t = dt; t <= cap + 1e-12; t += dt) {
      x = IntegrateFlow(drift, x, dt, step);
      const double err = (x - to).norm();
      if (err < best_err) {
        best_err = err;
        best_t = t;
      }
    }
  } catch (const Error&) {
  }
  auto err_at = [&](double t) {
    try {
      return (IntegrateFlow(drift, from, t, step) - to).norm();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double lo = std::max(0.0, best_t - dt), hi = best_t + dt;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    if (err_at(a) < err_at(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return {ControlSegment{Vector::Zero(m), 0.5 * (lo + hi)}};
}

/// Length of the velocity v in the metric of the frame A (columns):
/// |w| for the least-norm w with A w = v.
inline double FrameNorm(const Matrix& a, const Vector& v) {
  const Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 1e-300) return v.norm() > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  const Vector c = svd.matrixU().transpose() * v;
  double w2 = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 1e-12 * s[0]) w2 += (c[i] / s[i]) * (c[i] / s[i]);
  }
  return std::sqrt(w2);
}

}  // namespace detail

/// Upper bound on d(x, y): the least control effort int |u| dt found that
/// steers x to within endpoint_tol of y along the first drift.
inline CostEstimate EstimateCost(const SystemSpec& spec, const Point& x, const Point& y,
                                 const MetricOptions& opt, std::uint64_t seed) {
  ValidateSystem(spec);
  const FlowField f(spec.DriftFields().front());
  const auto g = CompileFields(spec.ControlFields());
  ShootingProblem p;
  p.m = static_cast<int>(g.size());
  p.velocity = [&](const Vector& s, const Vector& u) {
    Vector v = f(s);
    for (int i = 0; i < u.size(); ++i) {
      if (u[i] != 0.0) v += u[i] * g[i](s);
    }
    return v;
  };
  p.running_cost = [](const Vector&, const Vector& u) { return u.norm(); };
  p.from = x;
  p.to = y;
  p.seed_word = detail::CoastWord(f, x, y, p.m, opt.horizon_cap, opt.step);
  return Shoot(p, opt, seed);
}

/// Upper bound on the distance of the driftless system whose controlled
/// fields are the first drift followed by the control fields.
inline CostEstimate SrDistance(const SystemSpec& spec, const Point& x, const Point& y,
                               const MetricOptions& opt, std::uint64_t seed) {
  ValidateSystem(spec);
  if (x == y) {
    CostEstimate e;
    e.reachable = true;
    e.value = 0.0;
    e.endpoint_error = 0.0;
    e.horizon_cap = opt.horizon_cap;
    return e;
  }
  std::vector<VectorField> fields{spec.DriftFields().front()};
  for (const auto& g : spec.ControlFields()) fields.push_back(g);
  const auto frame = CompileFields(fields);
  ShootingProblem p;
  p.m = static_cast<int>(frame.size());
  p.velocity = [&](const Vector& s, const Vector& u) {
    Vector v = Vector::Zero(s.size());
    for (int i = 0; i < u.size(); ++i) {
      if (u[i] != 0.0) v += u[i] * frame[i](s);
    }
    return v;
  };
  p.running_cost = [](const Vector&, const Vector& u) { return u.norm(); };
  p.from = x;
  p.to = y;
  return Shoot(p, opt, seed);
}

/// Upper bound on the loop function at x: the length, in the metric of the
/// extended frame (f, g_1, ..., g_m), of the shortest drifted loop found from
/// x back to x lasting at least `min_duration`.
inline CostEstimate LoopLength(const SystemSpec& spec, const Point& x, const MetricOptions& opt,
                               std::uint64_t seed, double min_duration = 0.5) {
  ValidateSystem(spec);
  const FlowField f(spec.DriftFields().front());
  const auto g = CompileFields(spec.ControlFields());
  ShootingProblem p;
  p.m = static_cast<int>(g.size());
  p.velocity = [&](const Vector& s, const Vector& u) {
    Vector v = f(s);
    for (int i = 0; i < u.size(); ++i) {
      if (u[i] != 0.0) v += u[i] * g[i](s);
    }
    return v;
  };
  p.running_cost = [&](const Vector& s, const Vector& u) {
    Matrix a(s.size(), g.size() + 1);
    a.col(0) = f(s);
    for (std::size_t i = 0; i < g.size(); ++i) a.col(i + 1) = g[i](s);
    return detail::FrameNorm(a, p.velocity(s, u));
  };
  p.from = x;
  p.to = x;
  p.min_duration = min_duration;
  p.seed_word = std::vector<ControlSegment>{{Vector::Zero(p.m), min_duration}};
  return Shoot(p, opt, seed);
}

inline MetricOptions MetricOptionsFor(const SystemSpec& spec) {
  MetricOptions o;
  o.budget = spec.budgets.metric_budget;
  o.endpoint_tol = spec.budgets.endpoint_tol;
  return o;
}

}  // namespace geoctrl

#pragma once

// Controllability conditions on sampled leaves: the determinant sign-change
// test for codimension one with a global frame, the interior-of-convex-hull
// test in the quotient by G, and the supporting-distribution verifier.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "geoctrl/error.hpp"
#include "geoctrl/leaf.hpp"
#include "geoctrl/lie.hpp"
#include "geoctrl/parallel.hpp"
#include "geoctrl/system.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

// ---------------------------------------------------------------------------
// Criterion function

/// det(f(x), g~_1(x), ..., g~_{n-1}(x)).
inline double CriterionValue(const VectorField& f, const std::vector<VectorField>& frame,
                             const Point& x) {
  const int n = f.dim();
  if (static_cast<int>(frame.size()) != n - 1) {
    throw Error(ErrorCode::kDimension, "criterion function needs exactly n-1 frame fields, got " +
                                           std::to_string(frame.size()));
  }
  Matrix m(n, n);
  m.col(0) = Evaluate(f, x);
  for (int j = 0; j < n - 1; ++j) m.col(j + 1) = Evaluate(frame[j], x);
  return m.determinant();
}

using CriterionFn = std::function<double(const Point&)>;

inline CriterionFn MakeCriterion(const VectorField& f, const std::vector<VectorField>& frame) {
  if (static_cast<int>(frame.size()) != f.dim() - 1) {
    throw Error(ErrorCode::kDimension, "criterion function needs exactly n-1 frame fields");
  }
  auto compiled_f = std::make_shared<CompiledField>(f);
  auto compiled_frame = std::make_shared<std::vector<CompiledField>>();
  for (const auto& g : frame) compiled_frame->emplace_back(g);
  return [compiled_f, compiled_frame](const Point& x) {
    const auto n = x.size();
    Matrix m(n, n);
    m.col(0) = (*compiled_f)(x);
    for (std::size_t j = 0; j < compiled_frame->size(); ++j) m.col(j + 1) = (*compiled_frame)[j](x);
    return m.determinant();
  };
}

// ---------------------------------------------------------------------------
// Verdict types

struct SignChangePair {
  Point positive;
  Point negative;
  double positive_value = 0.0;
  double negative_value = 0.0;
};

struct PointVerdict {
  enum class Witness { kNone, kSignChange, kInterior, kSeparating };

  Point base;
  bool condition_holds = false;
  Witness witness = Witness::kNone;
  std::optional<SignChangePair> sign_change;
  Vector covector;        // separating covector in quotient coordinates
  Matrix quotient_basis;  // n x k orthonormal basis of the complement of G
  int codimension = 0;
  int samples_used = 0;   // words drawn
  int vectors_collected = 0;
  bool approximate = false;  // k >= 3 direction-design test
  int escaped = 0;
  int transport_failures = 0;
  std::optional<bool> determinant_holds;  // codim-1 frame path, when available
};

// ---------------------------------------------------------------------------
// Sign change of the criterion function

/// Holds iff two visits carry criterion values above eps_sign and below
/// -eps_sign; values within [-eps_sign, eps_sign] certify nothing.
inline PointVerdict SignChangeOnLeaf(const LeafSample& leaf, const CriterionFn& criterion,
                                     double eps_sign = 1e-9) {
  if (leaf.visits.empty()) throw Error(ErrorCode::kEmptyInput, "leaf sample has no visits");
  PointVerdict verdict;
  verdict.base = leaf.base;
  verdict.codimension = 1;
  verdict.samples_used = leaf.attempts;
  std::optional<std::size_t> pos, neg;
  std::vector<double> values(leaf.visits.size());
  for (std::size_t i = 0; i < leaf.visits.size(); ++i) {
    values[i] = criterion(leaf.visits[i].point);
    if (values[i] > eps_sign && !pos) pos = i;
    if (values[i] < -eps_sign && !neg) neg = i;
  }
  verdict.vectors_collected = static_cast<int>(values.size());
  if (pos && neg) {
    verdict.condition_holds = true;
    verdict.witness = PointVerdict::Witness::kSignChange;
    verdict.sign_change = SignChangePair{leaf.visits[*pos].point, leaf.visits[*neg].point,
                                         values[*pos], values[*neg]};
  }
  verdict.determinant_holds = verdict.condition_holds;
  return verdict;
}

// ---------------------------------------------------------------------------
// Quotient by G|_x

/// Orthonormal basis (columns) of the orthogonal complement of the span of
/// `basis_at_x`. Columns are built by Gram-Schmidt on the projected
/// coordinate axes, largest residual first, so a coordinate-aligned G gives
/// coordinate-aligned quotient axes with positive orientation.
inline Matrix QuotientProjection(const Matrix& basis_at_x, double tol = kDefaultRankTol,
                                 std::optional<int> expected_rank = std::nullopt) {
  const int n = static_cast<int>(basis_at_x.rows());
  int r = 0;
  Matrix u;
  if (basis_at_x.cols() > 0) {
    const Eigen::JacobiSVD<Matrix> svd(basis_at_x, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    if (s.size() > 0 && s[0] > 1e-300) {
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > tol * s[0]) ++r;
      }
    }
    u = svd.matrixU().leftCols(r);
  } else {
    u = Matrix(n, 0);
  }
  if (expected_rank && *expected_rank != r) {
    throw Error(ErrorCode::kRankMismatch,
                "rank of G at point is " + std::to_string(r) + ", regularity report says " +
                    std::to_string(*expected_rank));
  }
  const int k = n - r;
  Matrix q(n, k);
  std::vector<bool> used(n, false);
  for (int c = 0; c < k; ++c) {
    int best = -1;
    double best_norm = -1.0;
    Vector best_vec;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      Vector v = Vector::Unit(n, i);
      if (r > 0) v -= u * (u.transpose() * v);
      if (c > 0) v -= q.leftCols(c) * (q.leftCols(c).transpose() * v);
      // Second pass against cancellation.
      if (r > 0) v -= u * (u.transpose() * v);
      if (c > 0) v -= q.leftCols(c) * (q.leftCols(c).transpose() * v);
      const double norm = v.norm();
      if (norm > best_norm + 1e-12) {
        best = i;
        best_norm = norm;
        best_vec = v;
      }
    }
    used[best] = true;
    q.col(c) = best_vec / best_norm;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Interior of the convex hull

struct InteriorResult {
  bool inside = false;
  std::optional<Vector> witness;  // d with <d, p> >= -margin for every p
  bool approximate = false;
};

namespace detail {

/// Deterministic direction design on the unit sphere of R^k: coordinate
/// axes, pairwise diagonals and a fixed pseudo-random fill, at least 2k^2
/// directions in total.
inline const std::vector<Vector>& SphereDesign(int k) {
  static std::mutex mutex;
  static std::map<int, std::vector<Vector>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(k);
  if (it != cache.end()) return it->second;
  std::vector<Vector> dirs;
  for (int i = 0; i < k; ++i) {
    for (double s : {1.0, -1.0}) dirs.push_back(s * Vector::Unit(k, i));
  }
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      for (double si : {1.0, -1.0}) {
        for (double sj : {1.0, -1.0}) {
          Vector d = Vector::Zero(k);
          d[i] = si;
          d[j] = sj;
          dirs.push_back(d.normalized());
        }
      }
    }
  }
  const std::size_t target = std::max<std::size_t>(2 * k * k, 64 * k);
  Rng rng(0x5eed0000ull + k);
  while (dirs.size() < target) {
    Vector d(k);
    for (int i = 0; i < k; ++i) {
      // Box-Muller
      const double u1 = 1.0 - rng.Uniform();
      const double u2 = rng.Uniform();
      d[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    if (d.norm() > 1e-9) dirs.push_back(d.normalized());
  }
  return cache.emplace(k, std::move(dirs)).first->second;
}

}  // namespace detail

/// Is 0 interior to the convex hull of `points` in R^k? Exact for k = 1, 2;
/// for k >= 3 a direction-design test that can report false positives.
inline InteriorResult InteriorConvexTest(const std::vector<Vector>& points, double margin) {
  if (points.empty()) throw Error(ErrorCode::kEmptyInput, "convex test needs at least one point");
  const int k = static_cast<int>(points.front().size());
  if (k < 1) throw Error(ErrorCode::kDimension, "convex test needs k >= 1");
  InteriorResult result;
  if (k == 1) {
    double lo = points[0][0], hi = points[0][0];
    for (const auto& p : points) {
      lo = std::min(lo, p[0]);
      hi = std::max(hi, p[0]);
    }
    result.inside = hi > margin && lo < -margin;
    if (!result.inside) {
      Vector d(1);
      d[0] = hi <= margin ? -1.0 : 1.0;
      result.witness = d;
    }
    return result;
  }
  if (k == 2) {
    std::vector<double> angles;
    angles.reserve(points.size());
    for (const auto& p : points) {
      if (p.norm() > margin) angles.push_back(std::atan2(p[1], p[0]));
    }
    Vector d(2);
    if (angles.empty()) {
      d << 1.0, 0.0;
      result.witness = d;
      return result;
    }
    std::sort(angles.begin(), angles.end());
    double max_gap = angles.front() + 2.0 * std::numbers::pi - angles.back();
    double gap_start = angles.back();
    for (std::size_t i = 1; i < angles.size(); ++i) {
      const double gap = angles[i] - angles[i - 1];
      if (gap > max_gap) {
        max_gap = gap;
        gap_start = angles[i - 1];
      }
    }
    result.inside = max_gap < std::numbers::pi;
    if (!result.inside) {
      const double mid = gap_start + 0.5 * max_gap;
      d << -std::cos(mid), -std::sin(mid);
      result.witness = d;
    }
    return result;
  }
  result.approximate = true;
  for (const auto& dir : detail::SphereDesign(k)) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) best = std::max(best, dir.dot(p));
    if (!(best > margin)) {
      result.witness = -dir;
      return result;
    }
  }
  result.inside = true;
  return result;
}

// ---------------------------------------------------------------------------
// Pointwise check

struct CriterionOptions {
  int leaf_budget = 200;
  double max_duration = 1.0;
  double margin = 1e-7;
  double eps_sign = 1e-9;
  double rank_tol = kDefaultRankTol;
  bool early_stop = true;
  StepControl step{};
};

/// Everything the pointwise checks share for one system: the generated
/// Lie algebra basis, its regularity audit and compiled fields.
struct AnalysisContext {
  int dim = 0;
  BracketFamily family;
  RegularityReport audit;
  std::vector<FlowField> generators;
  std::vector<FlowField> drifts;
  std::optional<CriterionFn> criterion;  // codim-1 frame, when supplied
  Box window;
  Box leaf_window;
  CriterionOptions options;
  std::vector<Expr> invariants;
};

inline std::vector<Point> ProbePoints(const Box& window, std::uint64_t seed, int count = 16) {
  Rng rng(DeriveSeed(seed, 0xB40Eull));
  std::vector<Point> probes;
  for (int i = 0; i < count; ++i) {
    Point p(window.dim());
    for (int j = 0; j < window.dim(); ++j) p[j] = rng.Uniform(window.lo[j], window.hi[j]);
    probes.push_back(std::move(p));
  }
  return probes;
}

inline CriterionOptions OptionsFor(const SystemSpec& spec) {
  CriterionOptions o;
  o.leaf_budget = spec.budgets.leaf_budget;
  o.max_duration = spec.MaxDuration();
  o.margin = spec.budgets.margin;
  o.eps_sign = spec.budgets.eps_sign;
  o.rank_tol = spec.budgets.rank_tol;
  return o;
}

/// Generates the Lie algebra basis, audits regularity on the spec grid and
/// compiles the fields. `drifts` overrides the spec drifts (switched checks).
inline AnalysisContext PrepareAnalysis(const SystemSpec& spec,
                                       std::optional<std::vector<VectorField>> drifts = {}) {
  ValidateSystem(spec);
  AnalysisContext ctx;
  ctx.dim = spec.dim;
  ctx.window = spec.window;
  ctx.leaf_window = spec.window.Inflated(kWindowInflation);
  ctx.options = OptionsFor(spec);
  ctx.family = GenerateBracketBasis(spec.ControlFields(), spec.budgets.depth_cap,
                                    ProbePoints(spec.window, spec.seed), spec.budgets.rank_tol);
  ctx.audit = AuditRegularity(ctx.family, spec.window, std::max(2, spec.budgets.grid),
                              spec.budgets.rank_tol);
  ctx.generators = CompileFields(spec.ControlFields());
  ctx.drifts = CompileFields(drifts ? *drifts : spec.DriftFields());
  if (!spec.frame.empty() && ctx.drifts.size() == 1) {
    ctx.criterion = MakeCriterion(drifts ? drifts->front() : spec.drifts.front().field,
                                  spec.FrameFields());
  }
  ctx.invariants = spec.invariants;
  return ctx;
}

/// Tests 0 in Int Con{G_* F(x), G|_x} at `x` by sampling the leaf through
/// `x`, shifting every drift back to `x` and running the convex test in the
/// quotient. With early stopping, sampling ends as soon as the condition
/// holds. When the context carries a codimension-1 frame, the determinant
/// sign-change verdict on the same visits is recorded alongside.
inline PointVerdict CheckCondition(const AnalysisContext& ctx, const Point& x,
                                   std::uint64_t seed) {
  const CriterionOptions& opt = ctx.options;
  PointVerdict verdict;
  verdict.base = x;
  const int expected_rank = ctx.audit.constant_rank ? ctx.audit.rank() : -1;
  verdict.quotient_basis =
      QuotientProjection(ctx.family.EvaluateAt(x), opt.rank_tol,
                         expected_rank >= 0 ? std::optional<int>(expected_rank) : std::nullopt);
  const int k = static_cast<int>(verdict.quotient_basis.cols());
  verdict.codimension = k;
  if (k == 0) {
    verdict.condition_holds = true;
    verdict.witness = PointVerdict::Witness::kInterior;
    return verdict;
  }
  const Matrix qt = verdict.quotient_basis.transpose();
  std::vector<Vector> projected;
  bool have_pos = false, have_neg = false;
  SignChangePair pair;
  auto record_criterion = [&](const Point& y) {
    if (!ctx.criterion) return;
    const double c = (*ctx.criterion)(y);
    if (c > opt.eps_sign && !have_pos) {
      have_pos = true;
      pair.positive = y;
      pair.positive_value = c;
    }
    if (c < -opt.eps_sign && !have_neg) {
      have_neg = true;
      pair.negative = y;
      pair.negative_value = c;
    }
  };

  for (const auto& f : ctx.drifts) projected.push_back(qt * f(x));
  record_criterion(x);
  InteriorResult test = InteriorConvexTest(projected, opt.margin);

  LeafWalkOptions walk;
  walk.max_duration = opt.max_duration;
  walk.step = opt.step;
  walk.window = ctx.leaf_window;
  LeafWalker walker(ctx.generators, x, walk, seed);
  for (int attempt = 0; attempt < opt.leaf_budget; ++attempt) {
    if (opt.early_stop && test.inside) break;
    bool escaped = false;
    const std::vector<Visit> visits = walker.Next(&escaped);
    ++verdict.samples_used;
    if (escaped) ++verdict.escaped;
    std::vector<Point> path{x};
    for (const auto& v : visits) path.push_back(v.point);
    for (std::size_t j = 0; j < visits.size(); ++j) {
      try {
        std::vector<Vector> shifted;
        for (const auto& f : ctx.drifts) {
          shifted.push_back(qt * TransportAlongPath(ctx.generators,
                                                    std::span<const Point>(path.data(), j + 2),
                                                    visits[j].word, f(visits[j].point), opt.step,
                                                    ctx.leaf_window));
        }
        for (auto& s : shifted) projected.push_back(std::move(s));
        record_criterion(visits[j].point);
      } catch (const Error&) {
        ++verdict.transport_failures;
      }
    }
    test = InteriorConvexTest(projected, opt.margin);
  }
  verdict.vectors_collected = static_cast<int>(projected.size());
  verdict.condition_holds = test.inside;
  verdict.approximate = test.approximate;
  if (test.inside) {
    verdict.witness = PointVerdict::Witness::kInterior;
  } else {
    verdict.witness = PointVerdict::Witness::kSeparating;
    verdict.covector = *test.witness;
  }
  if (ctx.criterion) {
    verdict.determinant_holds = have_pos && have_neg;
    if (have_pos && have_neg) verdict.sign_change = pair;
  }
  return verdict;
}

/// Drift family variant: identical pipeline with shifted vectors collected
/// from every drift in `drift_family`.
inline PointVerdict SwitchedCondition(const SystemSpec& spec,
                                      const std::vector<VectorField>& drift_family,
                                      const Point& x, std::uint64_t seed) {
  if (drift_family.empty()) throw Error(ErrorCode::kEmptyInput, "drift family is empty");
  const AnalysisContext ctx = PrepareAnalysis(spec, drift_family);
  Codimension(ctx.audit);
  return CheckCondition(ctx, x, seed);
}

// ---------------------------------------------------------------------------
// Global verdict

enum class VerdictStatus {
  kControllableCertified,
  kUncontrollableEvidence,
  kInconclusive,
  kNotRegular,
};

inline const char* StatusName(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::kControllableCertified: return "CONTROLLABLE_CERTIFIED";
    case VerdictStatus::kUncontrollableEvidence: return "UNCONTROLLABLE_EVIDENCE";
    case VerdictStatus::kInconclusive: return "INCONCLUSIVE";
    case VerdictStatus::kNotRegular: return "NOT_REGULAR";
  }
  return "UNKNOWN";
}

struct GlobalVerdict {
  VerdictStatus status = VerdictStatus::kInconclusive;
  std::vector<PointVerdict> points;
  bool regular = false;
  int codimension = -1;
  std::optional<bool> assume_not_dense;
  std::string note;
};

/// Index of the first grid point on the same leaf as each point, when
/// invariant functions identify leaves (values compared after rounding to
/// 1e-6). Points where an invariant is undefined represent themselves.
inline std::vector<int> LeafRepresentatives(const AnalysisContext& ctx,
                                            const std::vector<Point>& grid) {
  std::vector<int> rep(grid.size());
  std::map<std::vector<long long>, int> first;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    rep[i] = static_cast<int>(i);
    if (ctx.invariants.empty()) continue;
    const Point& p = grid[i];
    std::vector<long long> key;
    try {
      for (const auto& inv : ctx.invariants) {
        key.push_back(std::llround(
            Evaluate(inv, std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))) *
            1e6));
      }
    } catch (const Error&) {
      continue;
    }
    rep[i] = first.try_emplace(std::move(key), static_cast<int>(i)).first->second;
  }
  return rep;
}

/// Grid base points, keeping one representative per leaf.
inline std::vector<Point> BasePoints(const AnalysisContext& ctx, int base_grid) {
  std::vector<Point> grid = ctx.window.Grid(base_grid);
  const std::vector<int> rep = LeafRepresentatives(ctx, grid);
  std::vector<Point> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rep[i] == static_cast<int>(i)) out.push_back(std::move(grid[i]));
  }
  return out;
}

/// Runs CheckCondition over the base grid and aggregates: certified iff the
/// condition holds at every base point; evidence of non-controllability iff
/// some point exhausted its budget. Without the not-dense assertion the
/// necessity direction is not claimed and failures are inconclusive.
inline GlobalVerdict ComputeGlobalVerdict(const AnalysisContext& ctx, int base_grid,
                                          std::uint64_t seed,
                                          std::optional<bool> assume_not_dense = true) {
  GlobalVerdict verdict;
  verdict.assume_not_dense = assume_not_dense;
  verdict.regular = ctx.audit.constant_rank;
  if (!ctx.audit.constant_rank) {
    verdict.status = VerdictStatus::kNotRegular;
    verdict.note = ctx.audit.Summary();
    return verdict;
  }
  verdict.codimension = Codimension(ctx.audit);
  const std::vector<Point> bases = BasePoints(ctx, base_grid);
  verdict.points.resize(bases.size());
  ParallelFor(static_cast<int>(bases.size()), [&](int i) {
    verdict.points[i] = CheckCondition(ctx, bases[i], DeriveSeed(seed, i));
  });
  const bool all_hold = std::all_of(verdict.points.begin(), verdict.points.end(),
                                    [](const PointVerdict& p) { return p.condition_holds; });
  if (all_hold) {
    verdict.status = VerdictStatus::kControllableCertified;
  } else if (assume_not_dense.value_or(false)) {
    verdict.status = VerdictStatus::kUncontrollableEvidence;
  } else {
    verdict.status = VerdictStatus::kInconclusive;
    verdict.note = "condition fails at some base point but the not-dense assumption was not "
                   "asserted; necessity is not claimed";
  }
  return verdict;
}

inline GlobalVerdict ComputeGlobalVerdict(const SystemSpec& spec) {
  const AnalysisContext ctx = PrepareAnalysis(spec);
  return ComputeGlobalVerdict(ctx, spec.budgets.grid, spec.seed, spec.assume_not_dense);
}

// ---------------------------------------------------------------------------
// Supporting-distribution verifier

struct SupportPointReport {
  Point base;
  bool complement = false;     // (a) pi(S) has rank k-1
  bool invariant = false;      // (b) [g_i, S_j] in span(G, S)
  bool half_space = false;     // (c) projected shifted drifts on one side of pi(S)
  bool drift_outside = false;  // (d) f(x) not in Lie(S)|_x
  int side = 0;                // +1/-1: side of the normal holding the drifts
};

struct SupportReport {
  std::vector<SupportPointReport> points;
  bool complement = true;
  bool invariant = true;
  bool half_space = true;
  bool drift_outside = true;
  bool concludes_not_controllable = false;
  std::string conclusion;
};

/// Checks a user-supplied (k-1)-dimensional candidate S at grid points:
/// (a) S lies in a complement of G, (b) S is G-invariant modulo G + S,
/// (c) the shifted drifts lie in one closed half-space bounded by pi(S),
/// (d) the drift is not in the span of Lie(S). All four at every point
/// establish non-controllability.
inline SupportReport VerifySupportingDistribution(const AnalysisContext& ctx,
                                                  const std::vector<VectorField>& candidate,
                                                  int grid_per_axis, double tol,
                                                  std::uint64_t seed) {
  const int k = Codimension(ctx.audit);
  if (k < 2) throw Error(ErrorCode::kDimension, "supporting distribution needs codimension >= 2");
  if (static_cast<int>(candidate.size()) != k - 1) {
    throw Error(ErrorCode::kDimension, "supporting distribution must have k-1 = " +
                                           std::to_string(k - 1) + " fields, got " +
                                           std::to_string(candidate.size()));
  }
  std::vector<VectorField> brackets;
  for (const auto& g : ctx.generators) {
    for (const auto& s : candidate) brackets.push_back(LieBracket(g.field(), s));
  }
  const BracketFamily lie_s =
      GenerateBracketBasis(candidate, kDefaultDepthCap, ProbePoints(ctx.window, seed), tol);

  SupportReport report;
  const std::vector<Point> grid = ctx.window.Grid(grid_per_axis);
  report.points.resize(grid.size());
  // Clause (c) is a property of the leaf; with leaf-identifying invariants
  // the walk runs once per leaf and the other clauses at every point.
  const std::vector<int> rep = LeafRepresentatives(ctx, grid);
  ParallelFor(static_cast<int>(grid.size()), [&](int i) {
    const Point& x = grid[i];
    SupportPointReport& pr = report.points[i];
    pr.base = x;
    const Matrix gx = ctx.family.EvaluateAt(x);
    const Matrix q = QuotientProjection(gx, tol);
    Matrix sx(ctx.dim, candidate.size());
    for (std::size_t j = 0; j < candidate.size(); ++j) sx.col(j) = Evaluate(candidate[j], x);
    const Matrix ps = q.transpose() * sx;
    pr.complement = NumericalRank(ps, tol) == k - 1 && ps.norm() > tol;

    Matrix gs(ctx.dim, gx.cols() + sx.cols());
    gs << gx, sx;
    const int base_rank = NumericalRank(gs, tol);
    pr.invariant = true;
    for (const auto& b : brackets) {
      Matrix ext(ctx.dim, gs.cols() + 1);
      ext << gs, Evaluate(b, x);
      if (NumericalRank(ext, tol) > base_rank) pr.invariant = false;
    }

    // Normal to pi(S) inside the quotient.
    if (pr.complement && rep[i] == i) {
      const Matrix normal_basis = QuotientProjection(ps, tol);
      const Vector nu = normal_basis.col(0);
      const Matrix qt = q.transpose();
      std::vector<double> heights;
      const CriterionOptions& opt = ctx.options;
      LeafWalkOptions walk;
      walk.max_duration = opt.max_duration;
      walk.step = opt.step;
      walk.window = ctx.leaf_window;
      for (const auto& f : ctx.drifts) heights.push_back(nu.dot(qt * f(x)));
      LeafWalker walker(ctx.generators, x, walk, DeriveSeed(seed, i));
      for (int attempt = 0; attempt < opt.leaf_budget; ++attempt) {
        const std::vector<Visit> visits = walker.Next();
        std::vector<Point> path{x};
        for (const auto& v : visits) path.push_back(v.point);
        for (std::size_t j = 0; j < visits.size(); ++j) {
          try {
            for (const auto& f : ctx.drifts) {
              heights.push_back(nu.dot(
                  qt * TransportAlongPath(ctx.generators, std::span<const Point>(path.data(), j + 2),
                                          visits[j].word, f(visits[j].point), opt.step,
                                          ctx.leaf_window)));
            }
          } catch (const Error&) {
          }
        }
      }
      const double lo = *std::min_element(heights.begin(), heights.end());
      const double hi = *std::max_element(heights.begin(), heights.end());
      if (lo >= -opt.margin) {
        pr.half_space = true;
        pr.side = 1;
      } else if (hi <= opt.margin) {
        pr.half_space = true;
        pr.side = -1;
      }
    }

    const Matrix ls = lie_s.EvaluateAt(x);
    const int ls_rank = NumericalRank(ls, tol);
    pr.drift_outside = true;
    for (const auto& f : ctx.drifts) {
      Matrix ext(ctx.dim, ls.cols() + 1);
      ext << ls, f(x);
      if (NumericalRank(ext, tol) == ls_rank) pr.drift_outside = false;
    }
  });

  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rep[i] == static_cast<int>(i)) continue;
    report.points[i].half_space = report.points[i].complement && report.points[rep[i]].half_space;
    report.points[i].side = report.points[i].half_space ? report.points[rep[i]].side : 0;
  }
  for (const auto& pr : report.points) {
    report.complement = report.complement && pr.complement;
    report.invariant = report.invariant && pr.invariant;
    report.half_space = report.half_space && pr.half_space;
    report.drift_outside = report.drift_outside && pr.drift_outside;
  }
  report.concludes_not_controllable =
      report.complement && report.invariant && report.half_space && report.drift_outside;
  if (report.concludes_not_controllable) {
    report.conclusion =
        "not globally controllable: candidate verified as a supporting distribution with the "
        "drift outside Lie(S)";
  } else {
    std::string failed;
    if (!report.complement) failed += " (a)";
    if (!report.invariant) failed += " (b)";
    if (!report.half_space) failed += " (c)";
    if (!report.drift_outside) failed += " (d)";
    report.conclusion = "candidate rejected: clause" + failed + " failed";
  }
  return report;
}

}  // namespace geoctrl

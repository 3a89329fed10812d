#pragma once

// Control Lie algebra generation, pointwise rank and the regularity audit.

#include <map>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "geoctrl/error.hpp"
#include "geoctrl/parallel.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

inline constexpr double kDefaultRankTol = 1e-8;
inline constexpr int kDefaultDepthCap = 4;

/// Number of singular values above `tol` times the largest one.
inline int NumericalRank(const Matrix& m, double tol = kDefaultRankTol) {
  if (m.size() == 0) return 0;
  const Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 1e-300)) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol * s[0]) ++rank;
  }
  return rank;
}

struct BracketEntry {
  VectorField field;
  int depth = 1;
  std::string word;  // e.g. "[g1,[g1,g2]]"
};

struct BracketFamily {
  std::vector<VectorField> generators;
  std::vector<BracketEntry> generated;

  int dim() const { return generators.empty() ? 0 : generators.front().dim(); }
  int size() const { return static_cast<int>(generated.size()); }

  /// Columns are the family fields evaluated at `p`.
  Matrix EvaluateAt(const Point& p) const {
    Matrix m(dim(), size());
    for (int j = 0; j < size(); ++j) m.col(j) = Evaluate(generated[j].field, p);
    return m;
  }
};

namespace detail {

inline bool IsZeroField(const VectorField& v) {
  for (const auto& c : v.components) {
    if (!c.is_constant(0.0)) return false;
  }
  return true;
}

}  // namespace detail

/// Builds a spanning family for Lie{generators}: level by level, brackets
/// every entry added at the previous level with every retained entry and
/// keeps a candidate iff it raises the numerical rank at some probe point.
inline BracketFamily GenerateBracketBasis(const std::vector<VectorField>& generators,
                                          int depth_cap,
                                          const std::vector<Point>& probe_points,
                                          double tol = kDefaultRankTol) {
  if (generators.empty()) {
    throw Error(ErrorCode::kEmptyInput, "bracket generation needs at least one generator");
  }
  if (depth_cap < 1) throw Error(ErrorCode::kDimension, "depth cap must be at least 1");
  const int n = generators.front().dim();
  for (const auto& g : generators) {
    if (g.dim() != n) throw Error(ErrorCode::kDimension, "generators differ in dimension");
  }

  BracketFamily family;
  family.generators = generators;
  // Evaluated family per probe point; a probe where some field is undefined
  // stops contributing.
  std::vector<Matrix> evaluated(probe_points.size(), Matrix(n, 0));
  std::vector<int> ranks(probe_points.size(), 0);
  std::vector<bool> usable(probe_points.size(), true);

  auto append_column = [](Matrix& m, const Vector& v) {
    m.conservativeResize(Eigen::NoChange, m.cols() + 1);
    m.col(m.cols() - 1) = v;
  };

  for (std::size_t i = 0; i < generators.size(); ++i) {
    family.generated.push_back({generators[i], 1, "g" + std::to_string(i + 1)});
    for (std::size_t k = 0; k < probe_points.size(); ++k) {
      if (!usable[k]) continue;
      try {
        append_column(evaluated[k], Evaluate(generators[i], probe_points[k]));
      } catch (const Error&) {
        usable[k] = false;
      }
    }
  }
  for (std::size_t k = 0; k < probe_points.size(); ++k) {
    if (usable[k]) ranks[k] = NumericalRank(evaluated[k], tol);
  }

  std::size_t level_begin = 0;
  for (int depth = 2; depth <= depth_cap; ++depth) {
    const std::size_t level_end = family.generated.size();
    bool added = false;
    for (std::size_t a = level_begin; a < level_end; ++a) {
      for (std::size_t b = 0; b < level_end; ++b) {
        // Pairs inside the previous level appear twice; keep one ordering.
        if (b >= level_begin && b >= a) continue;
        VectorField candidate =
            LieBracket(family.generated[b].field, family.generated[a].field);
        if (detail::IsZeroField(candidate)) continue;
        bool raises = false;
        std::vector<Vector> columns(probe_points.size());
        for (std::size_t k = 0; k < probe_points.size(); ++k) {
          if (!usable[k]) continue;
          try {
            columns[k] = Evaluate(candidate, probe_points[k]);
          } catch (const Error&) {
            continue;
          }
          Matrix trial = evaluated[k];
          append_column(trial, columns[k]);
          if (NumericalRank(trial, tol) > ranks[k]) raises = true;
        }
        if (!raises) continue;
        for (std::size_t k = 0; k < probe_points.size(); ++k) {
          if (!usable[k] || columns[k].size() == 0) continue;
          append_column(evaluated[k], columns[k]);
          ranks[k] = NumericalRank(evaluated[k], tol);
        }
        std::string word =
            "[" + family.generated[b].word + "," + family.generated[a].word + "]";
        family.generated.push_back({std::move(candidate), depth, std::move(word)});
        added = true;
      }
    }
    if (!added) break;
    level_begin = level_end;
  }
  return family;
}

inline int RankAt(const BracketFamily& family, const Point& p,
                  double tol = kDefaultRankTol) {
  return NumericalRank(family.EvaluateAt(p), tol);
}

struct RegularityReport {
  int dim = 0;
  std::vector<Point> grid;
  std::vector<int> ranks;
  int modal_rank = 0;
  bool constant_rank = false;
  std::vector<Point> singular;

  /// Rank of G when constant (the modal rank otherwise).
  int rank() const { return modal_rank; }

  /// A grid can falsify regularity but never certify it.
  std::string Summary() const {
    return constant_rank ? "no regularity violation found on grid"
                         : "not regular: rank varies over the grid";
  }
};

/// Evaluates the rank of the family on a full grid over `window`. Points
/// whose rank differs from the modal rank are listed as singular; points
/// where the family is undefined are singular too.
inline RegularityReport AuditRegularity(const BracketFamily& family, const Box& window,
                                        int grid_per_axis, double tol = kDefaultRankTol) {
  if (grid_per_axis < 2) throw Error(ErrorCode::kDimension, "audit grid needs >= 2 points per axis");
  RegularityReport report;
  report.dim = family.dim();
  report.grid = window.Grid(grid_per_axis);
  report.ranks.assign(report.grid.size(), -1);
  ParallelFor(static_cast<int>(report.grid.size()), [&](int i) {
    try {
      report.ranks[i] = RankAt(family, report.grid[i], tol);
    } catch (const Error&) {
      report.ranks[i] = -1;
    }
  });
  std::map<int, int> histogram;
  for (int r : report.ranks) {
    if (r >= 0) ++histogram[r];
  }
  int best = -1;
  for (const auto& [r, count] : histogram) {
    if (best < 0 || count > histogram[best]) best = r;
  }
  report.modal_rank = std::max(best, 0);
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    if (report.ranks[i] != report.modal_rank) report.singular.push_back(report.grid[i]);
  }
  report.constant_rank = report.singular.empty();
  return report;
}

/// n - dim G; requires a constant-rank report.
inline int Codimension(const RegularityReport& report) {
  if (!report.constant_rank) {
    throw Error(ErrorCode::kNotRegular,
                "control Lie algebra is not regular on the audit grid (" +
                    std::to_string(report.singular.size()) + " singular points)");
  }
  return report.dim - report.modal_rank;
}

}  // namespace geoctrl

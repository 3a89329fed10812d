#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoctrl/error.hpp"
#include "geoctrl/expr.hpp"

namespace geoctrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = Eigen::VectorXd;

/// Axis-aligned analysis window.
struct Box {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool Contains(const Vector& p) const {
    for (int i = 0; i < dim(); ++i) {
      if (!(p[i] >= lo[i] && p[i] <= hi[i])) return false;
    }
    return true;
  }

  Vector Center() const { return 0.5 * (lo + hi); }

  /// Window grown by `fraction` of its width on every side.
  Box Inflated(double fraction) const {
    const Vector pad = fraction * (hi - lo);
    return Box{lo - pad, hi + pad};
  }

  /// `per_axis` evenly spaced points per axis including both ends, in
  /// lexicographic order with the first axis varying slowest.
  std::vector<Point> Grid(int per_axis) const {
    std::vector<Point> out;
    const int n = dim();
    std::vector<int> idx(n, 0);
    while (true) {
      Point p(n);
      for (int i = 0; i < n; ++i) {
        p[i] = per_axis == 1 ? 0.5 * (lo[i] + hi[i])
                             : lo[i] + (hi[i] - lo[i]) * idx[i] / (per_axis - 1);
      }
      out.push_back(std::move(p));
      int axis = n - 1;
      while (axis >= 0 && ++idx[axis] == per_axis) {
        idx[axis] = 0;
        --axis;
      }
      if (axis < 0) break;
    }
    return out;
  }
};

/// n symbolic components; field i is the i-th coordinate of the velocity.
struct VectorField {
  std::vector<Expr> components;

  VectorField() = default;
  explicit VectorField(std::vector<Expr> c) : components(std::move(c)) {}

  int dim() const { return static_cast<int>(components.size()); }
  const Expr& operator[](int i) const { return components[i]; }

  static VectorField Zero(int n) {
    return VectorField(std::vector<Expr>(n, Expr::Constant(0.0)));
  }
};

inline VectorField operator-(const VectorField& v) {
  std::vector<Expr> out;
  out.reserve(v.dim());
  for (const auto& c : v.components) out.push_back(Simplify(-c));
  return VectorField(std::move(out));
}

inline VectorField ParseVectorField(std::span<const std::string> component_src,
                                    std::span<const std::string> var_names) {
  std::vector<Expr> comps;
  for (const auto& s : component_src) comps.push_back(ParseExpression(s, var_names));
  return VectorField(std::move(comps));
}

inline Vector Evaluate(const VectorField& v, const Point& p) {
  Vector out(v.dim());
  const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
  for (int i = 0; i < v.dim(); ++i) out[i] = Evaluate(v[i], ps);
  return out;
}

inline std::string ToString(const VectorField& v,
                            std::span<const std::string> names = {}) {
  std::string out = "(";
  for (int i = 0; i < v.dim(); ++i) {
    if (i) out += ", ";
    out += ToString(v[i], names);
  }
  return out + ")";
}

using ExprGrid = std::vector<std::vector<Expr>>;

/// Entry (i, j) is the partial derivative of component i along variable j.
inline ExprGrid Jacobian(const VectorField& v) {
  const int n = v.dim();
  ExprGrid out(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out[i][j] = Simplify(Differentiate(v[i], j));
  }
  return out;
}

/// [X, Y] = (DY) X - (DX) Y.
inline VectorField LieBracket(const VectorField& x, const VectorField& y) {
  if (x.dim() != y.dim()) {
    throw Error(ErrorCode::kDimension, "Lie bracket of fields with different dimensions");
  }
  const int n = x.dim();
  const ExprGrid dx = Jacobian(x);
  const ExprGrid dy = Jacobian(y);
  std::vector<Expr> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::Constant(0.0);
    for (int j = 0; j < n; ++j) {
      acc = detail::DAdd(acc, detail::DMul(dy[i][j], x[j]));
      acc = detail::DSub(acc, detail::DMul(dx[i][j], y[j]));
    }
    out.push_back(Simplify(acc));
  }
  return VectorField(std::move(out));
}

/// Field compiled for fast repeated evaluation.
class CompiledField {
 public:
  CompiledField() = default;
  explicit CompiledField(const VectorField& v) {
    programs_.reserve(v.dim());
    for (const auto& c : v.components) programs_.emplace_back(c);
  }

  int dim() const { return static_cast<int>(programs_.size()); }

  void Eval(const double* p, double* out) const {
    const std::span<const double> ps(p, programs_.size());
    for (std::size_t i = 0; i < programs_.size(); ++i) out[i] = programs_[i](ps);
  }

  Vector operator()(const Vector& p) const {
    Vector out(dim());
    Eval(p.data(), out.data());
    return out;
  }

 private:
  std::vector<Program> programs_;
};

/// Jacobian of a field compiled entrywise.
class CompiledJacobian {
 public:
  CompiledJacobian() = default;
  explicit CompiledJacobian(const VectorField& v) : n_(v.dim()) {
    const ExprGrid grid = Jacobian(v);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (grid[i][j].is_constant(0.0)) continue;
        entries_.push_back({i, j, Program(grid[i][j])});
      }
    }
  }

  bool is_zero() const { return entries_.empty(); }

  Matrix operator()(const Vector& p) const {
    Matrix out = Matrix::Zero(n_, n_);
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    for (const auto& e : entries_) out(e.row, e.col) = e.program(ps);
    return out;
  }

 private:
  struct Entry {
    int row;
    int col;
    Program program;
  };
  int n_ = 0;
  std::vector<Entry> entries_;
};

}  // namespace geoctrl

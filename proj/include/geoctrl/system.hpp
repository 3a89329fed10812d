#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoctrl/error.hpp"
#include "geoctrl/expr.hpp"
#include "geoctrl/lie.hpp"
#include "geoctrl/ode.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

/// Numerical budgets shared by the pipeline. Zero for `max_duration` means
/// half of the widest window side.
struct Budgets {
  int grid = 11;
  int leaf_budget = 200;
  int n_traj = 2000;
  double horizon = 20.0;
  double max_duration = 0.0;
  int depth_cap = kDefaultDepthCap;
  double rank_tol = kDefaultRankTol;
  double margin = 1e-7;
  double eps_sign = 1e-9;
  int coverage_cells = 8;
  double coverage_threshold = 0.9;
  int metric_budget = 48;
  double endpoint_tol = 1e-2;

  friend bool operator==(const Budgets&, const Budgets&) = default;
};

/// A field kept together with the text it was parsed from.
struct FieldSource {
  std::vector<std::string> text;
  VectorField field;
};

/// Affine (possibly switched) control system on a window of R^n together
/// with the optional analysis inputs read from a spec file.
struct SystemSpec {
  std::string name = "system";
  int dim = 0;
  std::vector<std::string> var_names;
  std::vector<FieldSource> drifts;    // more than one: switched family
  std::vector<FieldSource> controls;  // generators g_i
  Box window;
  std::optional<bool> assume_not_dense;
  std::vector<FieldSource> frame;    // optional n-1 fields spanning G
  std::vector<FieldSource> support;  // optional supporting-distribution candidate
  std::vector<std::string> invariant_text;
  std::vector<Expr> invariants;      // optional leaf-identifying functions
  std::optional<Point> dist_from;
  std::optional<Point> dist_to;
  std::vector<Point> loop_at;
  Budgets budgets;
  std::uint64_t seed = 1;

  std::vector<VectorField> DriftFields() const { return Fields(drifts); }
  std::vector<VectorField> ControlFields() const { return Fields(controls); }
  std::vector<VectorField> FrameFields() const { return Fields(frame); }
  std::vector<VectorField> SupportFields() const { return Fields(support); }

  double MaxDuration() const {
    if (budgets.max_duration > 0) return budgets.max_duration;
    return 0.5 * (window.hi - window.lo).maxCoeff();
  }

 private:
  static std::vector<VectorField> Fields(const std::vector<FieldSource>& src) {
    std::vector<VectorField> out;
    out.reserve(src.size());
    for (const auto& s : src) out.push_back(s.field);
    return out;
  }
};

inline FieldSource MakeFieldSource(std::vector<std::string> text,
                                   const std::vector<std::string>& vars) {
  FieldSource src;
  src.field = ParseVectorField(text, vars);
  src.text = std::move(text);
  return src;
}

/// Convenience constructor for programmatic use and tests.
inline SystemSpec MakeSystem(std::string name, std::vector<std::string> vars,
                             std::vector<std::vector<std::string>> drifts,
                             std::vector<std::vector<std::string>> controls,
                             std::vector<std::pair<double, double>> window) {
  SystemSpec spec;
  spec.name = std::move(name);
  spec.dim = static_cast<int>(vars.size());
  spec.var_names = std::move(vars);
  for (auto& d : drifts) spec.drifts.push_back(MakeFieldSource(std::move(d), spec.var_names));
  for (auto& c : controls) {
    spec.controls.push_back(MakeFieldSource(std::move(c), spec.var_names));
  }
  spec.window.lo.resize(spec.dim);
  spec.window.hi.resize(spec.dim);
  for (int i = 0; i < spec.dim; ++i) {
    spec.window.lo[i] = window.at(i).first;
    spec.window.hi[i] = window.at(i).second;
  }
  spec.assume_not_dense = true;
  return spec;
}

/// Checks the structural invariants of a spec; throws on violation.
inline void ValidateSystem(const SystemSpec& spec) {
  if (spec.dim < 1) throw Error(ErrorCode::kDimension, "system dimension must be >= 1");
  if (static_cast<int>(spec.var_names.size()) != spec.dim) {
    throw Error(ErrorCode::kDimension, "number of variable names differs from dim");
  }
  if (spec.controls.empty()) throw Error(ErrorCode::kEmptyInput, "system has no control fields");
  if (spec.drifts.empty()) throw Error(ErrorCode::kEmptyInput, "system has no drift");
  auto check = [&](const std::vector<FieldSource>& fields, const char* what) {
    for (const auto& f : fields) {
      if (f.field.dim() != spec.dim) {
        throw Error(ErrorCode::kDimension,
                    std::string(what) + " has " + std::to_string(f.field.dim()) +
                        " components, expected " + std::to_string(spec.dim));
      }
    }
  };
  check(spec.drifts, "drift");
  check(spec.controls, "control");
  check(spec.frame, "frame field");
  check(spec.support, "support field");
  if (spec.window.dim() != spec.dim) {
    throw Error(ErrorCode::kDimension, "window must have one interval per axis");
  }
  for (int i = 0; i < spec.dim; ++i) {
    if (!(spec.window.lo[i] < spec.window.hi[i])) {
      throw Error(ErrorCode::kDimension, "window interval " + std::to_string(i + 1) +
                                             " must satisfy lo < hi");
    }
  }
}

}  // namespace geoctrl

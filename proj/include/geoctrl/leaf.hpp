#pragma once

// Flows of vector fields, tangent-vector transport along flows, random
// exploration of leaves of the driftless system and the shift of drift
// vectors back to a base point along those leaves.

#include <cstdint>
#include <optional>
#include <vector>

#include "geoctrl/error.hpp"
#include "geoctrl/ode.hpp"
#include "geoctrl/parallel.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

/// Flows are confined to the analysis window grown by this fraction.
inline constexpr double kWindowInflation = 0.2;
inline constexpr int kMaxWordLength = 8;

/// One piecewise-constant segment: flow of sign * g[field] for `duration`.
struct Letter {
  int field = 0;
  int sign = 1;
  double duration = 0.0;

  friend bool operator==(const Letter&, const Letter&) = default;
};

using ControlWord = std::vector<Letter>;

struct Visit {
  Point point;
  ControlWord word;
};

struct LeafSample {
  Point base;
  std::vector<Visit> visits;           // visits[0] is the base, empty word
  std::vector<Vector> shifted_drifts;  // filled by ShiftDriftSet
  int attempts = 0;
  int escaped = 0;
  int transport_failures = 0;
};

/// A field with its compiled value and Jacobian.
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(const VectorField& v)
      : field_(v), value_(v), jacobian_(v) {}

  const VectorField& field() const { return field_; }
  int dim() const { return field_.dim(); }
  Vector operator()(const Vector& p) const { return value_(p); }
  Matrix Jacobian(const Vector& p) const { return jacobian_(p); }
  bool has_zero_jacobian() const { return jacobian_.is_zero(); }

 private:
  VectorField field_;
  CompiledField value_;
  CompiledJacobian jacobian_;
};

namespace detail {

inline auto InsideOf(const std::optional<Box>& window) {
  return [&window](const Vector& y) {
    if (!window) return true;
    for (int i = 0; i < window->dim(); ++i) {
      if (!(y[i] >= window->lo[i] && y[i] <= window->hi[i])) return false;
    }
    return true;
  };
}

}  // namespace detail

/// psi^V_t(x0). `window` is the region the trajectory must stay in (already
/// inflated by the caller); leaving it raises kWindowEscape.
inline Point IntegrateFlow(const FlowField& v, const Point& x0, double t,
                           const StepControl& step = {},
                           const std::optional<Box>& window = std::nullopt,
                           double sign = 1.0) {
  return IntegrateRK45([&](const Vector& y) -> Vector { return sign * v(y); }, x0, t,
                       step, detail::InsideOf(window));
}

inline Point IntegrateFlow(const VectorField& v, const Point& x0, double t,
                           const StepControl& step = {},
                           const std::optional<Box>& window = std::nullopt) {
  return IntegrateFlow(FlowField(v), x0, t, step, window);
}

/// Pushes `eta` at `y` forward through psi^V_t by integrating the trajectory
/// together with the variational equation v' = DV(x) v.
inline Vector PushforwardAlong(const FlowField& v, const Point& y, double t,
                               const Vector& eta, const StepControl& step = {},
                               const std::optional<Box>& window = std::nullopt,
                               double sign = 1.0) {
  const int n = v.dim();
  if (v.has_zero_jacobian()) {
    // The trajectory is still integrated so window escapes are reported.
    IntegrateFlow(v, y, t, step, window, sign);
    return eta;
  }
  Vector state(2 * n);
  state << y, eta;
  const auto inside = detail::InsideOf(window);
  const Vector out = IntegrateRK45(
      [&](const Vector& s) -> Vector {
        const Vector x = s.head(n);
        Vector ds(2 * n);
        ds.head(n) = sign * v(x);
        ds.tail(n) = sign * (v.Jacobian(x) * s.tail(n));
        return ds;
      },
      state, t, step, [&](const Vector& s) { return inside(s.head(n)); });
  return out.tail(n);
}

inline Vector PushforwardAlong(const VectorField& v, const Point& y, double t,
                               const Vector& eta, const StepControl& step = {},
                               const std::optional<Box>& window = std::nullopt) {
  return PushforwardAlong(FlowField(v), y, t, eta, step, window);
}

/// Options for the leaf random walk.
struct LeafWalkOptions {
  double max_duration = 1.0;
  StepControl step{};
  std::optional<Box> window;  // already inflated
};

/// Random walk over piecewise-constant words of +-g_i started at a base
/// point. Each call to Next() draws one word and records every prefix
/// endpoint as a visit. The draw sequence depends only on the seed, so a
/// walk stopped early yields a prefix of a longer walk.
class LeafWalker {
 public:
  LeafWalker(const std::vector<FlowField>& generators, Point base,
             LeafWalkOptions options, std::uint64_t seed)
      : generators_(generators), base_(std::move(base)),
        options_(std::move(options)), rng_(seed) {}

  const Point& base() const { return base_; }

  /// Draws and integrates one word; returns the new visits (possibly none
  /// when the first letter already escapes). `escaped` is set when the word
  /// was cut short by the window.
  std::vector<Visit> Next(bool* escaped = nullptr) {
    const int length = rng_.Integer(1, kMaxWordLength);
    ControlWord word(length);
    for (auto& letter : word) {
      letter.field = rng_.Index(static_cast<int>(generators_.size()));
      letter.sign = rng_.Sign() > 0 ? 1 : -1;
      letter.duration = rng_.UniformPositive(options_.max_duration);
    }
    std::vector<Visit> visits;
    Point p = base_;
    ControlWord prefix;
    if (escaped) *escaped = false;
    for (const auto& letter : word) {
      try {
        p = IntegrateFlow(generators_[letter.field], p, letter.duration, options_.step,
                          options_.window, letter.sign);
      } catch (const Error&) {
        if (escaped) *escaped = true;
        break;
      }
      prefix.push_back(letter);
      visits.push_back({p, prefix});
    }
    return visits;
  }

 private:
  const std::vector<FlowField>& generators_;
  Point base_;
  LeafWalkOptions options_;
  Rng rng_;
};

inline std::vector<FlowField> CompileFields(const std::vector<VectorField>& fields) {
  std::vector<FlowField> out;
  out.reserve(fields.size());
  for (const auto& f : fields) out.emplace_back(f);
  return out;
}

/// Samples the leaf of the driftless system through `x` with `budget` random
/// words. Escaped words still count against the budget.
inline LeafSample SampleLeaf(const std::vector<FlowField>& generators, const Point& x,
                             int budget, const LeafWalkOptions& options,
                             std::uint64_t seed) {
  if (budget < 1) throw Error(ErrorCode::kDimension, "leaf budget must be at least 1");
  LeafSample leaf;
  leaf.base = x;
  leaf.visits.push_back({x, {}});
  LeafWalker walker(generators, x, options, seed);
  for (int i = 0; i < budget; ++i) {
    bool escaped = false;
    auto visits = walker.Next(&escaped);
    ++leaf.attempts;
    if (escaped) ++leaf.escaped;
    for (auto& v : visits) leaf.visits.push_back(std::move(v));
  }
  return leaf;
}

inline LeafSample SampleLeaf(const std::vector<VectorField>& generators, const Point& x,
                             int budget, double max_duration, std::uint64_t seed,
                             const std::optional<Box>& window = std::nullopt) {
  const auto compiled = CompileFields(generators);
  LeafWalkOptions options;
  options.max_duration = max_duration;
  options.window = window;
  return SampleLeaf(compiled, x, budget, options, seed);
}

/// Transports `v`, a tangent vector at the end of `word` started from
/// `base`, back to `base`: the letters are undone in reverse order with
/// negated durations.
///
/// `path[l]` is the point reached after the first l letters (path[0] is the
/// base); stage l of the reverse transport starts from path[l + 1].
inline Vector TransportAlongPath(const std::vector<FlowField>& generators,
                                 std::span<const Point> path, const ControlWord& word,
                                 const Vector& v, const StepControl& step = {},
                                 const std::optional<Box>& window = std::nullopt) {
  Vector out = v;
  for (std::size_t l = word.size(); l-- > 0;) {
    const Letter& letter = word[l];
    out = PushforwardAlong(generators[letter.field], path[l + 1], -letter.duration, out,
                           step, window, letter.sign);
  }
  return out;
}

inline Vector TransportToBase(const std::vector<FlowField>& generators, const Point& base,
                              const ControlWord& word, const Vector& v,
                              const StepControl& step = {},
                              const std::optional<Box>& window = std::nullopt) {
  if (word.empty()) return v;
  std::vector<Point> path{base};
  for (const auto& letter : word) {
    path.push_back(IntegrateFlow(generators[letter.field], path.back(), letter.duration,
                                 step, window, letter.sign));
  }
  return TransportAlongPath(generators, path, word, v, step, window);
}

/// Shift of every drift to the base of `leaf`: one vector per (visit, drift)
/// pair, visit-major. Visits whose transport fails are skipped and counted.
inline std::vector<Vector> ShiftDriftSet(const std::vector<FlowField>& generators,
                                         const std::vector<FlowField>& drifts,
                                         LeafSample& leaf, const StepControl& step = {},
                                         const std::optional<Box>& window = std::nullopt) {
  leaf.shifted_drifts.clear();
  leaf.transport_failures = 0;
  for (const auto& visit : leaf.visits) {
    try {
      std::vector<Vector> shifted;
      for (const auto& f : drifts) {
        shifted.push_back(
            TransportToBase(generators, leaf.base, visit.word, f(visit.point), step, window));
      }
      for (auto& s : shifted) leaf.shifted_drifts.push_back(std::move(s));
    } catch (const Error&) {
      ++leaf.transport_failures;
    }
  }
  return leaf.shifted_drifts;
}

inline std::vector<Vector> ShiftDriftSet(const std::vector<VectorField>& generators,
                                         const std::vector<VectorField>& drifts,
                                         LeafSample& leaf) {
  return ShiftDriftSet(CompileFields(generators), CompileFields(drifts), leaf);
}

}  // namespace geoctrl

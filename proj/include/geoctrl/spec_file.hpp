#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "geoctrl/system.hpp"

namespace geoctrl {

// Spec files are line oriented: `key = value`, `#` starts a comment.
// Field-valued keys take n comma-separated expressions and may repeat
// (drift, control, frame, support); `invariant` takes one expression and
// may repeat; `loop_at` takes n numbers and may repeat. Windows are written
// `lo:hi` per axis, and numbers accept `pi` and `-pi`.

namespace detail {

struct SpecLine {
  int line = 0;
  std::string key;
  std::string value;
  int value_column = 1;
};

inline std::string_view Trim(std::string_view s, int* leading = nullptr) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  if (leading) *leading = static_cast<int>(a);
  return s.substr(a, b - a);
}

[[noreturn]] inline void SpecFail(int line, const std::string& msg) {
  throw Error(ErrorCode::kSpecFormat, msg + " at line " + std::to_string(line));
}

/// Splits on top-level commas; each piece keeps its 1-based column.
inline std::vector<std::pair<std::string, int>> SplitList(std::string_view s, int column) {
  std::vector<std::pair<std::string, int>> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && s[i] == '(') ++depth;
    if (i < s.size() && s[i] == ')') --depth;
    if (i == s.size() || (s[i] == ',' && depth == 0)) {
      int lead = 0;
      const std::string_view piece = Trim(s.substr(start, i - start), &lead);
      out.emplace_back(std::string(piece), column + static_cast<int>(start) + lead);
      start = i + 1;
    }
  }
  return out;
}

inline double ParseNumber(std::string_view s, int line) {
  if (s == "pi") return std::numbers::pi;
  if (s == "-pi") return -std::numbers::pi;
  double v = 0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [end, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    SpecFail(line, "invalid number '" + std::string(s) + "'");
  }
  return v;
}

inline long long ParseInteger(std::string_view s, int line) {
  long long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    SpecFail(line, "invalid integer '" + std::string(s) + "'");
  }
  return v;
}

inline bool ParseBool(std::string_view s, int line) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  SpecFail(line, "invalid boolean '" + std::string(s) + "'");
}

inline FieldSource ParseFieldLine(const SpecLine& l, const SystemSpec& spec) {
  const auto parts = SplitList(l.value, l.value_column);
  if (static_cast<int>(parts.size()) != spec.dim) {
    throw Error(ErrorCode::kDimension, l.key + " has " + std::to_string(parts.size()) +
                                           " components, expected " + std::to_string(spec.dim) +
                                           " at line " + std::to_string(l.line));
  }
  FieldSource src;
  std::vector<Expr> comps;
  for (const auto& [text, col] : parts) {
    comps.push_back(ParseExpression(text, spec.var_names, l.line, col));
    src.text.push_back(text);
  }
  src.field = VectorField(std::move(comps));
  return src;
}

inline Point ParsePointLine(const SpecLine& l, int dim) {
  const auto parts = SplitList(l.value, l.value_column);
  if (static_cast<int>(parts.size()) != dim) {
    throw Error(ErrorCode::kDimension, l.key + " has " + std::to_string(parts.size()) +
                                           " coordinates, expected " + std::to_string(dim) +
                                           " at line " + std::to_string(l.line));
  }
  Point p(dim);
  for (int i = 0; i < dim; ++i) p[i] = ParseNumber(parts[i].first, l.line);
  return p;
}

inline bool Repeatable(const std::string& key) {
  return key == "drift" || key == "control" || key == "frame" || key == "support" ||
         key == "invariant" || key == "loop_at";
}

}  // namespace detail

/// Parses spec text. Every expression is parsed eagerly; failures carry the
/// line (and column for expression errors).
inline SystemSpec ParseSpec(std::string_view text) {
  std::vector<detail::SpecLine> lines;
  std::map<std::string, int> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    if (detail::Trim(raw).empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) detail::SpecFail(line_no, "expected 'key = value'");
    detail::SpecLine l;
    l.line = line_no;
    l.key = std::string(detail::Trim(raw.substr(0, eq)));
    int lead = 0;
    l.value = std::string(detail::Trim(raw.substr(eq + 1), &lead));
    l.value_column = static_cast<int>(eq) + 2 + lead;
    if (l.key.empty()) detail::SpecFail(line_no, "missing key");
    if (++seen[l.key] > 1 && !detail::Repeatable(l.key)) {
      detail::SpecFail(line_no, "duplicate key '" + l.key + "'");
    }
    lines.push_back(std::move(l));
    if (eol == text.size()) break;
  }

  SystemSpec spec;
  spec.dim = 0;
  spec.assume_not_dense.reset();
  // Structural keys first so expressions can be parsed against the variables.
  for (const auto& l : lines) {
    if (l.key == "dim") {
      spec.dim = static_cast<int>(detail::ParseInteger(l.value, l.line));
      if (spec.dim < 1) throw Error(ErrorCode::kDimension, "dim must be >= 1 at line " +
                                                               std::to_string(l.line));
    }
  }
  for (const auto& l : lines) {
    if (l.key != "vars") continue;
    for (const auto& [name, col] : detail::SplitList(l.value, l.value_column)) {
      if (name.empty()) detail::SpecFail(l.line, "empty variable name");
      spec.var_names.push_back(name);
    }
    if (spec.dim == 0) spec.dim = static_cast<int>(spec.var_names.size());
    if (static_cast<int>(spec.var_names.size()) != spec.dim) {
      throw Error(ErrorCode::kDimension,
                  "vars lists " + std::to_string(spec.var_names.size()) +
                      " names but dim is " + std::to_string(spec.dim) + " at line " +
                      std::to_string(l.line));
    }
  }
  if (spec.dim == 0) throw Error(ErrorCode::kSpecFormat, "spec must give dim or vars");
  if (spec.var_names.empty()) {
    for (int i = 0; i < spec.dim; ++i) spec.var_names.push_back(DefaultVarName(i));
  }

  bool have_window = false;
  Budgets& b = spec.budgets;
  for (const auto& l : lines) {
    const std::string& k = l.key;
    const std::string& v = l.value;
    auto integer = [&] { return static_cast<int>(detail::ParseInteger(v, l.line)); };
    auto number = [&] { return detail::ParseNumber(v, l.line); };
    if (k == "dim" || k == "vars") {
    } else if (k == "name") {
      spec.name = v;
    } else if (k == "drift") {
      spec.drifts.push_back(detail::ParseFieldLine(l, spec));
    } else if (k == "control") {
      spec.controls.push_back(detail::ParseFieldLine(l, spec));
    } else if (k == "frame") {
      spec.frame.push_back(detail::ParseFieldLine(l, spec));
    } else if (k == "support") {
      spec.support.push_back(detail::ParseFieldLine(l, spec));
    } else if (k == "invariant") {
      spec.invariants.push_back(ParseExpression(v, spec.var_names, l.line, l.value_column));
      spec.invariant_text.push_back(v);
    } else if (k == "window") {
      const auto parts = detail::SplitList(v, l.value_column);
      if (static_cast<int>(parts.size()) != spec.dim) {
        throw Error(ErrorCode::kDimension, "window has " + std::to_string(parts.size()) +
                                               " intervals, expected " +
                                               std::to_string(spec.dim) + " at line " +
                                               std::to_string(l.line));
      }
      spec.window.lo.resize(spec.dim);
      spec.window.hi.resize(spec.dim);
      for (int i = 0; i < spec.dim; ++i) {
        const std::string& p = parts[i].first;
        const auto colon = p.find(':');
        if (colon == std::string::npos) detail::SpecFail(l.line, "window interval needs lo:hi");
        spec.window.lo[i] = detail::ParseNumber(detail::Trim(p.substr(0, colon)), l.line);
        spec.window.hi[i] = detail::ParseNumber(detail::Trim(p.substr(colon + 1)), l.line);
      }
      have_window = true;
    } else if (k == "assume_not_dense") {
      spec.assume_not_dense = detail::ParseBool(v, l.line);
    } else if (k == "seed") {
      spec.seed = static_cast<std::uint64_t>(detail::ParseInteger(v, l.line));
    } else if (k == "dist_from") {
      spec.dist_from = detail::ParsePointLine(l, spec.dim);
    } else if (k == "dist_to") {
      spec.dist_to = detail::ParsePointLine(l, spec.dim);
    } else if (k == "loop_at") {
      spec.loop_at.push_back(detail::ParsePointLine(l, spec.dim));
    } else if (k == "grid") {
      b.grid = integer();
    } else if (k == "leaf_budget") {
      b.leaf_budget = integer();
    } else if (k == "n_traj") {
      b.n_traj = integer();
    } else if (k == "horizon") {
      b.horizon = number();
    } else if (k == "max_duration") {
      b.max_duration = number();
    } else if (k == "depth_cap") {
      b.depth_cap = integer();
    } else if (k == "rank_tol") {
      b.rank_tol = number();
    } else if (k == "margin") {
      b.margin = number();
    } else if (k == "eps_sign") {
      b.eps_sign = number();
    } else if (k == "coverage_cells") {
      b.coverage_cells = integer();
    } else if (k == "coverage_threshold") {
      b.coverage_threshold = number();
    } else if (k == "metric_budget") {
      b.metric_budget = integer();
    } else if (k == "endpoint_tol") {
      b.endpoint_tol = number();
    } else {
      detail::SpecFail(l.line, "unknown key '" + k + "'");
    }
  }
  if (!have_window) throw Error(ErrorCode::kSpecFormat, "spec must give a window");
  if (spec.dist_from.has_value() != spec.dist_to.has_value()) {
    throw Error(ErrorCode::kSpecFormat, "dist_from and dist_to must be given together");
  }
  ValidateSystem(spec);
  return spec;
}

inline SystemSpec LoadSpec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseSpec(buf.str());
}

/// Writes every key explicitly, numbers in shortest round-trip form, so
/// that ParseSpec(SerializeSpec(s)) reproduces `s`.
inline std::string SerializeSpec(const SystemSpec& spec) {
  std::ostringstream out;
  auto list = [](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + xs[i];
    return s;
  };
  auto point = [](const Point& p) {
    std::string s;
    for (int i = 0; i < p.size(); ++i) s += (i ? ", " : "") + FormatNumber(p[i]);
    return s;
  };
  out << "name = " << spec.name << "\n";
  out << "dim = " << spec.dim << "\n";
  out << "vars = " << list(spec.var_names) << "\n";
  for (const auto& f : spec.drifts) out << "drift = " << list(f.text) << "\n";
  for (const auto& f : spec.controls) out << "control = " << list(f.text) << "\n";
  for (const auto& f : spec.frame) out << "frame = " << list(f.text) << "\n";
  for (const auto& f : spec.support) out << "support = " << list(f.text) << "\n";
  for (const auto& t : spec.invariant_text) out << "invariant = " << t << "\n";
  out << "window = ";
  for (int i = 0; i < spec.window.dim(); ++i) {
    out << (i ? ", " : "") << FormatNumber(spec.window.lo[i]) << ":"
        << FormatNumber(spec.window.hi[i]);
  }
  out << "\n";
  if (spec.assume_not_dense) {
    out << "assume_not_dense = " << (*spec.assume_not_dense ? "true" : "false") << "\n";
  }
  out << "seed = " << spec.seed << "\n";
  if (spec.dist_from) out << "dist_from = " << point(*spec.dist_from) << "\n";
  if (spec.dist_to) out << "dist_to = " << point(*spec.dist_to) << "\n";
  for (const auto& p : spec.loop_at) out << "loop_at = " << point(p) << "\n";
  const Budgets& b = spec.budgets;
  out << "grid = " << b.grid << "\n";
  out << "leaf_budget = " << b.leaf_budget << "\n";
  out << "n_traj = " << b.n_traj << "\n";
  out << "horizon = " << FormatNumber(b.horizon) << "\n";
  out << "max_duration = " << FormatNumber(b.max_duration) << "\n";
  out << "depth_cap = " << b.depth_cap << "\n";
  out << "rank_tol = " << FormatNumber(b.rank_tol) << "\n";
  out << "margin = " << FormatNumber(b.margin) << "\n";
  out << "eps_sign = " << FormatNumber(b.eps_sign) << "\n";
  out << "coverage_cells = " << b.coverage_cells << "\n";
  out << "coverage_threshold = " << FormatNumber(b.coverage_threshold) << "\n";
  out << "metric_budget = " << b.metric_budget << "\n";
  out << "endpoint_tol = " << FormatNumber(b.endpoint_tol) << "\n";
  return out.str();
}

}  // namespace geoctrl

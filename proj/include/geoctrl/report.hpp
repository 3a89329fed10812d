#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <json.hpp>

#include "geoctrl/criterion.hpp"
#include "geoctrl/metrics.hpp"
#include "geoctrl/reach.hpp"
#include "geoctrl/spec_file.hpp"

#ifndef GEOCTRL_VERSION
#define GEOCTRL_VERSION "0.0.0"
#endif

namespace geoctrl {

using Json = nlohmann::ordered_json;

enum class Command { kAudit, kCheck, kReach, kDist, kLoop };

inline std::optional<Command> ParseCommand(std::string_view s) {
  if (s == "audit") return Command::kAudit;
  if (s == "check") return Command::kCheck;
  if (s == "reach") return Command::kReach;
  if (s == "dist") return Command::kDist;
  if (s == "loop") return Command::kLoop;
  return std::nullopt;
}

inline const char* CommandName(Command c) {
  switch (c) {
    case Command::kAudit: return "audit";
    case Command::kCheck: return "check";
    case Command::kReach: return "reach";
    case Command::kDist: return "dist";
    case Command::kLoop: return "loop";
  }
  return "unknown";
}

/// Command-line budget overrides applied on top of the spec file.
struct Overrides {
  std::optional<int> grid;
  std::optional<int> leaf_budget;
  std::optional<int> n_traj;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
};

inline void ApplyOverrides(SystemSpec& spec, const Overrides& o) {
  if (o.grid) spec.budgets.grid = *o.grid;
  if (o.leaf_budget) spec.budgets.leaf_budget = *o.leaf_budget;
  if (o.n_traj) spec.budgets.n_traj = *o.n_traj;
  if (o.horizon) spec.budgets.horizon = *o.horizon;
  if (o.seed) spec.seed = *o.seed;
  if (spec.budgets.grid < 2) throw Error(ErrorCode::kDimension, "grid must be >= 2");
  if (spec.budgets.leaf_budget < 1) throw Error(ErrorCode::kDimension, "leaf budget must be >= 1");
  if (spec.budgets.n_traj < 1) throw Error(ErrorCode::kDimension, "trajectory count must be >= 1");
  if (!(spec.budgets.horizon > 0)) throw Error(ErrorCode::kDimension, "horizon must be > 0");
}

inline constexpr int kLoopScanGrid = 3;

enum ExitCode { kExitOk = 0, kExitError = 1, kExitDisagree = 2, kExitNotRegular = 3 };

struct RunResult {
  Json report;
  int exit_code = kExitOk;
  std::optional<ReachCloud> cloud;  // reach command only
};

inline std::string Fnv1aHex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline Json ToJson(const Vector& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json ToJson(const CostEstimate& e) {
  Json j;
  j["bound"] = "upper";
  j["reachable"] = e.reachable;
  j["value"] = e.reachable ? Json(e.value) : Json(nullptr);
  j["endpoint_error"] = e.reachable ? Json(e.endpoint_error) : Json(nullptr);
  j["budget_spent"] = e.budget_spent;
  j["horizon_cap"] = e.horizon_cap;
  Json word = Json::array();
  for (const auto& s : e.word) word.push_back({{"u", ToJson(s.u)}, {"duration", s.duration}});
  j["word"] = std::move(word);
  return j;
}

inline Json SystemEcho(const SystemSpec& spec) {
  Json j;
  j["name"] = spec.name;
  j["dim"] = spec.dim;
  j["vars"] = spec.var_names;
  Json drifts = Json::array(), controls = Json::array();
  for (const auto& f : spec.drifts) drifts.push_back(f.text);
  for (const auto& f : spec.controls) controls.push_back(f.text);
  j["drifts"] = std::move(drifts);
  j["controls"] = std::move(controls);
  j["window"] = {{"lo", ToJson(spec.window.lo)}, {"hi", ToJson(spec.window.hi)}};
  const Budgets& b = spec.budgets;
  j["budgets"] = {{"grid", b.grid},
                  {"leaf_budget", b.leaf_budget},
                  {"n_traj", b.n_traj},
                  {"horizon", b.horizon},
                  {"max_duration", spec.MaxDuration()},
                  {"depth_cap", b.depth_cap},
                  {"rank_tol", b.rank_tol},
                  {"metric_budget", b.metric_budget},
                  {"endpoint_tol", b.endpoint_tol}};
  return j;
}

inline Json RegularityJson(const AnalysisContext& ctx) {
  const RegularityReport& a = ctx.audit;
  Json j;
  j["regular"] = a.constant_rank;
  j["rank"] = a.rank();
  j["codimension"] = a.constant_rank ? Json(a.dim - a.rank()) : Json(nullptr);
  j["grid_points"] = a.grid.size();
  j["singular_points"] = a.singular.size();
  Json singular = Json::array();
  for (std::size_t i = 0; i < a.singular.size() && i < 10; ++i) {
    singular.push_back(ToJson(a.singular[i]));
  }
  j["singular_sample"] = std::move(singular);
  Json family = Json::array();
  for (const auto& e : ctx.family.generated) family.push_back(e.word);
  j["family"] = std::move(family);
  j["summary"] = a.Summary();
  return j;
}

inline const char* WitnessName(PointVerdict::Witness w) {
  switch (w) {
    case PointVerdict::Witness::kNone: return "none";
    case PointVerdict::Witness::kSignChange: return "sign_change";
    case PointVerdict::Witness::kInterior: return "interior";
    case PointVerdict::Witness::kSeparating: return "separating";
  }
  return "none";
}

inline Json PointJson(const PointVerdict& p) {
  Json j;
  j["base"] = ToJson(p.base);
  j["holds"] = p.condition_holds;
  j["witness"] = WitnessName(p.witness);
  if (p.covector.size() > 0) {
    j["covector"] = ToJson(p.covector);
    j["direction"] = ToJson(p.quotient_basis * p.covector);
  }
  if (p.sign_change) {
    j["sign_change"] = {{"positive", ToJson(p.sign_change->positive)},
                        {"negative", ToJson(p.sign_change->negative)}};
  }
  if (p.determinant_holds) j["determinant_holds"] = *p.determinant_holds;
  j["approximate"] = p.approximate;
  j["samples_used"] = p.samples_used;
  return j;
}

inline Json OracleJson(const OracleReport& r) {
  Json j;
  j["status"] = AgreementName(r.status);
  Json checks = Json::array();
  for (const auto& c : r.checks) {
    Json cj;
    cj["start"] = ToJson(c.start);
    cj["direction"] = c.direction;
    if (c.direction == "witness") {
      cj["witness_ok"] = c.witness_ok;
    } else {
      cj["coverage"] = c.coverage;
    }
    cj["agree"] = c.agree;
    cj["truncated"] = c.truncated;
    checks.push_back(std::move(cj));
  }
  j["checks"] = std::move(checks);
  j["witness_exact"] = r.witness_exact;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline Json SupportJson(const SupportReport& r) {
  return {{"complement", r.complement},
          {"invariant", r.invariant},
          {"half_space", r.half_space},
          {"drift_outside", r.drift_outside},
          {"concludes_not_controllable", r.concludes_not_controllable},
          {"conclusion", r.conclusion}};
}

}  // namespace detail

/// Runs one command and assembles a report whose bytes depend only on the
/// spec (after overrides) and the seed.
inline RunResult RunPipeline(SystemSpec spec, Command command, const Overrides& overrides = {}) {
  ApplyOverrides(spec, overrides);
  ValidateSystem(spec);
  RunResult out;
  Json& r = out.report;
  r["system"] = detail::SystemEcho(spec);
  r["hash"] = Fnv1aHex(SerializeSpec(spec));
  r["command"] = CommandName(command);
  r["regularity"] = nullptr;
  r["verdict"] = nullptr;
  r["witnesses"] = Json::array();
  r["oracle"] = nullptr;
  r["metrics"] = nullptr;
  Json assumptions = Json::array();

  if (command == Command::kAudit || command == Command::kCheck) {
    const AnalysisContext ctx = PrepareAnalysis(spec);
    r["regularity"] = detail::RegularityJson(ctx);
    assumptions.push_back("regularity is audited on a finite grid and can only be falsified");
    if (!ctx.audit.constant_rank) out.exit_code = kExitNotRegular;
    if (command == Command::kCheck) {
      const GlobalVerdict verdict =
          ComputeGlobalVerdict(ctx, spec.budgets.grid, spec.seed, spec.assume_not_dense);
      Json v;
      v["status"] = StatusName(verdict.status);
      v["codimension"] = verdict.codimension >= 0 ? Json(verdict.codimension) : Json(nullptr);
      v["base_points"] = verdict.points.size();
      int holds = 0;
      bool approximate = false;
      for (const auto& p : verdict.points) {
        holds += p.condition_holds ? 1 : 0;
        approximate = approximate || p.approximate;
        if (!p.condition_holds) r["witnesses"].push_back(detail::PointJson(p));
      }
      v["holds_at"] = holds;
      v["approximate"] = approximate;
      if (!verdict.note.empty()) v["note"] = verdict.note;
      if (!spec.support.empty() && verdict.codimension >= 2) {
        v["supporting_distribution"] = detail::SupportJson(VerifySupportingDistribution(
            ctx, spec.SupportFields(), spec.budgets.grid, spec.budgets.rank_tol, spec.seed));
        assumptions.push_back("supporting distribution: the half-space clause is read in the "
                              "orthogonal complement of G");
      }
      r["verdict"] = std::move(v);
      if (spec.assume_not_dense.value_or(false)) {
        assumptions.push_back("not-dense assumption asserted: failures are read as evidence of "
                              "non-controllability");
      } else {
        assumptions.push_back("not-dense assumption not asserted: only sufficiency is claimed");
      }
      if (verdict.status != VerdictStatus::kNotRegular) {
        const OracleReport oracle =
            CrossValidate(verdict, ctx, spec, OracleBudgetFor(spec), spec.seed);
        r["oracle"] = detail::OracleJson(oracle);
        if (oracle.status == Agreement::kDisagree) out.exit_code = kExitDisagree;
      }
    }
  } else if (command == Command::kReach) {
    const Point x0 = spec.dist_from.value_or(spec.window.Center());
    ControlPolicy policy;
    const ReachCloud cloud = SimulateReach(spec, x0, spec.budgets.horizon, spec.budgets.n_traj,
                                           policy, OracleBudgetFor(spec).stride, spec.seed);
    Json o;
    o["start"] = detail::ToJson(x0);
    o["policy"] = PolicyName(policy.kind);
    o["trajectories"] = cloud.trajectories;
    o["truncated"] = cloud.truncated;
    o["points"] = cloud.points.size();
    o["coverage"] = Coverage(cloud, spec.window, spec.budgets.coverage_cells);
    o["cells_per_axis"] = spec.budgets.coverage_cells;
    r["oracle"] = std::move(o);
    out.cloud = cloud;
  } else if (command == Command::kDist) {
    if (!spec.dist_from || !spec.dist_to) {
      throw Error(ErrorCode::kSpecFormat, "dist needs dist_from and dist_to in the spec");
    }
    const MetricOptions opt = MetricOptionsFor(spec);
    Json m;
    m["from"] = detail::ToJson(*spec.dist_from);
    m["to"] = detail::ToJson(*spec.dist_to);
    m["cost"] = detail::ToJson(EstimateCost(spec, *spec.dist_from, *spec.dist_to, opt, spec.seed));
    m["sr_distance"] =
        detail::ToJson(SrDistance(spec, *spec.dist_from, *spec.dist_to, opt, spec.seed));
    r["metrics"] = std::move(m);
    assumptions.push_back("metric values are upper estimates from a finite shooting budget");
  } else {
    const MetricOptions opt = MetricOptionsFor(spec);
    Json loops = Json::array();
    for (std::size_t i = 0; i < spec.loop_at.size(); ++i) {
      Json l = detail::ToJson(LoopLength(spec, spec.loop_at[i], opt, DeriveSeed(spec.seed, i)));
      l["at"] = detail::ToJson(spec.loop_at[i]);
      loops.push_back(std::move(l));
    }
    // Largest loop estimate over a coarse grid. Boundedness of the loop
    // function suggests controllability but a finite scan proves nothing.
    const std::vector<Point> probes = spec.window.Grid(kLoopScanGrid);
    double largest = 0.0;
    int unreachable = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const CostEstimate e = LoopLength(spec, probes[i], opt, DeriveSeed(spec.seed, 1000 + i));
      if (e.reachable) {
        largest = std::max(largest, e.value);
      } else {
        ++unreachable;
      }
    }
    r["metrics"] = {{"loops", std::move(loops)},
                    {"boundedness_scan",
                     {{"grid_per_axis", kLoopScanGrid},
                      {"points", probes.size()},
                      {"max_loop", largest},
                      {"unreachable", unreachable},
                      {"conclusive", false}}}};
    assumptions.push_back("metric values are upper estimates from a finite shooting budget");
  }
  r["assumptions"] = std::move(assumptions);
  r["seed"] = spec.seed;
  r["version"] = GEOCTRL_VERSION;
  return out;
}

/// Diagnostic line for the CLI.
inline std::string FormatError(const Error& e) {
  return std::string("error[") + ErrorCodeName(e.code()) + "]: " + e.what();
}

}  // namespace geoctrl

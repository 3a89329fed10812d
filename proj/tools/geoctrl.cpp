#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "geoctrl/report.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Controllability analysis for affine control systems"};
  app.set_version_flag("--version", GEOCTRL_VERSION);
  std::string command;
  std::string spec_path;
  geoctrl::Overrides o;
  std::string json_path, csv_path;
  app.add_option("command", command, "audit | check | reach | dist | loop")
      ->required()
      ->check(CLI::IsMember({"audit", "check", "reach", "dist", "loop"}));
  app.add_option("specfile", spec_path, "system spec file")->required();
  app.add_option("--grid", o.grid, "grid points per axis");
  app.add_option("--leaf-budget", o.leaf_budget, "leaf samples per base point");
  app.add_option("--traj", o.n_traj, "trajectories per reach cloud");
  app.add_option("--horizon", o.horizon, "reach horizon T");
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--json", json_path, "write the report here instead of stdout");
  app.add_option("--csv", csv_path, "write the reach cloud as CSV");
  CLI11_PARSE(app, argc, argv);

  try {
    const geoctrl::SystemSpec spec = geoctrl::LoadSpec(spec_path);
    const geoctrl::RunResult result =
        geoctrl::RunPipeline(spec, *geoctrl::ParseCommand(command), o);
    const std::string text = result.report.dump(2) + "\n";
    if (json_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(json_path, std::ios::binary);
      if (!out) throw geoctrl::Error(geoctrl::ErrorCode::kIo, "cannot write '" + json_path + "'");
      out << text;
    }
    if (!csv_path.empty()) {
      if (!result.cloud) {
        throw geoctrl::Error(geoctrl::ErrorCode::kSpecFormat, "--csv applies to reach only");
      }
      std::ofstream out(csv_path, std::ios::binary);
      if (!out) throw geoctrl::Error(geoctrl::ErrorCode::kIo, "cannot write '" + csv_path + "'");
      geoctrl::WriteCloudCsv(out, *result.cloud, spec.var_names);
    }
    return result.exit_code;
  } catch (const geoctrl::Error& e) {
    std::cerr << geoctrl::FormatError(e) << "\n";
    return geoctrl::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error[E_INTERNAL]: " << e.what() << "\n";
    return geoctrl::kExitError;
  }
}

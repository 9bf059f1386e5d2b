#include "vaeconv/config.hpp"
#include "vaeconv/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

using namespace vaeconv;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train VAEs and record convergence diagnostics"};
  std::string config_path, out_dir = "out", sweep_spec;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "overrides data.seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--sweep", sweep_spec, "AXIS=v1,v2,... with AXIS in beta, K, activation, BK");
  app.add_flag("--quiet", quiet, "suppress progress output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.data.seed = *seed;
    if (!sweep_spec.empty()) {
      const auto eq = sweep_spec.find('=');
      if (eq == std::string::npos) throw ConfigError("sweep", "expected AXIS=v1,v2,...");
      const std::string axis = sweep_spec.substr(0, eq);
      const auto values = split(sweep_spec.substr(eq + 1), ',');
      const SweepResult r = sweep(cfg, axis, values, out_dir, quiet);
      if (!quiet) {
        for (size_t i = 0; i < r.values.size(); ++i) {
          std::cout << axis << '=' << r.values[i] << " median grad_norm_sq " << r.median_grad_norm_sq[i]
                    << " median elbo_test " << r.median_elbo_test[i] << '\n';
        }
      }
      for (const auto& row : r.rows)
        if (!row.ok) return 1;
      return 0;
    }
    const RunResult r = run(cfg, out_dir, quiet);
    if (r.aborted) {
      std::cerr << "run aborted after iteration " << r.last_good_iter << ": " << r.error << '\n';
      return 1;
    }
    if (!quiet) std::cout << "wrote " << out_dir << "/records.csv and summary.json\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

#pragma once

#include "vaeconv/config.hpp"
#include "vaeconv/data.hpp"
#include "vaeconv/diagnostics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vaeconv {

struct RunResult {
  std::vector<DiagnosticsRecord> records;
  std::optional<RateFit> fit;
  Json summary;
  bool aborted = false;
  long last_good_iter = -1;
  std::string error;
};

DataSource make_source(const RunConfig& cfg);
// Synthetic data for the run; CSV sources are read from disk.
Dataset make_dataset(const RunConfig& cfg);

// Runs one training job. Files are written only when out_dir is nonempty.
RunResult run(const RunConfig& cfg, const std::string& out_dir = {}, bool quiet = true);

std::string records_csv(const std::vector<DiagnosticsRecord>& records);
void write_records(const std::vector<DiagnosticsRecord>& records, const std::string& path);

struct SweepRow {
  std::string axis, value;
  int seed = 0;
  bool ok = false;
  std::string error;
  long final_iter = 0;
  double grad_norm_sq = 0.0;
  double elbo_test = 0.0;
  double random_iterate = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // per value: median final grad_norm_sq and median final elbo_test over successful seeds
  std::vector<std::string> values;
  std::vector<double> median_grad_norm_sq, median_elbo_test;
};

SweepResult sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                  const std::string& out_dir = {}, bool quiet = true);

}  // namespace vaeconv

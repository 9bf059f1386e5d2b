#pragma once

#include "vaeconv/bounds.hpp"
#include "vaeconv/numerics.hpp"

#include <string>
#include <vector>

namespace vaeconv {

enum class SourceKind { LinearGaussianFactor, GaussianMixture, CsvFile };

struct DataSource {
  SourceKind kind = SourceKind::LinearGaussianFactor;
  // LinearGaussianFactor: x = W z + sqrt(noise) e
  int dx = 0, dz = 0;
  Mat64 W;
  double noise = 0.1;
  // GaussianMixture (diagonal components)
  std::vector<double> weights;
  std::vector<Vec64> means, vars;
  // CsvFile
  std::string path;

  int dim() const;
  // Exact for synthetic sources; throws for CSV (use estimate_moments on the loaded data).
  DataMoments moments() const;
};

DataSource linear_gaussian_factor(const Mat64& W, double noise);
// W with i.i.d. N(0, 1/d_z) entries drawn from key.
DataSource random_linear_factor(int dx, int dz, double noise, const RngKey& key);
DataSource gaussian_mixture(std::vector<double> weights, std::vector<Vec64> means, std::vector<Vec64> vars);
DataSource csv_source(std::string path);

using Dataset = Mat64;  // one row per observation

Dataset generate(const DataSource& src, int n, const RngKey& key);
std::vector<int> minibatch_indices(int n, int B, long iteration, const RngKey& key);
std::vector<Vec64> minibatch(const Dataset& ds, int B, long iteration, const RngKey& key);
std::vector<Vec64> rows(const Dataset& ds);
std::vector<Vec64> rows(const Dataset& ds, const std::vector<int>& idx);

struct Split {
  Dataset train, test;
};
// Last `test_frac` of the rows become the held-out split.
Split split_train_test(const Dataset& ds, double test_frac = 0.2);

DataMoments estimate_moments(const Dataset& ds);

void write_csv(const Dataset& ds, const std::string& path);
Dataset read_csv(const std::string& path);
std::string format_double(double v);  // shortest round-trip decimal

}  // namespace vaeconv

#pragma once

#include "vaeconv/models.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace vaeconv {

enum class EstimatorKind { Score, Pathwise, PathwiseSampled, Iwae, Exact };

struct GradEstimate {
  Vec64 flat_theta;
  Vec64 flat_phi;
  std::vector<Vec64> per_sample_terms;  // stacked (theta, phi), row-major over (i, l); empty if not kept
  int B = 0, K = 0;
  EstimatorKind kind = EstimatorKind::Pathwise;
  double objective = 0.0;  // batch-mean objective estimate at the same draws

  Vec64 flat() const;
};

struct EstimatorOptions {
  bool keep_terms = true;
};

// Thread count used by the per-sample loops; results do not depend on it.
void set_num_threads(int n);
int num_threads();
// Runs fn(0..n-1) on the configured threads; the first exception (by index) is rethrown.
void parallel_for(int n, const std::function<void(int)>& fn);

// eps for batch element i, inner sample l. Prefixes are shared across K.
Vec64 noise_for(const RngKey& key, int i, int l, int dz);

enum class TermMode { Analytic, Sampled, Score };

struct SampleTerm {
  double value = 0.0;  // per-sample objective contribution (analytic KL form for Analytic)
  double log_w = 0.0;  // beta-weighted log weight, sampled form
  Vec64 grad;          // stacked (theta, phi)
};

SampleTerm sample_term(const DeepGaussianVae& m, const Objective& obj, const Vec64& x, const Vec64& eps,
                       TermMode mode);

GradEstimate score_grad(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                        const RngKey& key, const EstimatorOptions& opt = {});
GradEstimate pathwise_grad(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                           const RngKey& key, bool sampled = false, const EstimatorOptions& opt = {});
GradEstimate iwae_grad(const DeepGaussianVae& m, const std::vector<Vec64>& batch, int K, const RngKey& key,
                       const EstimatorOptions& opt = {});

// Dispatch by objective: Iwae -> iwae_grad, otherwise the requested estimator.
GradEstimate estimate(const DeepGaussianVae& m, const Objective& obj, EstimatorKind kind,
                      const std::vector<Vec64>& batch, int K, const RngKey& key, const EstimatorOptions& opt = {});

// Exact batch-mean gradient of the Linear VAE (D-space), no sampling.
GradEstimate grad_linear(const LinearVae& m, const std::vector<Vec64>& batch);

struct Snr {
  double theta = 0.0;
  double phi = 0.0;
};
// Coordinatewise |mean|/std, aggregated by l2 norm per block. Zero spread with nonzero mean gives +inf.
Snr snr_measure(const std::vector<GradEstimate>& estimates);

}  // namespace vaeconv

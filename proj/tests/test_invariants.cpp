// Long-running end-to-end properties of the default toy runs.
#include <gtest/gtest.h>

#include <vector>

#include "vaeconv/config.hpp"
#include "vaeconv/diagnostics.hpp"
#include "vaeconv/runner.hpp"

using namespace vaeconv;

// Default deep toy, Adam C = 0.001, 20k iterations: fitted exponent near 1/2.
// Gradient norms are measured against the full training split.
TEST(Invariants, DeepToyRateExponent) {
  const RunConfig base = parse_config(Json::parse(R"({
    "train": {"iterations": 20000},
    "diag": {"eval_every": 200, "grad_ref": "train", "eval_mc": 4}
  })"));
  ASSERT_EQ(base.optim.C_gamma, 0.001);
  std::vector<double> ps;
  for (int s = 0; s < 5; ++s) {
    RunConfig c = base;
    c.data.seed = base.data.seed + static_cast<std::uint64_t>(s);
    const RunResult r = run(c);
    ASSERT_FALSE(r.aborted) << r.error;
    ASSERT_TRUE(r.fit.has_value());
    ps.push_back(r.fit->power_p);
  }
  const double p = median(ps);
  EXPECT_GE(p, 0.3);
  EXPECT_LE(p, 0.7);
}

// IWAE K-sweep: median final test objective does not decrease with K.
TEST(Invariants, IwaeObjectiveNondecreasingInK) {
  const RunConfig base = parse_config(Json::parse(R"({
    "objective": {"kind": "iwae", "K": 1},
    "optim": {"kind": "adam", "C_gamma": 0.01},
    "train": {"iterations": 5000},
    "diag": {"eval_every": 1000, "eval_mc": 400},
    "sweep_seeds": 5
  })"));
  const SweepResult s = sweep(base, "K", {"1", "5", "20"});
  for (const SweepRow& row : s.rows) ASSERT_TRUE(row.ok) << row.error;
  ASSERT_EQ(s.median_elbo_test.size(), 3u);
  EXPECT_LE(s.median_elbo_test[0], s.median_elbo_test[1]);
  EXPECT_LE(s.median_elbo_test[1], s.median_elbo_test[2]);
}

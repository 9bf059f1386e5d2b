#include "test_util.hpp"
#include "vaeconv/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace vaeconv;
using namespace vaeconv::testing;

TEST(Checkpoint, MlpRoundTrip) {
  const DeepGaussianVae m = small_deep(3, 2, {4, 5}, {6}, Activation::celu(1.5), 1, 2.0);
  const MlpParams back = mlp_from_json(Json::parse(to_json(m.decoder).dump()));
  EXPECT_EQ(back.flatten(), m.decoder.flatten());
  EXPECT_EQ(back.depth(), m.decoder.depth());
  EXPECT_EQ(back.a, m.decoder.a);
  const Vec64 z = randn(2, 3);
  EXPECT_EQ(forward(back, z), forward(m.decoder, z));
}

TEST(Checkpoint, DeepRoundTripThroughFile) {
  DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::softplus(), 2);
  m.clamps.C_mu = 3.5;
  m.c2 = 0.25;
  const auto path = (std::filesystem::temp_directory_path() / "vaeconv_ckpt.json").string();
  save_json(to_json(m, Objective::iwae(5)), path);
  const Json j = load_json(path);
  const DeepGaussianVae back = deep_from_json(j);
  EXPECT_EQ(back.flatten(), m.flatten());
  EXPECT_EQ(back.c2, 0.25);
  EXPECT_EQ(back.clamps.C_mu, 3.5);
  const Objective o = objective_from_json(j.at("objective"));
  EXPECT_EQ(o.kind, ObjectiveKind::Iwae);
  EXPECT_EQ(o.K, 5);
  const Vec64 x = randn(3, 4), e = randn(2, 5);
  EXPECT_EQ(log_weight(back, x, e), log_weight(m, x, e));
}

TEST(Checkpoint, LinearRoundTrip) {
  LinearVae m = init_linear(5, 2, 0.8, 0.5, RngKey(3));
  m.log_d << -0.3, 0.2;
  const LinearVae back = linear_from_json(Json::parse(to_json(m).dump()));
  EXPECT_EQ(back.flatten_log(), m.flatten_log());
  EXPECT_EQ(back.c2, m.c2);
  EXPECT_EQ(back.c_d, m.c_d);
}

TEST(Checkpoint, ObjectiveRoundTrip) {
  for (const Objective& o : {Objective::elbo(), Objective::beta_elbo(4.0), Objective::iwae(20)}) {
    const Objective b = objective_from_json(objective_to_json(o));
    EXPECT_EQ(b.kind, o.kind);
    EXPECT_EQ(b.kl_weight(), o.kl_weight());
    EXPECT_EQ(b.K, o.K);
  }
}

TEST(Checkpoint, SeqSerializes) {
  const Ssm s = make_ssm(1, 2, {3}, Activation::tanh(), 5.0, 0.5, 0.5, RngKey(1));
  Clamps cl;
  const BackwardVariational q = init_backward(1, 4, false, {3}, Activation::tanh(), cl, true, RngKey(2));
  const Json j = to_json(s, q);
  EXPECT_TRUE(j.is_object());
  EXPECT_FALSE(j.dump().empty());
}

TEST(Checkpoint, LoadMissingFileThrows) { EXPECT_THROW(load_json("/nonexistent/x.json"), std::exception); }

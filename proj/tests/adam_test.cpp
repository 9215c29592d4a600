#include <gtest/gtest.h>

#include "nbdf/adam.hpp"

namespace nbdf {
namespace {

Architecture tiny() {
  Architecture a;
  a.channels = 1;
  a.bidirectional = false;
  a.hidden1 = 2;
  a.hidden2 = 1;
  a.target = TargetKind::kMrm;
  return a;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = init_params<double>(tiny(), 1);
  const auto before = std::vector<double>(p.values().begin(), p.values().end());
  ModelParameters<double> g(tiny());
  AdamState<double> st(p.size());
  adam_step(p, g, st, {});
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p.values()[i], before[i]);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  auto p = init_params<double>(tiny(), 1);
  const auto before = std::vector<double>(p.values().begin(), p.values().end());
  ModelParameters<double> g(tiny());
  auto gv = g.mutable_values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = (i % 3 == 0 ? -1.0 : 1.0) * 0.01 * (1 + i % 5);
  AdamState<double> st(p.size());
  AdamConfig cfg;
  cfg.clip_norm = 0.0;
  adam_step(p, g, st, cfg);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double sign = gv[i] > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(p.values()[i] - before[i], -cfg.lr * sign, 1e-9);
  }
}

TEST(Adam, MinimizesQuadratic) {
  ModelParameters<double> p(tiny()), g(tiny());
  for (auto& v : p.mutable_values()) v = 1.0;
  AdamState<double> st(p.size());
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int it = 0; it < 100; ++it) {
    auto gv = g.mutable_values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = 2.0 * p.values()[i];
    adam_step(p, g, st, cfg);
  }
  double f = 0.0;
  for (double v : p.values()) f += v * v;
  EXPECT_LT(f / static_cast<double>(p.size()), 1e-3);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  auto p = init_params<double>(tiny(), 1);
  ModelParameters<double> g(tiny());
  g.mutable_values()[g.layout()[g.index_of("dense.weights")].offset] = std::nan("");
  AdamState<double> st(p.size());
  try {
    adam_step(p, g, st, {});
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("dense.weights"), std::string::npos);
  }
}

TEST(Adam, ClippingBoundsTheEffectiveGradient) {
  ModelParameters<double> g(tiny());
  for (auto& v : g.mutable_values()) v = 10.0;
  const double norm = gradient_norm(g);
  EXPECT_NEAR(norm, 10.0 * std::sqrt(static_cast<double>(g.size())), 1e-9);
  // With clipping the first moment after one step is (1 - beta1) * g * clip/norm.
  ModelParameters<double> p(tiny());
  AdamState<double> st(p.size());
  AdamConfig cfg;
  EXPECT_DOUBLE_EQ(adam_step(p, g, st, cfg), norm);
  double m_norm = 0.0;
  for (double v : st.m) m_norm += v * v;
  EXPECT_NEAR(std::sqrt(m_norm), 0.1 * cfg.clip_norm, 1e-12);
}

TEST(Adam, SizeMismatchIsRejected) {
  ModelParameters<double> p(tiny()), g(tiny());
  AdamState<double> st(3);
  EXPECT_THROW(adam_step(p, g, st, {}), std::invalid_argument);
}

}  // namespace
}  // namespace nbdf

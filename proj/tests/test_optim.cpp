#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qnroute/optim.hpp"

using namespace qnroute;

namespace {

Objective quadratic(const Eigen::VectorXd& diag) {
  return {[diag](const ParamVector& w) { return 0.5 * w.dot(diag.cwiseProduct(w)); },
          [diag](const ParamVector& w) -> ParamVector { return diag.cwiseProduct(w); }};
}

// Random pairs that satisfy the curvature condition s^T y > 0.
std::deque<CurvaturePair> random_pairs(int d, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::deque<CurvaturePair> pairs;
  while (static_cast<int>(pairs.size()) < m) {
    ParamVector s(d), y(d);
    for (int i = 0; i < d; ++i) s(i) = n(rng);
    for (int i = 0; i < d; ++i) y(i) = s(i) * (0.5 + std::abs(n(rng))) + 0.1 * n(rng);
    if (s.dot(y) > 1e-3) pairs.push_back({s, y});
  }
  return pairs;
}

}  // namespace

TEST(H0Diagonal, InverseRootOfAccumulator) {
  const ParamVector h = h0_diagonal(Eigen::Vector2d(9.0, 16.0), 0.0);
  EXPECT_DOUBLE_EQ(h(0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(h(1), 0.25);
}

TEST(H0Diagonal, ZeroAccumulatorUsesEpsilon) {
  const ParamVector h = h0_diagonal(ParamVector::Zero(4), 1e-8);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(h(i), 1e4, 1e-8);
}

TEST(H0Diagonal, AccumulatesSquaredGradients) {
  CurvatureMemory mem;
  mem.accumulate(Eigen::Vector2d(1.0, 2.0));
  mem.accumulate(Eigen::Vector2d(2.0, 0.0));
  EXPECT_EQ(mem.grad_sq_accum(), Eigen::Vector2d(5.0, 4.0));
  const ParamVector h = h0_diagonal(mem.grad_sq_accum(), 0.0);
  EXPECT_DOUBLE_EQ(h(0), 1.0 / std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(h(1), 0.5);
}

TEST(TwoLoop, EmptyMemoryWithUnitH0IsNegativeGradient) {
  const ParamVector g = Eigen::Vector3d(1.0, -2.0, 0.5);
  const ParamVector dir = two_loop_direction(g, {}, ParamVector::Ones(3));
  EXPECT_EQ(dir, -g);
}

TEST(TwoLoop, SinglePairMatchesDenseUpdate) {
  std::deque<CurvaturePair> pairs{{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(1.0, 0.0)}};
  const ParamVector g = Eigen::Vector2d(1.0, 1.0);
  const ParamVector h0 = ParamVector::Ones(2);
  const ParamVector got = two_loop_direction(g, pairs, h0);
  const ParamVector want = oracle::dense_bfgs_direction(g, pairs, h0);
  EXPECT_LT(oracle::max_relative_error(got, want), 1e-14);
  // H = diag(1, 1) here, so the direction is simply -g.
  EXPECT_NEAR(got(0), -1.0, 1e-15);
  EXPECT_NEAR(got(1), -1.0, 1e-15);
}

TEST(TwoLoop, RandomPairsMatchDenseOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(0.1, 3.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pairs = random_pairs(8, 5, rng);
    ParamVector h0(8), g(8);
    for (int i = 0; i < 8; ++i) {
      h0(i) = pos(rng);
      g(i) = n(rng);
    }
    EXPECT_LT(oracle::max_relative_error(two_loop_direction(g, pairs, h0), oracle::dense_bfgs_direction(g, pairs, h0)),
              1e-10);
  }
}

TEST(TwoLoop, SkipsZeroCurvaturePairs) {
  std::deque<CurvaturePair> pairs{{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 1.0)}};
  const ParamVector g = Eigen::Vector2d(2.0, 3.0);
  EXPECT_EQ(two_loop_direction(g, pairs, ParamVector::Ones(2)), -g);
}

TEST(CurvatureMemory, FisherProductWithOneEntry) {
  CurvatureMemory mem;
  mem.push_gradient(Eigen::Vector2d(1.0, 0.0));
  EXPECT_EQ(mem.fisher_product(Eigen::Vector2d(2.0, 3.0)), Eigen::Vector2d(2.0, 0.0));
}

TEST(CurvatureMemory, FisherProductMatchesExplicitOuterProducts) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  CurvatureMemory mem(8, 4);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(6, 6);
  std::vector<ParamVector> kept;
  for (int i = 0; i < 7; ++i) {
    ParamVector g(6);
    for (int j = 0; j < 6; ++j) g(j) = n(rng);
    mem.push_gradient(g);
    kept.push_back(g);
  }
  for (int i = 3; i < 7; ++i) sum += kept[i] * kept[i].transpose();
  ParamVector s(6);
  for (int j = 0; j < 6; ++j) s(j) = n(rng);
  EXPECT_EQ(mem.fisher().size(), 4u);
  EXPECT_LT(oracle::max_relative_error(mem.fisher_product(s), sum * s / 4.0), 1e-13);
}

TEST(CurvatureMemory, BuffersEvictOldestFirst) {
  CurvatureMemory mem(2, 3);
  for (int i = 0; i < 4; ++i) {
    mem.push_pair(ParamVector::Constant(1, i), ParamVector::Constant(1, i));
    mem.push_gradient(ParamVector::Constant(1, i));
  }
  ASSERT_EQ(mem.pairs().size(), 2u);
  EXPECT_EQ(mem.pairs().front().s(0), 2.0);
  ASSERT_EQ(mem.fisher().size(), 3u);
  EXPECT_EQ(mem.fisher().front()(0), 1.0);
}

TEST(Asnaq, ConfigValidation) {
  AsnaqConfig c;
  c.mu_min = 0.95;
  EXPECT_THROW(AsnaqOptimizer{c}, ContractError);
  c = {};
  c.phi = 1.0;
  EXPECT_THROW(AsnaqOptimizer{c}, ContractError);
  c = {};
  c.L = 0;
  EXPECT_THROW(AsnaqOptimizer{c}, ContractError);
}

TEST(Asnaq, ZeroMomentumEmptyMemoryIsNormalizedSteepestDescent) {
  AsnaqConfig cfg;
  cfg.alpha = 0.1;
  cfg.L = 1000;
  AsnaqOptimizer opt(cfg);
  const Objective obj{[](const ParamVector&) { return 0.0; },
                      [](const ParamVector&) -> ParamVector { return Eigen::Vector2d(1.0, 0.0); }};
  ParamVector w = Eigen::Vector2d(0.3, -0.2);
  opt.step(w, obj);  // initializes state
  w = Eigen::Vector2d(0.3, -0.2);
  opt.mutable_state().mu = 0.0;
  opt.mutable_state().v.setZero();
  opt.step(w, obj);
  EXPECT_DOUBLE_EQ(w(0), 0.3 - 0.1);
  EXPECT_DOUBLE_EQ(w(1), -0.2);
}

TEST(Asnaq, ReducesToNormalizedGradientDescentOnAlignedGradients) {
  // With mu = 0 and no stored pairs, any positive diagonal H0 keeps a
  // coordinate-aligned gradient's direction, so each step is -alpha * g/|g|.
  AsnaqConfig cfg;
  cfg.alpha = 0.05;
  cfg.L = 100000;
  AsnaqOptimizer opt(cfg);
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> axis(0, 3);
  std::normal_distribution<double> n(0.0, 1.0);
  ParamVector w = ParamVector::Zero(4);
  ParamVector g = ParamVector::Zero(4);
  const Objective obj{[](const ParamVector&) { return 0.0; }, [&g](const ParamVector&) { return g; }};
  for (int k = 0; k < 30; ++k) {
    g.setZero();
    g(axis(rng)) = n(rng);
    opt.mutable_state().mu = 0.0;
    const ParamVector before = w;
    opt.step(w, obj);
    EXPECT_LT(oracle::max_relative_error(w, before - cfg.alpha * g / g.norm()), 1e-15);
  }
}

TEST(Asnaq, DirectionIsUnitNorm) {
  AsnaqOptimizer opt;
  const Objective obj = quadratic(Eigen::Vector3d(1.0, 10.0, 100.0));
  ParamVector w = Eigen::Vector3d(1.0, -1.0, 0.5);
  for (int k = 0; k < 60; ++k) {
    opt.step(w, obj);
    EXPECT_NEAR(opt.last_direction().norm(), 1.0, 1e-12);
  }
}

TEST(Asnaq, ZeroDirectionTakesMomentumStep) {
  AsnaqOptimizer opt;
  const Objective obj{[](const ParamVector&) { return 0.0; },
                      [](const ParamVector& w) -> ParamVector { return ParamVector::Zero(w.size()); }};
  ParamVector w = Eigen::Vector2d(1.0, 1.0);
  opt.step(w, obj);
  opt.mutable_state().v = Eigen::Vector2d(0.5, 0.0);
  const double mu = opt.state().mu;
  opt.step(w, obj);
  EXPECT_DOUBLE_EQ(w(0), 1.0 + mu * 0.5);
  EXPECT_DOUBLE_EQ(w(1), 1.0);
}

TEST(Asnaq, MomentumGrowsAfterAcceptedWindow) {
  AsnaqOptimizer opt;
  const Objective obj = quadratic(Eigen::Vector2d(1.0, 100.0));
  ParamVector w = Eigen::Vector2d(1.0, 1.0);
  const std::size_t L = opt.config().L;
  for (std::size_t k = 0; k < L; ++k) opt.step(w, obj);
  // The first window only sets the anchors.
  EXPECT_EQ(opt.state().t, 1u);
  EXPECT_DOUBLE_EQ(opt.state().mu, opt.config().mu_min);
  const double mu_before = opt.state().mu;
  for (std::size_t k = 0; k < L; ++k) opt.step(w, obj);
  ASSERT_EQ(opt.last_window(), WindowOutcome::accepted);
  EXPECT_DOUBLE_EQ(opt.state().mu, std::min(mu_before * opt.config().phi, opt.config().mu_max));
  EXPECT_GT(opt.state().mu, mu_before);
  EXPECT_EQ(opt.state().t, 2u);
}

TEST(Asnaq, WindowStoresPairOnlyAboveThreshold) {
  AsnaqOptimizer opt;
  ParamVector w = Eigen::Vector2d(0.0, 0.0);
  const Objective flat{[](const ParamVector&) { return 1.0; },
                       [](const ParamVector&) -> ParamVector { return Eigen::Vector2d(1.0, 0.0); }};
  opt.step(w, flat);
  AsnaqState& st = opt.mutable_state();

  // s = [2, 0] against F = {[1, 0]}: y = [2, 0], s^T y = 4 > 1e-4 * 4.
  st.t = 1;
  st.w_o = Eigen::Vector2d(0.0, 0.0);
  st.memory.clear_curvature();
  st.memory.push_gradient(Eigen::Vector2d(1.0, 0.0));
  st.w_s = Eigen::Vector2d(2.0, 0.0) * static_cast<double>(opt.config().L);
  opt.window_update(w, flat);
  ASSERT_EQ(st.memory.pairs().size(), 1u);
  EXPECT_EQ(st.memory.pairs()[0].y, Eigen::Vector2d(2.0, 0.0));

  // s orthogonal to every stored gradient: y = 0 and the pair is rejected.
  st.memory.clear_curvature();
  st.memory.push_gradient(Eigen::Vector2d(1.0, 0.0));
  st.w_o = Eigen::Vector2d(0.0, 0.0);
  st.w_s = Eigen::Vector2d(0.0, 3.0) * static_cast<double>(opt.config().L);
  opt.window_update(w, flat);
  EXPECT_TRUE(st.memory.pairs().empty());
}

TEST(Asnaq, WindowWithEmptyFisherStillMovesAnchors) {
  AsnaqOptimizer opt;
  ParamVector w = Eigen::Vector2d(0.0, 0.0);
  const Objective flat{[](const ParamVector&) { return 1.0; },
                       [](const ParamVector&) -> ParamVector { return Eigen::Vector2d(1.0, 0.0); }};
  opt.step(w, flat);
  AsnaqState& st = opt.mutable_state();
  st.t = 3;
  st.memory.clear_curvature();
  st.w_s = Eigen::Vector2d(1.0, 1.0) * static_cast<double>(opt.config().L);
  EXPECT_EQ(opt.window_update(w, flat), WindowOutcome::accepted);
  EXPECT_TRUE(st.memory.pairs().empty());
  EXPECT_EQ(st.w_o, Eigen::Vector2d(1.0, 1.0));
  EXPECT_EQ(st.t, 4u);
}

TEST(Asnaq, DivergenceResetsToAnchors) {
  AsnaqConfig cfg;
  AsnaqOptimizer opt(cfg);
  bool diverge = false;
  const Objective obj{[&diverge](const ParamVector& w) { return diverge ? 1e6 + w.squaredNorm() : w.squaredNorm(); },
                      [](const ParamVector& w) -> ParamVector { return 2.0 * w; }};
  ParamVector w = Eigen::Vector3d(1.0, -2.0, 0.5);
  for (std::size_t k = 0; k < 3 * cfg.L; ++k) opt.step(w, obj);
  ASSERT_GE(opt.state().t, 2u);
  const ParamVector w_o = opt.state().w_o;
  const ParamVector v_o = opt.state().v_o;
  const double mu = opt.state().mu;
  // The anchor evaluates normally; the window average looks divergent.
  const Objective scripted{[&w_o](const ParamVector& x) { return x == w_o ? 1.0 : 10.0; }, obj.gradient};
  for (std::size_t k = 0; k < cfg.L; ++k) opt.step(w, scripted);
  ASSERT_EQ(opt.last_window(), WindowOutcome::reset);
  EXPECT_TRUE(opt.state().memory.pairs().empty());
  EXPECT_TRUE(opt.state().memory.fisher().empty());
  EXPECT_EQ(std::memcmp(w.data(), w_o.data(), sizeof(double) * 3), 0);
  EXPECT_EQ(std::memcmp(opt.state().v.data(), v_o.data(), sizeof(double) * 3), 0);
  EXPECT_DOUBLE_EQ(opt.state().mu, std::max(mu / cfg.phi, cfg.mu_min));
  EXPECT_GT(opt.state().memory.grad_sq_accum().sum(), 0.0);
}

TEST(Asnaq, NonFiniteGradientForcesReset) {
  AsnaqOptimizer opt;
  const Objective good = quadratic(Eigen::Vector2d(1.0, 4.0));
  ParamVector w = Eigen::Vector2d(1.0, 1.0);
  for (int k = 0; k < 25; ++k) opt.step(w, good);
  const ParamVector w_o = opt.state().w_o;
  const Objective bad{good.loss, [](const ParamVector& x) -> ParamVector {
                        return ParamVector::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
                      }};
  opt.step(w, bad);
  EXPECT_EQ(w, w_o);
  EXPECT_TRUE(opt.state().memory.fisher().empty());
  EXPECT_EQ(opt.last_window(), WindowOutcome::reset);
}

TEST(Asnaq, MomentumStaysInBoundsAndPairsSatisfyCurvature) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  AsnaqConfig cfg;
  AsnaqOptimizer opt(cfg);
  const Eigen::VectorXd diag = (Eigen::VectorXd(5) << 1, 3, 10, 30, 100).finished();
  // Noisy gradients exercise both window branches.
  const Objective noisy{[&](const ParamVector& w) { return 0.5 * w.dot(diag.cwiseProduct(w)) * (1.0 + 0.3 * n(rng)); },
                        [&](const ParamVector& w) -> ParamVector {
                          ParamVector g = diag.cwiseProduct(w);
                          for (int i = 0; i < g.size(); ++i) g(i) += 0.2 * n(rng);
                          return g;
                        }};
  ParamVector w = ParamVector::Ones(5);
  std::size_t seen_pairs = 0;
  for (int k = 0; k < 2000; ++k) {
    opt.step(w, noisy);
    EXPECT_GE(opt.state().mu, cfg.mu_min);
    EXPECT_LE(opt.state().mu, cfg.mu_max);
    const auto& pairs = opt.state().memory.pairs();
    EXPECT_LE(pairs.size(), cfg.m_L);
    EXPECT_LE(opt.state().memory.fisher().size(), cfg.m_F);
    if (opt.last_window() == WindowOutcome::accepted && !pairs.empty() && pairs.size() != seen_pairs) {
      const auto& p = pairs.back();
      EXPECT_GT(p.s.dot(p.y), cfg.sigma * p.y.dot(p.y));
    }
    seen_pairs = pairs.size();
  }
  EXPECT_GT(opt.state().resets, 0u);
}

TEST(Asnaq, LossNonIncreasingOverAcceptedWindowsOnQuadratic) {
  AsnaqOptimizer opt;
  const Eigen::Vector2d diag(1.0, 100.0);
  const Objective obj = quadratic(diag);
  ParamVector w = Eigen::Vector2d(1.0, 1.0);
  std::optional<double> last;
  for (int k = 0; k < 500; ++k) {
    opt.step(w, obj);
    if (opt.last_window() == WindowOutcome::accepted && opt.state().t > 1) {
      const double f = obj.loss(opt.state().w_o);
      if (last) EXPECT_LE(f, opt.config().eta * *last);
      last = f;
    }
  }
}

TEST(Adam, FirstStepMatchesPublishedFormula) {
  AdamOptimizer adam;
  ParamVector w = ParamVector::Zero(1);
  adam.apply(w, ParamVector::Ones(1));
  // m_hat = 1, v_hat = 1: step = -1e-3 * 1 / (1 + 1e-8).
  EXPECT_DOUBLE_EQ(w(0), -1e-3 / (1.0 + 1e-8));
}

TEST(Adam, ZeroGradientNoUpdate) {
  AdamOptimizer adam;
  ParamVector w = Eigen::Vector2d(0.5, -0.5);
  adam.apply(w, ParamVector::Zero(2));
  EXPECT_EQ(w, Eigen::Vector2d(0.5, -0.5));
}

TEST(Adam, NonFiniteGradientIsError) {
  AdamOptimizer adam;
  ParamVector w = ParamVector::Zero(1);
  EXPECT_THROW(adam.apply(w, ParamVector::Constant(1, std::numeric_limits<double>::infinity())), NumericError);
}

TEST(Rmsprop, ConstantGradientApproachesUnitScaledStep) {
  // v_k = (1 - 0.9^k) c^2, so the step is alpha / sqrt(1 - 0.9^k) -> alpha, from above.
  RmspropOptimizer rms;
  ParamVector w = ParamVector::Zero(1);
  const double c = 2.5;
  double prev_step = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 200; ++k) {
    const double before = w(0);
    rms.apply(w, ParamVector::Constant(1, c));
    const double step = before - w(0);
    const double expected = 1e-3 * c / (std::sqrt((1.0 - std::pow(0.9, k)) * c * c) + 1e-8);
    EXPECT_NEAR(step, expected, 1e-15);
    EXPECT_LE(step, prev_step);
    prev_step = step;
  }
  EXPECT_NEAR(prev_step, 1e-3, 1e-9);
}

TEST(Rmsprop, ZeroGradientNoUpdate) {
  RmspropOptimizer rms;
  ParamVector w = Eigen::Vector2d(0.5, -0.5);
  rms.apply(w, ParamVector::Zero(2));
  EXPECT_EQ(w, Eigen::Vector2d(0.5, -0.5));
}

TEST(Rmsprop, NonFiniteGradientIsError) {
  RmspropOptimizer rms;
  ParamVector w = ParamVector::Zero(1);
  EXPECT_THROW(rms.apply(w, ParamVector::Constant(1, std::numeric_limits<double>::quiet_NaN())), NumericError);
}

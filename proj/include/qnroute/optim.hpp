#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "qnroute/nn.hpp"

namespace qnroute {

// Loss and gradient of one minibatch. Both callbacks must see the same data
// for the duration of a single optimizer step.
struct Objective {
  std::function<double(const ParamVector&)> loss;
  std::function<ParamVector(const ParamVector&)> gradient;
};

class Optimizer {
public:
  virtual ~Optimizer() = default;
  virtual std::string_view name() const = 0;
  virtual void step(ParamVector& w, const Objective& objective) = 0;
};

inline bool all_finite(const ParamVector& v) { return v.allFinite(); }

// ---------------------------------------------------------------------------
// aSNAQ

struct AsnaqConfig {
  double alpha = 0.01;
  double mu_min = 0.1;
  double mu_max = 0.9;
  double phi = 1.05;
  std::size_t L = 10;
  std::size_t m_L = 8;
  std::size_t m_F = 10;
  double sigma = 1e-4;
  double eta = 1.1;
  double epsilon_h0 = 1e-8;

  void validate() const {
    if (!(alpha > 0.0)) throw ContractError("optimizer.alpha must be positive");
    if (!(mu_min > 0.0 && mu_min <= mu_max && mu_max < 1.0))
      throw ContractError("momentum bounds need 0 < mu_min <= mu_max < 1");
    if (!(phi > 1.0)) throw ContractError("optimizer.phi must exceed 1");
    if (L < 1 || m_L < 1 || m_F < 1) throw ContractError("optimizer.L, m_L and m_F must be at least 1");
    if (!(sigma > 0.0)) throw ContractError("optimizer.sigma must be positive");
    if (!(eta >= 1.0)) throw ContractError("optimizer.eta must be at least 1");
    if (!(epsilon_h0 >= 0.0)) throw ContractError("epsilon_h0 must be nonnegative");
  }
};

struct CurvaturePair {
  ParamVector s;
  ParamVector y;
};

class CurvatureMemory {
public:
  CurvatureMemory(std::size_t m_L = 8, std::size_t m_F = 10) : m_L_(m_L), m_F_(m_F) {}

  const std::deque<CurvaturePair>& pairs() const { return pairs_; }
  const std::deque<ParamVector>& fisher() const { return fisher_; }
  const ParamVector& grad_sq_accum() const { return grad_sq_; }

  // Oldest first. Accepts pairs without the curvature test; callers gate on it.
  void push_pair(ParamVector s, ParamVector y) {
    pairs_.push_back({std::move(s), std::move(y)});
    while (pairs_.size() > m_L_) pairs_.pop_front();
  }

  void push_gradient(ParamVector g) {
    fisher_.push_back(std::move(g));
    while (fisher_.size() > m_F_) fisher_.pop_front();
  }

  void accumulate(const ParamVector& g) {
    if (grad_sq_.size() == 0) grad_sq_ = ParamVector::Zero(g.size());
    grad_sq_.array() += g.array().square();
  }

  // Curvature image of s under the mean of the stored outer products g g^T,
  // computed as (1/|F|) sum g (g^T s).
  ParamVector fisher_product(const ParamVector& s) const {
    ParamVector y = ParamVector::Zero(s.size());
    if (fisher_.empty()) return y;
    for (const auto& g : fisher_) y.noalias() += g * g.dot(s);
    return y / static_cast<double>(fisher_.size());
  }

  // The squared-gradient accumulator is kept.
  void clear_curvature() {
    pairs_.clear();
    fisher_.clear();
  }

  void set_grad_sq_accum(ParamVector acc) { grad_sq_ = std::move(acc); }

private:
  std::size_t m_L_;
  std::size_t m_F_;
  std::deque<CurvaturePair> pairs_;
  std::deque<ParamVector> fisher_;
  ParamVector grad_sq_;
};

// Diagonal initial inverse Hessian: 1 / sqrt(sum_j g_j^2 + eps).
inline ParamVector h0_diagonal(const ParamVector& grad_sq_accum, double epsilon) {
  return (grad_sq_accum.array() + epsilon).sqrt().inverse().matrix();
}

// L-BFGS two-loop recursion. Returns -H grad, where H is built from the
// stored pairs (oldest to newest) on top of diag(h0).
inline ParamVector two_loop_direction(const ParamVector& grad, const std::deque<CurvaturePair>& pairs,
                                      const ParamVector& h0) {
  const std::size_t m = pairs.size();
  std::vector<double> alpha(m, 0.0), rho(m, 0.0);
  ParamVector q = grad;
  for (std::size_t i = m; i-- > 0;) {
    const double sy = pairs[i].s.dot(pairs[i].y);
    if (sy == 0.0) continue;
    rho[i] = 1.0 / sy;
    alpha[i] = rho[i] * pairs[i].s.dot(q);
    q.noalias() -= alpha[i] * pairs[i].y;
  }
  ParamVector r = h0.cwiseProduct(q);
  for (std::size_t i = 0; i < m; ++i) {
    if (rho[i] == 0.0) continue;
    const double beta = rho[i] * pairs[i].y.dot(r);
    r.noalias() += (alpha[i] - beta) * pairs[i].s;
  }
  return -r;
}

inline ParamVector two_loop_direction(const ParamVector& grad, const CurvatureMemory& memory, double epsilon) {
  ParamVector acc = memory.grad_sq_accum().size() == grad.size() ? memory.grad_sq_accum()
                                                                  : ParamVector::Zero(grad.size());
  return two_loop_direction(grad, memory.pairs(), h0_diagonal(acc, epsilon));
}

struct AsnaqState {
  ParamVector v;
  ParamVector w_o, v_o;
  ParamVector w_s, v_s;
  double mu = 0.0;
  std::size_t t = 0;
  std::size_t k = 0;
  std::size_t window_steps = 0;
  std::size_t resets = 0;
  bool initialized = false;
  CurvatureMemory memory;
};

enum class WindowOutcome { accepted, reset };

class AsnaqOptimizer final : public Optimizer {
public:
  explicit AsnaqOptimizer(AsnaqConfig config = {}) : config_(config) {
    config_.validate();
    state_.memory = CurvatureMemory(config_.m_L, config_.m_F);
    state_.mu = config_.mu_min;
  }

  std::string_view name() const override { return "asnaq"; }
  const AsnaqConfig& config() const { return config_; }
  const AsnaqState& state() const { return state_; }
  AsnaqState& mutable_state() { return state_; }

  // Direction used by the most recent step, after normalization.
  const ParamVector& last_direction() const { return last_direction_; }
  // Outcome of the most recent window boundary, if the last step hit one.
  std::optional<WindowOutcome> last_window() const { return last_window_; }

  void step(ParamVector& w, const Objective& objective) override {
    ensure_initialized(w);
    last_window_.reset();
    ++state_.k;
    ++state_.window_steps;

    const ParamVector lookahead = w + state_.mu * state_.v;
    ParamVector g_nesterov = objective.gradient(lookahead);
    if (!all_finite(g_nesterov)) {
      reset_to_anchor(w);
      return;
    }
    state_.memory.accumulate(g_nesterov);

    ParamVector g = two_loop_direction(g_nesterov, state_.memory, config_.epsilon_h0);
    const double norm = g.norm();
    if (!std::isfinite(norm)) {
      reset_to_anchor(w);
      return;
    }
    if (norm > 0.0) g /= norm;
    last_direction_ = g;

    const ParamVector w_old = w;
    const ParamVector v_old = state_.v;
    state_.v = state_.mu * state_.v + config_.alpha * g;
    w += state_.v;

    ParamVector g_new = objective.gradient(w);
    if (!all_finite(g_new)) {
      reset_to_anchor(w);
      return;
    }
    state_.memory.push_gradient(std::move(g_new));

    state_.w_s += w_old;
    state_.v_s += v_old;

    if (state_.window_steps == config_.L) last_window_ = window_update(w, objective);
  }

  // Runs at the end of every window of L steps.
  WindowOutcome window_update(ParamVector& w, const Objective& objective) {
    const double inv_l = 1.0 / static_cast<double>(config_.L);
    ParamVector w_n = state_.w_s * inv_l;
    ParamVector v_n = state_.v_s * inv_l;
    state_.w_s.setZero();
    state_.v_s.setZero();
    state_.window_steps = 0;

    if (state_.t > 0) {
      const double loss_n = objective.loss(w_n);
      const double loss_o = objective.loss(state_.w_o);
      if (!std::isfinite(loss_n) || !std::isfinite(loss_o) || loss_n > config_.eta * loss_o) {
        reset_to_anchor(w);
        return WindowOutcome::reset;
      }
      state_.mu = std::min(state_.mu * config_.phi, config_.mu_max);
      if (!state_.memory.fisher().empty()) {
        ParamVector s = w_n - state_.w_o;
        ParamVector y = state_.memory.fisher_product(s);
        if (s.dot(y) > config_.sigma * y.dot(y)) state_.memory.push_pair(std::move(s), std::move(y));
      }
    }
    state_.w_o = std::move(w_n);
    state_.v_o = std::move(v_n);
    ++state_.t;
    return WindowOutcome::accepted;
  }

private:
  void ensure_initialized(const ParamVector& w) {
    if (state_.initialized) {
      if (state_.v.size() != w.size()) throw ContractError("aSNAQ: parameter dimension changed between steps");
      return;
    }
    const auto d = w.size();
    state_.v = ParamVector::Zero(d);
    state_.w_o = w;
    state_.v_o = ParamVector::Zero(d);
    state_.w_s = ParamVector::Zero(d);
    state_.v_s = ParamVector::Zero(d);
    state_.memory.set_grad_sq_accum(ParamVector::Zero(d));
    state_.initialized = true;
  }

  // Divergence branch: drop curvature, return to the anchors, back off momentum.
  void reset_to_anchor(ParamVector& w) {
    state_.memory.clear_curvature();
    w = state_.w_o;
    state_.v = state_.v_o;
    state_.mu = std::max(state_.mu / config_.phi, config_.mu_min);
    state_.w_s.setZero();
    state_.v_s.setZero();
    state_.window_steps = 0;
    ++state_.resets;
    last_window_ = WindowOutcome::reset;
  }

  AsnaqConfig config_;
  AsnaqState state_;
  ParamVector last_direction_;
  std::optional<WindowOutcome> last_window_;
};

// ---------------------------------------------------------------------------
// First-order baselines

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer final : public Optimizer {
public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  std::string_view name() const override { return "adam"; }

  void step(ParamVector& w, const Objective& objective) override { apply(w, objective.gradient(w)); }

  void apply(ParamVector& w, const ParamVector& grad) {
    if (!all_finite(grad)) throw NumericError("adam: non-finite gradient");
    if (m_.size() != w.size()) {
      m_ = ParamVector::Zero(w.size());
      v_ = ParamVector::Zero(w.size());
      t_ = 0;
    }
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    w.array() -= config_.alpha * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
  }

private:
  AdamConfig config_;
  ParamVector m_, v_;
  long t_ = 0;
};

struct RmspropConfig {
  double alpha = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
};

class RmspropOptimizer final : public Optimizer {
public:
  explicit RmspropOptimizer(RmspropConfig config = {}) : config_(config) {}

  std::string_view name() const override { return "rmsprop"; }

  void step(ParamVector& w, const Objective& objective) override { apply(w, objective.gradient(w)); }

  void apply(ParamVector& w, const ParamVector& grad) {
    if (!all_finite(grad)) throw NumericError("rmsprop: non-finite gradient");
    if (sq_.size() != w.size()) sq_ = ParamVector::Zero(w.size());
    sq_ = config_.rho * sq_ + (1.0 - config_.rho) * grad.cwiseAbs2();
    w.array() -= config_.alpha * grad.array() / (sq_.array().sqrt() + config_.epsilon);
  }

private:
  RmspropConfig config_;
  ParamVector sq_;
};

}  // namespace qnroute

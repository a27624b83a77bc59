#pragma once

// Double DQN agent: replay memory, epsilon-greedy policy, decoupled targets
// and soft (Polyak) target-network tracking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "qnroute/nn.hpp"
#include "qnroute/optim.hpp"

namespace qnroute {

struct Transition {
  Eigen::VectorXd s;
  int a = 0;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool terminal = false;
  int a_next = -1;  // recorded for completeness; never used by the target
};

class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity = 50000) : capacity_(capacity) {
    if (capacity_ == 0) throw ContractError("replay capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity_, 4096));
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  // i = 0 is the oldest transition still held.
  const Transition& at(std::size_t i) const { return storage_[(head_ + i) % storage_.size()]; }

  // Uniform with replacement.
  template <class Rng>
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    if (storage_.empty()) throw ContractError("cannot sample an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&storage_[pick(rng)]);
    return out;
  }

private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> storage_;
};

struct AgentConfig {
  double gamma = 0.9;
  double tau = 0.05;
  std::size_t batch_size = 32;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay = 0.95;
  std::size_t replay_capacity = 50000;
  std::size_t min_replay = 0;  // 0 means batch_size
  std::uint64_t seed = 1;

  std::size_t min_fill() const { return min_replay == 0 ? batch_size : min_replay; }

  // episode is 0-based.
  double epsilon(std::size_t episode) const {
    return std::max(epsilon_end, epsilon_start * std::pow(epsilon_decay, static_cast<double>(episode)));
  }

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("agent.gamma must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("agent.tau must lie in (0, 1]");
    if (batch_size < 1) throw ContractError("agent.batch_size must be at least 1");
    if (!(epsilon_end >= 0.0 && epsilon_start <= 1.0 && epsilon_end <= epsilon_start))
      throw ContractError("epsilon schedule must satisfy 0 <= end <= start <= 1");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw ContractError("agent.epsilon_decay must lie in (0, 1]");
  }
};

// Ties resolve to the lowest index.
inline int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q) {
  int best = 0;
  for (int a = 1; a < q.size(); ++a)
    if (q(a) > q(best)) best = a;
  return best;
}

template <class Rng>
int select_action(const DenseNetwork& net, const ParamVector& params, const Eigen::VectorXd& state, double epsilon,
                  Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> any(0, net.spec().output_dim() - 1);
    return any(rng);
  }
  const Eigen::VectorXd q = net.forward_one(params, state);
  if (!q.allFinite()) throw NumericError("Q-network produced non-finite action values");
  return greedy_action(q);
}

// y = r                                      if terminal
// y = r + gamma * Q_target(s', argmax Q_primary(s', .))   otherwise
inline Minibatch compute_targets(const DenseNetwork& net, std::span<const Transition* const> batch,
                                 const ParamVector& primary, const ParamVector& target, double gamma) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int in = net.spec().input_dim();
  Minibatch mb;
  mb.states.resize(n, in);
  mb.actions.resize(batch.size());
  mb.targets.resize(n);
  RowMatrix next(n, in);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    mb.states.row(i) = t.s.transpose();
    next.row(i) = t.s_next.transpose();
    mb.actions[static_cast<std::size_t>(i)] = t.a;
  }
  const RowMatrix q_primary = net.forward(primary, next);
  const RowMatrix q_target = net.forward(target, next);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    if (t.terminal) {
      mb.targets(i) = t.r;
    } else {
      const int a_star = greedy_action(q_primary.row(i).transpose());
      mb.targets(i) = t.r + gamma * q_target(i, a_star);
    }
  }
  return mb;
}

inline void polyak_update(ParamVector& target, const ParamVector& primary, double tau) {
  if (target.size() != primary.size()) throw ContractError("polyak_update: parameter lengths differ");
  target = tau * primary + (1.0 - tau) * target;
}

// The trainer never lets NumericError cross the optimizer boundary: aSNAQ
// treats non-finite values as its divergence signal, and the first-order
// methods raise on them.
inline Objective make_objective(const DenseNetwork& net, std::shared_ptr<const Minibatch> batch) {
  Objective obj;
  obj.loss = [&net, batch](const ParamVector& w) {
    try {
      return net.loss(w, *batch);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  obj.gradient = [&net, batch](const ParamVector& w) -> ParamVector {
    try {
      return net.gradient(w, *batch);
    } catch (const NumericError&) {
      return ParamVector::Constant(w.size(), std::numeric_limits<double>::quiet_NaN());
    }
  };
  return obj;
}

class DqnAgent {
public:
  DqnAgent(NetworkSpec spec, AgentConfig config, std::unique_ptr<Optimizer> optimizer)
      : net_(std::move(spec)), config_(config), optimizer_(std::move(optimizer)), replay_(config.replay_capacity),
        rng_(config.seed) {
    config_.validate();
    if (!optimizer_) throw ContractError("agent needs an optimizer");
    primary_ = net_.init_params(rng_);
    target_ = primary_;
  }

  const DenseNetwork& network() const { return net_; }
  const AgentConfig& config() const { return config_; }
  const ParamVector& primary() const { return primary_; }
  const ParamVector& target() const { return target_; }
  ParamVector& mutable_primary() { return primary_; }
  ParamVector& mutable_target() { return target_; }
  const ReplayBuffer& replay() const { return replay_; }
  Optimizer& optimizer() { return *optimizer_; }

  int act(const Eigen::VectorXd& state, double epsilon) {
    return select_action(net_, primary_, state, epsilon, rng_);
  }

  void remember(Transition t) { replay_.push(std::move(t)); }

  // Returns the minibatch loss before the update, or nothing while the
  // replay buffer is below its minimum fill.
  std::optional<double> train_step() {
    if (replay_.size() < config_.min_fill()) return std::nullopt;
    const auto sampled = replay_.sample(config_.batch_size, rng_);
    auto batch = std::make_shared<const Minibatch>(
        compute_targets(net_, sampled, primary_, target_, config_.gamma));
    const Objective objective = make_objective(net_, batch);
    const double before = objective.loss(primary_);
    optimizer_->step(primary_, objective);
    if (!primary_.allFinite()) throw NumericError(std::string(optimizer_->name()) + " produced non-finite parameters");
    polyak_update(target_, primary_, config_.tau);
    return before;
  }

private:
  DenseNetwork net_;
  AgentConfig config_;
  std::unique_ptr<Optimizer> optimizer_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  ParamVector primary_;
  ParamVector target_;
};

}  // namespace qnroute

#pragma once

// Dense feed-forward Q-network: ReLU hidden layers, linear output layer.
// Parameters live in one flat vector so optimizers never see the layer
// structure. Canonical flat order is layer-major; inside a layer the weight
// matrix (out x in) is stored row-major and is followed by its bias.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qnroute {

using ParamVector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct NetworkSpec {
  std::vector<int> layer_sizes;

  static NetworkSpec routing_default() { return {{12, 32, 64, 32, 6}}; }

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t d = 0;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
      d += static_cast<std::size_t>(layer_sizes[i] + 1) * static_cast<std::size_t>(layer_sizes[i + 1]);
    return d;
  }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw ContractError("network needs at least an input and an output layer");
    for (int n : layer_sizes)
      if (n <= 0) throw ContractError("layer sizes must be positive");
  }
};

struct LayerParams {
  RowMatrix weights;  // out x in
  Eigen::VectorXd bias;
};

// Selected-action regression batch: loss = mean_b (target_b - Q(s_b, action_b))^2.
struct Minibatch {
  RowMatrix states;  // B x input_dim
  std::vector<int> actions;
  Eigen::VectorXd targets;

  Eigen::Index size() const { return states.rows(); }
};

class DenseNetwork {
public:
  explicit DenseNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    offsets_.reserve(spec_.layer_count() + 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(spec_.layer_sizes[l] + 1) * static_cast<std::size_t>(spec_.layer_sizes[l + 1]);
    }
    offsets_.push_back(off);
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t param_count() const { return offsets_.back(); }

  std::vector<LayerParams> unflatten(const ParamVector& params) const {
    check_params(params);
    std::vector<LayerParams> layers;
    layers.reserve(spec_.layer_count());
    for (std::size_t l = 0; l < spec_.layer_count(); ++l)
      layers.push_back({weights(params, l), bias(params, l)});
    return layers;
  }

  ParamVector flatten(const std::vector<LayerParams>& layers) const {
    if (layers.size() != spec_.layer_count())
      throw ContractError("flatten: layer count mismatch");
    ParamVector out(static_cast<Eigen::Index>(param_count()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto [in, o] = dims(l);
      if (layers[l].weights.rows() != o || layers[l].weights.cols() != in || layers[l].bias.size() != o)
        throw ContractError("flatten: layer " + std::to_string(l) + " has wrong shape");
      weights_mut(out, l) = layers[l].weights;
      bias_mut(out, l) = layers[l].bias;
    }
    return out;
  }

  // He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases.
  template <class Rng>
  ParamVector init_params(Rng& rng) const {
    ParamVector out = ParamVector::Zero(static_cast<Eigen::Index>(param_count()));
    for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
      const auto [in, o] = dims(l);
      const double limit = std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto w = weights_mut(out, l);
      for (Eigen::Index r = 0; r < o; ++r)
        for (Eigen::Index c = 0; c < in; ++c) w(r, c) = u(rng);
    }
    return out;
  }

  RowMatrix forward(const ParamVector& params, const RowMatrix& states) const {
    check_params(params);
    check_states(states);
    RowMatrix a = states;
    for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
      RowMatrix z = a * weights(params, l).transpose();
      z.rowwise() += bias(params, l).transpose();
      if (l + 1 < spec_.layer_count()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  Eigen::VectorXd forward_one(const ParamVector& params, const Eigen::VectorXd& state) const {
    return forward(params, state.transpose()).row(0).transpose();
  }

  double loss(const ParamVector& params, const Minibatch& batch) const {
    check_batch(batch);
    const RowMatrix q = forward(params, batch.states);
    const Eigen::VectorXd r = residuals(q, batch);
    const double value = r.squaredNorm() / static_cast<double>(batch.size());
    if (!std::isfinite(value)) throw NumericError("loss is not finite");
    return value;
  }

  ParamVector gradient(const ParamVector& params, const Minibatch& batch) const {
    return loss_and_gradient(params, batch).second;
  }

  std::pair<double, ParamVector> loss_and_gradient(const ParamVector& params, const Minibatch& batch) const {
    check_params(params);
    check_states(batch.states);
    check_batch(batch);
    const std::size_t n_layers = spec_.layer_count();
    const auto B = static_cast<double>(batch.size());

    // acts[0] is the input; acts[l + 1] is the output of layer l.
    std::vector<RowMatrix> acts;
    acts.reserve(n_layers + 1);
    acts.push_back(batch.states);
    for (std::size_t l = 0; l < n_layers; ++l) {
      RowMatrix z = acts.back() * weights(params, l).transpose();
      z.rowwise() += bias(params, l).transpose();
      if (l + 1 < n_layers) z = z.cwiseMax(0.0);
      acts.push_back(std::move(z));
    }

    const Eigen::VectorXd r = residuals(acts.back(), batch);
    const double value = r.squaredNorm() / B;
    if (!std::isfinite(value)) throw NumericError("loss is not finite");

    // d loss / d Q(s_b, a) is nonzero only at the selected action.
    RowMatrix delta = RowMatrix::Zero(batch.size(), spec_.output_dim());
    for (Eigen::Index b = 0; b < batch.size(); ++b)
      delta(b, batch.actions[static_cast<std::size_t>(b)]) = -2.0 * r(b) / B;

    ParamVector grad(static_cast<Eigen::Index>(param_count()));
    for (std::size_t l = n_layers; l-- > 0;) {
      weights_mut(grad, l) = delta.transpose() * acts[l];
      bias_mut(grad, l) = delta.colwise().sum().transpose();
      if (l > 0) {
        RowMatrix prev = delta * weights(params, l);
        // ReLU derivative, taken as 0 at 0.
        prev.array() *= (acts[l].array() > 0.0).cast<double>();
        delta = std::move(prev);
      }
    }
    if (!grad.allFinite()) throw NumericError("gradient is not finite");
    return {value, std::move(grad)};
  }

private:
  using ConstRowMap = Eigen::Map<const RowMatrix>;
  using RowMap = Eigen::Map<RowMatrix>;

  std::pair<Eigen::Index, Eigen::Index> dims(std::size_t l) const {
    return {spec_.layer_sizes[l], spec_.layer_sizes[l + 1]};
  }

  ConstRowMap weights(const ParamVector& p, std::size_t l) const {
    const auto [in, o] = dims(l);
    return ConstRowMap(p.data() + offsets_[l], o, in);
  }
  Eigen::Map<const Eigen::VectorXd> bias(const ParamVector& p, std::size_t l) const {
    const auto [in, o] = dims(l);
    return Eigen::Map<const Eigen::VectorXd>(p.data() + offsets_[l] + in * o, o);
  }
  RowMap weights_mut(ParamVector& p, std::size_t l) const {
    const auto [in, o] = dims(l);
    return RowMap(p.data() + offsets_[l], o, in);
  }
  Eigen::Map<Eigen::VectorXd> bias_mut(ParamVector& p, std::size_t l) const {
    const auto [in, o] = dims(l);
    return Eigen::Map<Eigen::VectorXd>(p.data() + offsets_[l] + in * o, o);
  }

  Eigen::VectorXd residuals(const RowMatrix& q, const Minibatch& batch) const {
    Eigen::VectorXd r(batch.size());
    for (Eigen::Index b = 0; b < batch.size(); ++b)
      r(b) = batch.targets(b) - q(b, batch.actions[static_cast<std::size_t>(b)]);
    return r;
  }

  void check_params(const ParamVector& p) const {
    if (static_cast<std::size_t>(p.size()) != param_count())
      throw ContractError("parameter vector has length " + std::to_string(p.size()) + ", network expects " +
                          std::to_string(param_count()));
  }
  void check_states(const RowMatrix& s) const {
    if (s.cols() != spec_.input_dim())
      throw ContractError("state width " + std::to_string(s.cols()) + " does not match input layer " +
                          std::to_string(spec_.input_dim()));
  }
  void check_batch(const Minibatch& batch) const {
    if (batch.size() < 1) throw ContractError("minibatch is empty");
    if (static_cast<Eigen::Index>(batch.actions.size()) != batch.size() || batch.targets.size() != batch.size())
      throw ContractError("minibatch fields have different lengths");
    for (int a : batch.actions)
      if (a < 0 || a >= spec_.output_dim()) throw ContractError("minibatch action out of range");
  }

  NetworkSpec spec_;
  std::vector<std::size_t> offsets_;
};

}  // namespace qnroute

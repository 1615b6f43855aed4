#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "adaptq/dqn.hpp"
#include "adaptq/errors.hpp"
#include "adaptq/serialization.hpp"

namespace adaptq {

QNetwork::QNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw InvalidParams("a Q-network needs at least an input and an output layer");
  for (std::size_t s : sizes_)
    if (s == 0) throw InvalidParams("layer widths must be positive");
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    DenseLayer layer;
    layer.inputs = sizes_[k];
    layer.outputs = sizes_[k + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
    std::uniform_real_distribution<double> u(-bound, bound);
    layer.weights.resize(layer.inputs * layer.outputs);
    layer.biases.resize(layer.outputs);
    for (auto& w : layer.weights) w = u(rng);
    for (auto& b : layer.biases) b = u(rng);
    layers_.push_back(std::move(layer));
  }
}

QNetwork make_q_network(std::size_t feature_dim, std::size_t num_actions, std::uint64_t seed) {
  return QNetwork({feature_dim, 128, 64, num_actions}, seed);
}

namespace {

// Activations of every layer for one input; acts[0] is the input itself and
// hidden entries are post-ReLU.
void forward_all(const QNetwork& net, std::span<const float> state, std::vector<std::vector<double>>& acts) {
  if (state.size() != net.input_dim())
    throw ContractViolation(fmt::format("state has {} features, network expects {}", state.size(), net.input_dim()));
  const auto& layers = net.layers();
  acts.resize(layers.size() + 1);
  acts[0].assign(state.begin(), state.end());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& L = layers[k];
    const auto& in = acts[k];
    auto& out = acts[k + 1];
    out.assign(L.biases.begin(), L.biases.end());
    for (std::size_t o = 0; o < L.outputs; ++o) {
      const double* w = L.weights.data() + o * L.inputs;
      double s = 0.0;
      for (std::size_t i = 0; i < L.inputs; ++i) s += w[i] * in[i];
      out[o] += s;
    }
    if (k + 1 < layers.size())
      for (auto& v : out) v = std::max(v, 0.0);
  }
}

}  // namespace

std::vector<double> QNetwork::forward(std::span<const float> state) const {
  std::vector<std::vector<double>> acts;
  forward_all(*this, state, acts);
  return std::move(acts.back());
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weights.size() + L.biases.size();
  return n;
}

std::vector<double> QNetwork::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& L : layers_) {
    p.insert(p.end(), L.weights.begin(), L.weights.end());
    p.insert(p.end(), L.biases.begin(), L.biases.end());
  }
  return p;
}

void QNetwork::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count())
    throw ContractViolation(fmt::format("{} parameters given, network has {}", params.size(), parameter_count()));
  std::size_t off = 0;
  for (auto& L : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), L.weights.size(), L.weights.begin());
    off += L.weights.size();
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), L.biases.size(), L.biases.begin());
    off += L.biases.size();
  }
}

double huber_loss(double x, double delta) {
  const double a = std::abs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

double huber_derivative(double x, double delta) { return std::clamp(x, -delta, delta); }

double huber_objective(const QNetwork& net, std::span<const ExperienceTuple* const> batch,
                       std::span<const double> targets, std::vector<double>* gradient) {
  if (batch.empty()) throw ContractViolation("empty training batch");
  if (targets.size() != batch.size()) throw ContractViolation("one target per batch entry required");
  const auto& layers = net.layers();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  // Per-layer offsets into the flat gradient.
  std::vector<std::size_t> w_off(layers.size()), b_off(layers.size());
  std::size_t off = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    w_off[k] = off;
    off += layers[k].weights.size();
    b_off[k] = off;
    off += layers[k].biases.size();
  }
  if (gradient) gradient->assign(off, 0.0);

  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta;
  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& exp = *batch[n];
    if (exp.action >= net.num_actions())
      throw ContractViolation(fmt::format("action {} >= {} actions", exp.action, net.num_actions()));
    forward_all(net, exp.state, acts);
    const double err = acts.back()[exp.action] - targets[n];
    loss += huber_loss(err);
    if (!gradient) continue;

    delta.assign(net.num_actions(), 0.0);
    delta[exp.action] = huber_derivative(err) * inv_n;
    for (std::size_t k = layers.size(); k-- > 0;) {
      const auto& L = layers[k];
      const auto& in = acts[k];
      double* gw = gradient->data() + w_off[k];
      double* gb = gradient->data() + b_off[k];
      for (std::size_t o = 0; o < L.outputs; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* row = gw + o * L.inputs;
        for (std::size_t i = 0; i < L.inputs; ++i) row[i] += d * in[i];
      }
      if (k == 0) break;
      prev_delta.assign(L.inputs, 0.0);
      for (std::size_t o = 0; o < L.outputs; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = L.weights.data() + o * L.inputs;
        for (std::size_t i = 0; i < L.inputs; ++i) prev_delta[i] += d * w[i];
      }
      // ReLU gate of the layer below.
      for (std::size_t i = 0; i < L.inputs; ++i)
        if (in[i] <= 0.0) prev_delta[i] = 0.0;
      std::swap(delta, prev_delta);
    }
  }
  return loss * inv_n;
}

std::vector<double> td_targets(const QNetwork& target_net, std::span<const ExperienceTuple* const> batch,
                               double gamma) {
  std::vector<double> y(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& exp = *batch[n];
    y[n] = exp.reward;
    if (!exp.terminal) {
      const auto q = target_net.forward(exp.next_state);
      y[n] += gamma * *std::max_element(q.begin(), q.end());
    }
  }
  return y;
}

void AdamOptimizer::step(QNetwork& net, std::span<const double> gradient) {
  auto params = net.parameters();
  if (gradient.size() != params.size()) throw ContractViolation("gradient size does not match the network");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gradient[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gradient[i] * gradient[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
  net.set_parameters(params);
}

double train_step(QNetwork& net, const QNetwork& target_net, std::span<const ExperienceTuple* const> batch,
                  double gamma, AdamOptimizer& optimizer) {
  const auto y = td_targets(target_net, batch, gamma);
  std::vector<double> grad;
  const double loss = huber_objective(net, batch, y, &grad);
  if (!std::isfinite(loss))
    throw TrainingDiverged(fmt::format("non-finite loss {} after {} optimizer steps (batch {}, gamma {})", loss,
                                       optimizer.steps(), batch.size(), gamma));
  optimizer.step(net, grad);
  return loss;
}

std::size_t greedy_action(std::span<const double> q_values) {
  if (q_values.empty()) throw ContractViolation("no q-values");
  // max_element returns the first maximum, which is the lowest index.
  return static_cast<std::size_t>(std::max_element(q_values.begin(), q_values.end()) - q_values.begin());
}

std::size_t select_config(const QNetwork& net, std::span<const float> state, double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractViolation(fmt::format("epsilon {} outside [0, 1]", epsilon));
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, net.num_actions() - 1);
      return pick(rng);
    }
  }
  return greedy_action(net.forward(state));
}

void save_checkpoint(const std::filesystem::path& path, const QNetwork& net, std::uint64_t seed,
                     const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "adaptq-qnetwork";
  header["layer_sizes"] = net.layer_sizes();
  header["seed"] = seed;
  header["param_count"] = net.parameter_count();
  if (!metadata.is_null()) header["params"] = metadata;
  const auto p = net.parameters();
  std::vector<float> blob(p.begin(), p.end());
  write_container(path, header, blob);
}

QNetwork load_checkpoint(const std::filesystem::path& path, nlohmann::json* header) {
  auto [h, blob] = read_container(path);
  if (h.value("format", "") != "adaptq-qnetwork")
    throw InvalidParams(fmt::format("{} is not a Q-network checkpoint", path.string()));
  QNetwork net(h.at("layer_sizes").get<std::vector<std::size_t>>(), 0);
  if (blob.size() != net.parameter_count())
    throw InvalidParams(fmt::format("{}: {} weights stored, {} expected", path.string(), blob.size(),
                                    net.parameter_count()));
  std::vector<double> p(blob.begin(), blob.end());
  net.set_parameters(p);
  if (header) *header = std::move(h);
  return net;
}

}  // namespace adaptq

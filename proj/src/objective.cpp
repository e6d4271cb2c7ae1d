#include "charrnn/objective.hpp"

#include <cmath>
#include <sstream>

#include "charrnn/error.hpp"

namespace charrnn {

namespace {

void check_targets(const Tensor& logits, std::span<const Index> targets) {
  if (logits.rank() != 3) {
    throw Error(ErrorCode::shape, "ce_loss: logits must be [batch x L x V], got " +
                                      format_dims(logits.dims()));
  }
  const std::size_t positions = logits.dim(0) * logits.dim(1);
  if (targets.size() != positions) {
    throw Error(ErrorCode::shape, "ce_loss: " + std::to_string(targets.size()) +
                                      " targets for " + std::to_string(positions) +
                                      " positions");
  }
  const std::size_t V = logits.dim(2);
  const std::size_t L = logits.dim(1);
  for (std::size_t n = 0; n < targets.size(); ++n) {
    if (targets[n] < 0 || static_cast<std::size_t>(targets[n]) >= V) {
      throw Error(ErrorCode::label,
                  "target " + std::to_string(targets[n]) + " at (" +
                      std::to_string(n / L) + ", " + std::to_string(n % L) +
                      ") is outside [0, " + std::to_string(V) + ")");
    }
  }
}

}  // namespace

LossReport ce_loss(const Tensor& logits, std::span<const Index> targets) {
  check_targets(logits, targets);
  const std::size_t V = logits.dim(2);
  const auto data = logits.data();
  double total = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const auto row = data.subspan(n * V, V);
    total += log_sum_exp(row) - row[static_cast<std::size_t>(targets[n])];
  }
  return {total / static_cast<double>(targets.size()), targets.size()};
}

LossReport ce_loss_and_grad(const Tensor& logits, std::span<const Index> targets,
                            Tensor& grad) {
  check_targets(logits, targets);
  const std::size_t V = logits.dim(2);
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  grad = logits;
  auto g = grad.data();
  const auto data = logits.data();
  double total = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const auto target = static_cast<std::size_t>(targets[n]);
    const double lse = log_sum_exp(data.subspan(n * V, V));
    total += lse - data[n * V + target];
    auto row = g.subspan(n * V, V);
    for (std::size_t j = 0; j < V; ++j) row[j] = std::exp(row[j] - lse) * inv_n;
    row[target] -= inv_n;
  }
  return {total * inv_n, targets.size()};
}

Tensor ce_grad(const Tensor& logits, std::span<const Index> targets) {
  Tensor grad;
  ce_loss_and_grad(logits, targets, grad);
  return grad;
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

RmspropState make_rmsprop_state(std::span<const Tensor* const> params,
                                const RmspropConfig& config) {
  if (!(config.rho > 0.0 && config.rho < 1.0)) {
    throw Error(ErrorCode::config, "rmsprop decay must be in (0, 1)");
  }
  if (!(config.lr >= 0.0) || !(config.epsilon >= 0.0)) {
    throw Error(ErrorCode::config,
                "rmsprop learning rate and epsilon must be nonnegative");
  }
  RmspropState state{config, {}};
  for (const Tensor* p : params) state.accumulators.emplace_back(p->dims());
  return state;
}

void rmsprop_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                  RmspropState& state) {
  if (params.size() != grads.size() ||
      params.size() != state.accumulators.size()) {
    throw Error(ErrorCode::shape, "rmsprop: " + std::to_string(params.size()) +
                                      " params, " + std::to_string(grads.size()) +
                                      " grads, " +
                                      std::to_string(state.accumulators.size()) +
                                      " accumulators");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_dims(grads[k]) ||
        !params[k]->same_dims(state.accumulators[k])) {
      throw Error(ErrorCode::shape, "rmsprop: tensor " + std::to_string(k) +
                                        " has param " +
                                        format_dims(params[k]->dims()) + ", grad " +
                                        format_dims(grads[k].dims()) +
                                        ", accumulator " +
                                        format_dims(state.accumulators[k].dims()));
    }
    if (!grads[k].all_finite()) {
      throw Error(ErrorCode::optimizer,
                  "rmsprop: non-finite gradient in tensor " + std::to_string(k));
    }
  }
  const double rho = state.config.rho;
  const double lr = state.config.lr;
  const double eps = state.config.epsilon;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->data();
    auto v = state.accumulators[k].data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = rho * v[i] + (1.0 - rho) * g[i] * g[i];
      if (g[i] != 0.0) w[i] -= lr * g[i] / std::sqrt(v[i] + eps);
    }
  }
}

}  // namespace charrnn

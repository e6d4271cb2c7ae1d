#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "charrnn/corpus.hpp"
#include "charrnn/layers.hpp"
#include "charrnn/tensor.hpp"

namespace charrnn {

struct LossReport {
  double mean_loss = 0.0;  // nats per character
  std::size_t count = 0;   // number of predictions averaged
};

/// Sparse categorical cross-entropy averaged over every (row, step) position,
/// evaluated as logsumexp(logits) - logits[target].
/// logits: [batch x L x V]; targets: batch*L row-major indices.
LossReport ce_loss(const Tensor& logits, std::span<const Index> targets);

/// d loss / d logits = (softmax - onehot(target)) / N.
Tensor ce_grad(const Tensor& logits, std::span<const Index> targets);

/// Single pass computing both; `grad` receives d loss / d logits.
LossReport ce_loss_and_grad(const Tensor& logits, std::span<const Index> targets,
                            Tensor& grad);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`
/// (no-op when max_norm <= 0). Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

// RMSprop:
//
//   V <- rho * V + (1 - rho) * g^2
//   w <- w - lr * g / sqrt(V + eps)
struct RmspropConfig {
  double lr = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-7;
};

struct RmspropState {
  RmspropConfig config;
  std::vector<Tensor> accumulators;  // mirrors the parameter list
};

/// Zero accumulators with the dims of `params`.
RmspropState make_rmsprop_state(std::span<const Tensor* const> params,
                                const RmspropConfig& config);

/// One update over aligned parameter / gradient / accumulator lists. A
/// non-finite gradient raises an optimizer error before anything is modified.
void rmsprop_step(std::span<Tensor* const> params,
                  std::span<const Tensor> grads, RmspropState& state);

}  // namespace charrnn

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "charrnn/corpus.hpp"
#include "charrnn/rng.hpp"
#include "charrnn/tensor.hpp"

namespace charrnn {

enum class Mode { train, eval };

/// One [batch x features] tensor per timestep.
using Sequence = std::vector<Tensor>;

struct NamedTensor {
  std::string name;
  Tensor* value;
};

// ---------------------------------------------------------------------------
// Embedding

Sequence embed_forward(const Tensor& table, std::span<const Index> indices,
                       std::size_t batch, std::size_t length);
/// Scatter-adds d_out rows into d_table at the looked-up rows.
void embed_backward(std::span<const Index> indices, std::size_t batch,
                    std::size_t length, const Sequence& d_out, Tensor& d_table);

// ---------------------------------------------------------------------------
// Recurrent cells
//
// Weights are stored input-major: w_x is [inputs x G*H], w_h is [H x G*H], and
// b is [G*H]. Column blocks follow a fixed gate order that checkpoints rely
// on:
//   LSTM (G = 4): input i, forget f, candidate g, output o
//   GRU  (G = 3): update z, reset r, candidate n

struct CellWeights {
  Tensor w_x;
  Tensor w_h;
  Tensor b;

  std::size_t inputs() const { return w_x.dim(0); }
  std::size_t hidden() const { return w_h.dim(0); }
};

CellWeights make_cell(std::size_t inputs, std::size_t hidden, std::size_t gates);

/// h for both cell kinds, c only for LSTM (left empty for GRU).
struct CellState {
  Tensor h;
  Tensor c;
};

CellState zero_lstm_state(std::size_t batch, std::size_t hidden);
CellState zero_gru_state(std::size_t batch, std::size_t hidden);

struct LstmStepCache {
  Tensor x, h_prev, c_prev;
  Tensor gates;  // post-activation i, f, g, o  [batch x 4H]
  Tensor c, tanh_c;
};

struct GruStepCache {
  Tensor x, h_prev;
  Tensor gates;  // post-activation z, r, n  [batch x 3H]
  Tensor reset_h;  // r * h_prev
};

struct StepGrads {
  Tensor dx;
  Tensor dh_prev;
  Tensor dc_prev;  // empty for GRU
};

/// c' = f*c + i*g, h' = o*tanh(c').
CellState lstm_step(const Tensor& x, const CellState& state,
                    const CellWeights& cell, LstmStepCache* cache = nullptr);
/// Accumulates parameter gradients into `grads` (same dims as `cell`).
StepGrads lstm_step_backward(const LstmStepCache& cache, const CellWeights& cell,
                             const Tensor& dh, const Tensor& dc,
                             CellWeights& grads);

/// n = tanh(x W_x + (r*h) W_h + b), h' = z*h + (1-z)*n.
CellState gru_step(const Tensor& x, const CellState& state,
                   const CellWeights& cell, GruStepCache* cache = nullptr);
StepGrads gru_step_backward(const GruStepCache& cache, const CellWeights& cell,
                            const Tensor& dh, CellWeights& grads);

// ---------------------------------------------------------------------------
// Sequence-level recurrent layers. `carry`, when given, supplies the initial
// state and receives the final one; otherwise the scan starts from zeros.

class LstmLayer {
 public:
  struct Cache {
    std::vector<LstmStepCache> steps;
  };

  LstmLayer(std::size_t inputs, std::size_t hidden)
      : cell(make_cell(inputs, hidden, 4)) {}

  std::size_t output_width() const { return cell.hidden(); }
  CellState zero_state(std::size_t batch) const {
    return zero_lstm_state(batch, cell.hidden());
  }
  Sequence forward(const Sequence& xs, CellState* carry, Cache* cache) const;
  Sequence backward(const Cache& cache, const Sequence& d_out,
                    std::span<Tensor> grads) const;

  CellWeights cell;
};

class GruLayer {
 public:
  struct Cache {
    std::vector<GruStepCache> steps;
  };

  GruLayer(std::size_t inputs, std::size_t hidden)
      : cell(make_cell(inputs, hidden, 3)) {}

  std::size_t output_width() const { return cell.hidden(); }
  CellState zero_state(std::size_t batch) const {
    return zero_gru_state(batch, cell.hidden());
  }
  Sequence forward(const Sequence& xs, CellState* carry, Cache* cache) const;
  Sequence backward(const Cache& cache, const Sequence& d_out,
                    std::span<Tensor> grads) const;

  CellWeights cell;
};

/// Two LSTM cells over the same input: one scans t = 0..L-1, the other
/// t = L-1..0, and output[t] = concat(h_fwd[t], h_bwd[t]). The backward half
/// at position t has seen inputs t..L-1, so when trained on next-character
/// targets it can read the answer from input t+1.
///
/// `carry` applies to the forward cell only. The backward cell always starts
/// from zeros, so in single-character generation it degenerates to one step
/// on the current input.
class BidirectionalLayer {
 public:
  struct Cache {
    std::vector<LstmStepCache> forward_steps;
    std::vector<LstmStepCache> backward_steps;  // indexed by position t
  };

  BidirectionalLayer(std::size_t inputs, std::size_t hidden)
      : forward_cell(make_cell(inputs, hidden, 4)),
        backward_cell(make_cell(inputs, hidden, 4)) {}

  std::size_t output_width() const { return 2 * forward_cell.hidden(); }
  CellState zero_state(std::size_t batch) const {
    return zero_lstm_state(batch, forward_cell.hidden());
  }
  Sequence forward(const Sequence& xs, CellState* carry, Cache* cache) const;
  Sequence backward(const Cache& cache, const Sequence& d_out,
                    std::span<Tensor> grads) const;

  CellWeights forward_cell;
  CellWeights backward_cell;
};

using RecurrentLayer = std::variant<LstmLayer, GruLayer, BidirectionalLayer>;

// ---------------------------------------------------------------------------
// Dropout and dense

/// Inverted dropout. In train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); `mask` (if given) receives
/// the per-unit multiplier. Eval mode is the identity.
Tensor dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng,
                       Tensor* mask = nullptr);

/// logits = x W + b over the last axis of x (rank 2 or 3).
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
/// Accumulates into dw/db and returns dx.
Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& d_out,
                      Tensor& dw, Tensor& db);

// ---------------------------------------------------------------------------
// Full stack: embedding -> recurrent layers (dropout after each) -> dense.

struct LayerTape {
  std::variant<LstmLayer::Cache, GruLayer::Cache, BidirectionalLayer::Cache>
      cache;
  std::vector<Tensor> masks;  // per timestep; empty when dropout rate is 0
};

/// Activations recorded by a train-mode forward pass.
struct Tape {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Index> inputs;
  std::vector<LayerTape> layers;
  Sequence top;  // input to the dense layer
};

struct ForwardPass {
  Tensor logits;  // [batch x length x V]
  std::optional<Tape> tape;
};

/// Recurrent state for step-wise evaluation, one entry per layer.
using RecurrentState = std::vector<CellState>;

class Network {
 public:
  Network() = default;

  Tensor embedding;  // [V x E]
  std::vector<RecurrentLayer> layers;
  Tensor dense_w;  // [F x V]
  Tensor dense_b;  // [V]
  double dropout = 0.0;

  std::size_t vocab_size() const { return embedding.dim(0); }

  /// Parameters in canonical order: embedding, each recurrent layer's input
  /// kernel, recurrent kernel and bias (forward then backward cell for
  /// bidirectional layers), dense kernel, dense bias.
  std::vector<NamedTensor> parameters();
  std::vector<const Tensor*> parameters() const;

  /// Glorot-uniform kernels, zero biases, U(-0.05, 0.05) embedding, and an
  /// optional LSTM forget-gate bias of 1.
  void initialize(Rng& rng, bool forget_bias);

  ForwardPass forward(std::span<const Index> inputs, std::size_t batch,
                      std::size_t length, Mode mode, Rng* dropout_rng) const;

  /// Gradients in the same order and dims as parameters().
  std::vector<Tensor> backward(const Tape* tape, const Tensor& d_logits) const;

  RecurrentState zero_state(std::size_t batch) const;

  /// Feeds one index per batch row through the stack in eval mode, carrying
  /// `state`; returns logits [batch x V].
  Tensor step(std::span<const Index> inputs, RecurrentState& state) const;
};

}  // namespace charrnn

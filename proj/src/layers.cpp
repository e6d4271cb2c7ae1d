#include "charrnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "charrnn/error.hpp"

namespace charrnn {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void add_bias_rows(Tensor& out, const Tensor& bias) {
  const auto b = bias.data();
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    std::copy(b.begin(), b.end(), out.row(r).begin());
  }
}

void accumulate_column_sums(const Tensor& d, Tensor& db) {
  auto acc = db.data();
  for (std::size_t r = 0; r < d.dim(0); ++r) {
    const auto row = d.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) acc[j] += row[j];
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  const auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
}

void check_step_input(const Tensor& x, const CellState& state,
                      const CellWeights& cell, bool needs_c, const char* who) {
  if (x.rank() != 2) {
    throw Error(ErrorCode::shape, std::string(who) + ": input must be rank 2, got " +
                                      format_dims(x.dims()));
  }
  const std::size_t batch = x.dim(0);
  require_dims(x, {batch, cell.inputs()}, who);
  require_dims(state.h, {batch, cell.hidden()}, who);
  if (needs_c) require_dims(state.c, {batch, cell.hidden()}, who);
}

// RAII view of a gradient slice as CellWeights; moves the tensors back on exit.
class GradSlot {
 public:
  explicit GradSlot(std::span<Tensor> grads)
      : grads_(grads),
        weights_{std::move(grads[0]), std::move(grads[1]), std::move(grads[2])} {}
  ~GradSlot() {
    grads_[0] = std::move(weights_.w_x);
    grads_[1] = std::move(weights_.w_h);
    grads_[2] = std::move(weights_.b);
  }
  GradSlot(const GradSlot&) = delete;
  GradSlot& operator=(const GradSlot&) = delete;

  CellWeights& weights() { return weights_; }

 private:
  std::span<Tensor> grads_;
  CellWeights weights_;
};

void require_tensor_count(std::span<Tensor> grads, std::size_t n,
                          const char* who) {
  if (grads.size() != n) {
    throw Error(ErrorCode::usage, std::string(who) + ": expected " +
                                      std::to_string(n) + " gradient tensors, got " +
                                      std::to_string(grads.size()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Sequence embed_forward(const Tensor& table, std::span<const Index> indices,
                       std::size_t batch, std::size_t length) {
  if (indices.size() != batch * length) {
    throw Error(ErrorCode::shape, "embed_forward: " + std::to_string(indices.size()) +
                                      " indices for a " + std::to_string(batch) +
                                      " x " + std::to_string(length) + " grid");
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  Sequence out(length, Tensor({batch, width}));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      const Index i = indices[b * length + t];
      if (i < 0 || static_cast<std::size_t>(i) >= vocab) {
        throw Error(ErrorCode::vocabulary,
                    "embed_forward: index " + std::to_string(i) + " at (" +
                        std::to_string(b) + ", " + std::to_string(t) +
                        ") is outside vocabulary of size " + std::to_string(vocab));
      }
      const auto src = table.row(static_cast<std::size_t>(i));
      std::copy(src.begin(), src.end(), out[t].row(b).begin());
    }
  }
  return out;
}

void embed_backward(std::span<const Index> indices, std::size_t batch,
                    std::size_t length, const Sequence& d_out, Tensor& d_table) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      auto dst = d_table.row(static_cast<std::size_t>(indices[b * length + t]));
      const auto src = d_out[t].row(b);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

// ---------------------------------------------------------------------------

CellWeights make_cell(std::size_t inputs, std::size_t hidden, std::size_t gates) {
  return {Tensor({inputs, gates * hidden}), Tensor({hidden, gates * hidden}),
          Tensor({gates * hidden})};
}

CellState zero_lstm_state(std::size_t batch, std::size_t hidden) {
  return {Tensor({batch, hidden}), Tensor({batch, hidden})};
}

CellState zero_gru_state(std::size_t batch, std::size_t hidden) {
  return {Tensor({batch, hidden}), Tensor()};
}

CellState lstm_step(const Tensor& x, const CellState& state,
                    const CellWeights& cell, LstmStepCache* cache) {
  check_step_input(x, state, cell, true, "lstm_step");
  const std::size_t batch = x.dim(0);
  const std::size_t in = cell.inputs();
  const std::size_t H = cell.hidden();
  const std::size_t G = 4 * H;

  Tensor gates({batch, G});
  add_bias_rows(gates, cell.b);
  kernel::gemm(false, false, batch, G, in, x.data().data(), in,
               cell.w_x.data().data(), G, 1.0, gates.data().data(), G);
  kernel::gemm(false, false, batch, G, H, state.h.data().data(), H,
               cell.w_h.data().data(), G, 1.0, gates.data().data(), G);

  CellState next{Tensor({batch, H}), Tensor({batch, H})};
  Tensor tanh_c({batch, H});
  for (std::size_t r = 0; r < batch; ++r) {
    auto a = gates.row(r);
    const auto c_prev = state.c.row(r);
    auto c = next.c.row(r);
    auto h = next.h.row(r);
    auto tc = tanh_c.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sigmoid(a[j]);
      const double f = sigmoid(a[H + j]);
      const double g = std::tanh(a[2 * H + j]);
      const double o = sigmoid(a[3 * H + j]);
      a[j] = i;
      a[H + j] = f;
      a[2 * H + j] = g;
      a[3 * H + j] = o;
      c[j] = f * c_prev[j] + i * g;
      tc[j] = std::tanh(c[j]);
      h[j] = o * tc[j];
    }
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->gates = std::move(gates);
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

StepGrads lstm_step_backward(const LstmStepCache& cache, const CellWeights& cell,
                             const Tensor& dh, const Tensor& dc,
                             CellWeights& grads) {
  const std::size_t batch = cache.x.dim(0);
  const std::size_t in = cell.inputs();
  const std::size_t H = cell.hidden();
  const std::size_t G = 4 * H;
  require_dims(dh, {batch, H}, "lstm_step_backward dh");
  require_dims(dc, {batch, H}, "lstm_step_backward dc");

  Tensor da({batch, G});
  StepGrads out{Tensor({batch, in}), Tensor({batch, H}), Tensor({batch, H})};
  for (std::size_t r = 0; r < batch; ++r) {
    const auto a = cache.gates.row(r);
    const auto tc = cache.tanh_c.row(r);
    const auto c_prev = cache.c_prev.row(r);
    const auto dhr = dh.row(r);
    const auto dcr = dc.row(r);
    auto d = da.row(r);
    auto dcp = out.dc_prev.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      const double i = a[j], f = a[H + j], g = a[2 * H + j], o = a[3 * H + j];
      const double dct = dcr[j] + dhr[j] * o * (1.0 - tc[j] * tc[j]);
      d[j] = dct * g * i * (1.0 - i);
      d[H + j] = dct * c_prev[j] * f * (1.0 - f);
      d[2 * H + j] = dct * i * (1.0 - g * g);
      d[3 * H + j] = dhr[j] * tc[j] * o * (1.0 - o);
      dcp[j] = dct * f;
    }
  }
  kernel::gemm(true, false, in, G, batch, cache.x.data().data(), in,
               da.data().data(), G, 1.0, grads.w_x.data().data(), G);
  kernel::gemm(true, false, H, G, batch, cache.h_prev.data().data(), H,
               da.data().data(), G, 1.0, grads.w_h.data().data(), G);
  accumulate_column_sums(da, grads.b);
  kernel::gemm(false, true, batch, in, G, da.data().data(), G,
               cell.w_x.data().data(), G, 0.0, out.dx.data().data(), in);
  kernel::gemm(false, true, batch, H, G, da.data().data(), G,
               cell.w_h.data().data(), G, 0.0, out.dh_prev.data().data(), H);
  return out;
}

CellState gru_step(const Tensor& x, const CellState& state,
                   const CellWeights& cell, GruStepCache* cache) {
  check_step_input(x, state, cell, false, "gru_step");
  const std::size_t batch = x.dim(0);
  const std::size_t in = cell.inputs();
  const std::size_t H = cell.hidden();
  const std::size_t G = 3 * H;
  const double* w_h = cell.w_h.data().data();

  Tensor gates({batch, G});
  add_bias_rows(gates, cell.b);
  kernel::gemm(false, false, batch, G, in, x.data().data(), in,
               cell.w_x.data().data(), G, 1.0, gates.data().data(), G);
  // Recurrent contribution to z and r only; the candidate sees r*h below.
  kernel::gemm(false, false, batch, 2 * H, H, state.h.data().data(), H, w_h, G,
               1.0, gates.data().data(), G);

  Tensor reset_h({batch, H});
  for (std::size_t r = 0; r < batch; ++r) {
    auto a = gates.row(r);
    const auto h = state.h.row(r);
    auto rh = reset_h.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      a[j] = sigmoid(a[j]);
      a[H + j] = sigmoid(a[H + j]);
      rh[j] = a[H + j] * h[j];
    }
  }
  kernel::gemm(false, false, batch, H, H, reset_h.data().data(), H, w_h + 2 * H,
               G, 1.0, gates.data().data() + 2 * H, G);

  CellState next{Tensor({batch, H}), Tensor()};
  for (std::size_t r = 0; r < batch; ++r) {
    auto a = gates.row(r);
    const auto h = state.h.row(r);
    auto hn = next.h.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      const double n = std::tanh(a[2 * H + j]);
      a[2 * H + j] = n;
      const double z = a[j];
      hn[j] = z * h[j] + (1.0 - z) * n;
    }
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->gates = std::move(gates);
    cache->reset_h = std::move(reset_h);
  }
  return next;
}

StepGrads gru_step_backward(const GruStepCache& cache, const CellWeights& cell,
                            const Tensor& dh, CellWeights& grads) {
  const std::size_t batch = cache.x.dim(0);
  const std::size_t in = cell.inputs();
  const std::size_t H = cell.hidden();
  const std::size_t G = 3 * H;
  require_dims(dh, {batch, H}, "gru_step_backward dh");
  const double* w_h = cell.w_h.data().data();
  double* gw_h = grads.w_h.data().data();

  Tensor da({batch, G});
  StepGrads out{Tensor({batch, in}), Tensor({batch, H}), Tensor()};
  for (std::size_t r = 0; r < batch; ++r) {
    const auto a = cache.gates.row(r);
    const auto h = cache.h_prev.row(r);
    const auto dhr = dh.row(r);
    auto d = da.row(r);
    auto dhp = out.dh_prev.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      const double z = a[j], n = a[2 * H + j];
      d[j] = dhr[j] * (h[j] - n) * z * (1.0 - z);
      d[2 * H + j] = dhr[j] * (1.0 - z) * (1.0 - n * n);
      dhp[j] = dhr[j] * z;
    }
  }
  // Through the candidate's recurrent product (r*h) W_hn.
  Tensor d_reset_h({batch, H});
  kernel::gemm(false, true, batch, H, H, da.data().data() + 2 * H, G,
               w_h + 2 * H, G, 0.0, d_reset_h.data().data(), H);
  kernel::gemm(true, false, H, H, batch, cache.reset_h.data().data(), H,
               da.data().data() + 2 * H, G, 1.0, gw_h + 2 * H, G);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto a = cache.gates.row(r);
    const auto h = cache.h_prev.row(r);
    const auto drh = d_reset_h.row(r);
    auto d = da.row(r);
    auto dhp = out.dh_prev.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      const double rg = a[H + j];
      d[H + j] = drh[j] * h[j] * rg * (1.0 - rg);
      dhp[j] += drh[j] * rg;
    }
  }
  kernel::gemm(true, false, H, 2 * H, batch, cache.h_prev.data().data(), H,
               da.data().data(), G, 1.0, gw_h, G);
  kernel::gemm(false, true, batch, H, 2 * H, da.data().data(), G, w_h, G, 1.0,
               out.dh_prev.data().data(), H);

  kernel::gemm(true, false, in, G, batch, cache.x.data().data(), in,
               da.data().data(), G, 1.0, grads.w_x.data().data(), G);
  accumulate_column_sums(da, grads.b);
  kernel::gemm(false, true, batch, in, G, da.data().data(), G,
               cell.w_x.data().data(), G, 0.0, out.dx.data().data(), in);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t sequence_batch(const Sequence& xs, const char* who) {
  if (xs.empty()) {
    throw Error(ErrorCode::shape, std::string(who) + ": empty sequence");
  }
  return xs.front().dim(0);
}

Sequence scan_lstm(const CellWeights& cell, const Sequence& xs, CellState state,
                   bool reverse, CellState* final_state,
                   std::vector<LstmStepCache>* caches) {
  const std::size_t L = xs.size();
  Sequence out(L);
  if (caches) caches->assign(L, {});
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t t = reverse ? L - 1 - k : k;
    state = lstm_step(xs[t], state, cell, caches ? &(*caches)[t] : nullptr);
    out[t] = state.h;
  }
  if (final_state) *final_state = std::move(state);
  return out;
}

Sequence unscan_lstm(const CellWeights& cell,
                     const std::vector<LstmStepCache>& caches,
                     const Sequence& d_out, bool reverse, CellWeights& grads) {
  const std::size_t L = caches.size();
  const std::size_t batch = caches.front().x.dim(0);
  const std::size_t H = cell.hidden();
  Sequence d_xs(L);
  Tensor dh_next({batch, H});
  Tensor dc_next({batch, H});
  for (std::size_t k = L; k-- > 0;) {
    const std::size_t t = reverse ? L - 1 - k : k;
    Tensor dh = add(d_out[t], dh_next);
    StepGrads g = lstm_step_backward(caches[t], cell, dh, dc_next, grads);
    d_xs[t] = std::move(g.dx);
    dh_next = std::move(g.dh_prev);
    dc_next = std::move(g.dc_prev);
  }
  return d_xs;
}

}  // namespace

Sequence LstmLayer::forward(const Sequence& xs, CellState* carry,
                            Cache* cache) const {
  const std::size_t batch = sequence_batch(xs, "lstm layer");
  CellState init = carry ? *carry : zero_state(batch);
  return scan_lstm(cell, xs, std::move(init), false, carry,
                   cache ? &cache->steps : nullptr);
}

Sequence LstmLayer::backward(const Cache& cache, const Sequence& d_out,
                             std::span<Tensor> grads) const {
  require_tensor_count(grads, 3, "lstm layer backward");
  GradSlot slot(grads);
  return unscan_lstm(cell, cache.steps, d_out, false, slot.weights());
}

Sequence GruLayer::forward(const Sequence& xs, CellState* carry,
                           Cache* cache) const {
  const std::size_t batch = sequence_batch(xs, "gru layer");
  CellState state = carry ? *carry : zero_state(batch);
  Sequence out(xs.size());
  if (cache) cache->steps.assign(xs.size(), {});
  for (std::size_t t = 0; t < xs.size(); ++t) {
    state = gru_step(xs[t], state, cell, cache ? &cache->steps[t] : nullptr);
    out[t] = state.h;
  }
  if (carry) *carry = std::move(state);
  return out;
}

Sequence GruLayer::backward(const Cache& cache, const Sequence& d_out,
                            std::span<Tensor> grads) const {
  require_tensor_count(grads, 3, "gru layer backward");
  GradSlot slot(grads);
  const std::size_t L = cache.steps.size();
  const std::size_t batch = cache.steps.front().x.dim(0);
  Sequence d_xs(L);
  Tensor dh_next({batch, cell.hidden()});
  for (std::size_t t = L; t-- > 0;) {
    Tensor dh = add(d_out[t], dh_next);
    StepGrads g = gru_step_backward(cache.steps[t], cell, dh, slot.weights());
    d_xs[t] = std::move(g.dx);
    dh_next = std::move(g.dh_prev);
  }
  return d_xs;
}

Sequence BidirectionalLayer::forward(const Sequence& xs, CellState* carry,
                                     Cache* cache) const {
  const std::size_t batch = sequence_batch(xs, "bidirectional layer");
  const std::size_t H = forward_cell.hidden();
  CellState init = carry ? *carry : zero_state(batch);
  Sequence fwd = scan_lstm(forward_cell, xs, std::move(init), false, carry,
                           cache ? &cache->forward_steps : nullptr);
  Sequence bwd = scan_lstm(backward_cell, xs, zero_lstm_state(batch, H), true,
                           nullptr, cache ? &cache->backward_steps : nullptr);
  Sequence out(xs.size(), Tensor({batch, 2 * H}));
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t r = 0; r < batch; ++r) {
      auto dst = out[t].row(r);
      const auto f = fwd[t].row(r);
      const auto b = bwd[t].row(r);
      std::copy(f.begin(), f.end(), dst.begin());
      std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(H));
    }
  }
  return out;
}

Sequence BidirectionalLayer::backward(const Cache& cache, const Sequence& d_out,
                                      std::span<Tensor> grads) const {
  require_tensor_count(grads, 6, "bidirectional layer backward");
  const std::size_t L = d_out.size();
  const std::size_t batch = d_out.front().dim(0);
  const std::size_t H = forward_cell.hidden();
  Sequence d_fwd(L, Tensor({batch, H}));
  Sequence d_bwd(L, Tensor({batch, H}));
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t r = 0; r < batch; ++r) {
      const auto src = d_out[t].row(r);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(H),
                d_fwd[t].row(r).begin());
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(H), src.end(),
                d_bwd[t].row(r).begin());
    }
  }
  Sequence d_xs;
  {
    GradSlot slot(grads.subspan(0, 3));
    d_xs = unscan_lstm(forward_cell, cache.forward_steps, d_fwd, false,
                       slot.weights());
  }
  GradSlot slot(grads.subspan(3, 3));
  Sequence d_xb = unscan_lstm(backward_cell, cache.backward_steps, d_bwd, true,
                              slot.weights());
  for (std::size_t t = 0; t < L; ++t) add_into(d_xs[t], d_xb[t]);
  return d_xs;
}

// ---------------------------------------------------------------------------

Tensor dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng,
                       Tensor* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::config,
                "dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) {
    if (mask) *mask = Tensor(x.dims(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = x;
  Tensor m(x.dims());
  auto o = out.data();
  auto md = m.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    md[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    o[i] *= md[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw Error(ErrorCode::shape, "dense: kernel " + format_dims(w.dims()) +
                                      " and bias " + format_dims(b.dims()) +
                                      " are inconsistent");
  }
  const std::size_t F = w.dim(0);
  const std::size_t V = w.dim(1);
  if (x.rank() < 2 || x.dims().back() != F) {
    throw Error(ErrorCode::shape, "dense: input " + format_dims(x.dims()) +
                                      " does not end in " + std::to_string(F));
  }
  std::vector<std::size_t> out_dims = x.dims();
  out_dims.back() = V;
  Tensor out(out_dims);
  const std::size_t rows = x.size() / F;
  const auto bias = b.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(bias.begin(), bias.end(), o.begin() + static_cast<std::ptrdiff_t>(r * V));
  }
  kernel::gemm(false, false, rows, V, F, x.data().data(), F, w.data().data(), V,
               1.0, o.data(), V);
  return out;
}

Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& d_out,
                      Tensor& dw, Tensor& db) {
  const std::size_t F = w.dim(0);
  const std::size_t V = w.dim(1);
  const std::size_t rows = x.size() / F;
  if (d_out.size() != rows * V) {
    throw Error(ErrorCode::shape, "dense backward: upstream gradient " +
                                      format_dims(d_out.dims()) +
                                      " does not match input " +
                                      format_dims(x.dims()));
  }
  kernel::gemm(true, false, F, V, rows, x.data().data(), F, d_out.data().data(),
               V, 1.0, dw.data().data(), V);
  auto acc = db.data();
  const auto d = d_out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < V; ++j) acc[j] += d[r * V + j];
  }
  Tensor dx(x.dims());
  kernel::gemm(false, true, rows, F, V, d.data(), V, w.data().data(), V, 0.0,
               dx.data().data(), F);
  return dx;
}

// ---------------------------------------------------------------------------

namespace {

// Visits (name, tensor) in canonical order for const and non-const networks.
template <class Net, class F>
void for_each_parameter(Net& net, F&& visit) {
  visit(std::string("embedding"), net.embedding);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const std::string prefix = "rnn" + std::to_string(l) + "/";
    const auto cell = [&](const std::string& p, auto& c) {
      visit(p + "kernel", c.w_x);
      visit(p + "recurrent_kernel", c.w_h);
      visit(p + "bias", c.b);
    };
    std::visit(
        [&](auto& layer) {
          using Layer = std::remove_cvref_t<decltype(layer)>;
          if constexpr (std::is_same_v<Layer, BidirectionalLayer>) {
            cell(prefix + "forward/", layer.forward_cell);
            cell(prefix + "backward/", layer.backward_cell);
          } else {
            cell(prefix, layer.cell);
          }
        },
               net.layers[l]);
  }
  visit(std::string("dense/kernel"), net.dense_w);
  visit(std::string("dense/bias"), net.dense_b);
}

}  // namespace

std::vector<NamedTensor> Network::parameters() {
  std::vector<NamedTensor> out;
  for_each_parameter(*this, [&](std::string name, Tensor& t) {
    out.push_back({std::move(name), &t});
  });
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for_each_parameter(*this,
                     [&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

void Network::initialize(Rng& rng, bool forget_bias) {
  for (double& v : embedding.data()) v = rng.uniform(-0.05, 0.05);
  const auto init_cell = [&](CellWeights& c, std::size_t gates, bool lstm) {
    glorot_uniform(c.w_x, c.inputs(), gates * c.hidden(), rng);
    glorot_uniform(c.w_h, c.hidden(), gates * c.hidden(), rng);
    c.b.fill(0.0);
    if (lstm && forget_bias) {
      const std::size_t H = c.hidden();
      for (std::size_t j = H; j < 2 * H; ++j) c.b[j] = 1.0;
    }
  };
  for (RecurrentLayer& layer : layers) {
    std::visit(Overloaded{
                   [&](LstmLayer& l) { init_cell(l.cell, 4, true); },
                   [&](GruLayer& l) { init_cell(l.cell, 3, false); },
                   [&](BidirectionalLayer& l) {
                     init_cell(l.forward_cell, 4, true);
                     init_cell(l.backward_cell, 4, true);
                   },
               },
               layer);
  }
  glorot_uniform(dense_w, dense_w.dim(0), dense_w.dim(1), rng);
  dense_b.fill(0.0);
}

ForwardPass Network::forward(std::span<const Index> inputs, std::size_t batch,
                             std::size_t length, Mode mode,
                             Rng* dropout_rng) const {
  const bool train = mode == Mode::train;
  if (train && dropout > 0.0 && dropout_rng == nullptr) {
    throw Error(ErrorCode::usage, "train-mode forward with dropout needs an rng");
  }
  if (length == 0 || batch == 0) {
    throw Error(ErrorCode::shape, "forward: batch and length must be positive");
  }
  ForwardPass pass;
  if (train) {
    pass.tape.emplace();
    pass.tape->batch = batch;
    pass.tape->length = length;
    pass.tape->inputs.assign(inputs.begin(), inputs.end());
  }
  Sequence xs = embed_forward(embedding, inputs, batch, length);
  for (const RecurrentLayer& layer : layers) {
    Sequence ys;
    if (train) {
      LayerTape lt;
      std::visit(
          [&](const auto& l) {
            typename std::decay_t<decltype(l)>::Cache cache;
            ys = l.forward(xs, nullptr, &cache);
            lt.cache = std::move(cache);
          },
          layer);
      if (dropout > 0.0) {
        lt.masks.resize(length);
        for (std::size_t t = 0; t < length; ++t) {
          ys[t] = dropout_forward(ys[t], dropout, mode, *dropout_rng,
                                  &lt.masks[t]);
        }
      }
      pass.tape->layers.push_back(std::move(lt));
    } else {
      std::visit([&](const auto& l) { ys = l.forward(xs, nullptr, nullptr); },
                 layer);
    }
    xs = std::move(ys);
  }

  const std::size_t V = dense_w.dim(1);
  pass.logits = Tensor({batch, length, V});
  for (std::size_t t = 0; t < length; ++t) {
    const Tensor step_logits = dense_forward(xs[t], dense_w, dense_b);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto src = step_logits.row(b);
      std::copy(src.begin(), src.end(), &pass.logits.at(b, t, 0));
    }
  }
  if (train) pass.tape->top = std::move(xs);
  return pass;
}

std::vector<Tensor> Network::backward(const Tape* tape,
                                      const Tensor& d_logits) const {
  if (tape == nullptr) {
    throw Error(ErrorCode::usage,
                "backward needs the tape of a train-mode forward pass");
  }
  const std::size_t batch = tape->batch;
  const std::size_t length = tape->length;
  const std::size_t V = dense_w.dim(1);
  require_dims(d_logits, {batch, length, V}, "backward upstream gradient");

  std::vector<Tensor> grads;
  for (const Tensor* p : parameters()) grads.emplace_back(p->dims());

  Tensor& g_dense_w = grads[grads.size() - 2];
  Tensor& g_dense_b = grads[grads.size() - 1];
  Sequence d_xs(length);
  for (std::size_t t = 0; t < length; ++t) {
    Tensor d_step({batch, V});
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(d_logits.data().begin() + static_cast<std::ptrdiff_t>((b * length + t) * V), V,
                  d_step.row(b).begin());
    }
    d_xs[t] = dense_backward(tape->top[t], dense_w, d_step, g_dense_w, g_dense_b);
  }

  // Gradient slot offsets per layer (after the embedding at index 0).
  std::vector<std::size_t> offsets;
  std::size_t offset = 1;
  for (const RecurrentLayer& layer : layers) {
    offsets.push_back(offset);
    offset += std::holds_alternative<BidirectionalLayer>(layer) ? 6 : 3;
  }

  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerTape& lt = tape->layers[l];
    if (!lt.masks.empty()) {
      for (std::size_t t = 0; t < length; ++t) {
        d_xs[t] = mul(d_xs[t], lt.masks[t]);
      }
    }
    const std::size_t count =
        std::holds_alternative<BidirectionalLayer>(layers[l]) ? 6 : 3;
    std::span<Tensor> slot(grads.data() + offsets[l], count);
    std::visit(
        [&](const auto& layer) {
          using Cache = typename std::decay_t<decltype(layer)>::Cache;
          d_xs = layer.backward(std::get<Cache>(lt.cache), d_xs, slot);
        },
        layers[l]);
  }
  embed_backward(tape->inputs, batch, length, d_xs, grads[0]);
  return grads;
}

RecurrentState Network::zero_state(std::size_t batch) const {
  RecurrentState state;
  for (const RecurrentLayer& layer : layers) {
    std::visit([&](const auto& l) { state.push_back(l.zero_state(batch)); },
               layer);
  }
  return state;
}

Tensor Network::step(std::span<const Index> inputs, RecurrentState& state) const {
  if (state.size() != layers.size()) {
    throw Error(ErrorCode::shape, "step: state has " + std::to_string(state.size()) +
                                      " layers, network has " +
                                      std::to_string(layers.size()));
  }
  Sequence xs = embed_forward(embedding, inputs, inputs.size(), 1);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::visit([&](const auto& layer) { xs = layer.forward(xs, &state[l], nullptr); },
               layers[l]);
  }
  return dense_forward(xs[0], dense_w, dense_b);
}

}  // namespace charrnn

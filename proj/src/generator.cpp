#include "charrnn/generator.hpp"

#include <cmath>

#include "charrnn/error.hpp"

namespace charrnn {

SelectMode parse_select_mode(std::string_view name) {
  if (name == "sample") return SelectMode::sample;
  if (name == "argmax") return SelectMode::argmax;
  throw Error(ErrorCode::config, "unknown selection mode '" + std::string(name) +
                                     "' (expected sample or argmax)");
}

void GenerationPlan::validate() const {
  if (prime.empty()) throw Error(ErrorCode::config, "prime text must not be empty");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::config, "temperature must be a finite value > 0");
  }
}

Tensor apply_temperature(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::config, "temperature must be a finite value > 0, got " +
                                       std::to_string(temperature));
  }
  Tensor out = logits;
  if (temperature != 1.0) {
    for (double& v : out.data()) v /= temperature;
  }
  return out;
}

std::size_t select_next(const Tensor& logits, double temperature, SelectMode mode,
                        Rng& rng) {
  Tensor scaled = apply_temperature(logits, temperature);
  if (mode == SelectMode::argmax) return argmax(scaled.data());
  return sample_categorical(softmax(scaled), rng);
}

std::u32string generate(const Model& model, const GenerationPlan& plan) {
  plan.validate();
  const Vocabulary& vocab = model.vocab();
  const std::vector<Index> prime = vocab.encode(plan.prime);
  const Network& net = model.network();

  RecurrentState state = net.zero_state(1);
  Tensor logits;
  for (Index i : prime) logits = net.step(std::span<const Index>(&i, 1), state);

  std::u32string out = plan.prime;
  out.reserve(plan.prime.size() + plan.length);
  Rng rng(plan.sample_seed);
  for (std::size_t n = 0; n < plan.length; ++n) {
    Tensor last({logits.dim(1)});
    const auto row = logits.row(0);
    std::copy(row.begin(), row.end(), last.data().begin());
    const auto next = static_cast<Index>(select_next(last, plan.temperature, plan.mode, rng));
    out.push_back(vocab.char_at(next));
    if (n + 1 < plan.length) {
      logits = net.step(std::span<const Index>(&next, 1), state);
    }
  }
  return out;
}

}  // namespace charrnn

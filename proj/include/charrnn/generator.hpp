#pragma once

#include <cstdint>
#include <string>

#include "charrnn/model.hpp"
#include "charrnn/tensor.hpp"

namespace charrnn {

enum class SelectMode { sample, argmax };

SelectMode parse_select_mode(std::string_view name);

struct GenerationPlan {
  std::u32string prime;
  std::size_t length = 0;  // characters to emit after the prime
  double temperature = 1.0;
  SelectMode mode = SelectMode::sample;
  std::uint64_t sample_seed = 0;

  void validate() const;
};

/// logits / T.
Tensor apply_temperature(const Tensor& logits, double temperature);

/// Picks the next index from a logit vector. Argmax ties go to the lowest
/// index; sample mode draws from softmax(logits / T).
std::size_t select_next(const Tensor& logits, double temperature, SelectMode mode,
                        Rng& rng);

/// Feeds the prime one character at a time, then emits `plan.length`
/// characters, each fed back as the next input. Returns prime + generated.
std::u32string generate(const Model& model, const GenerationPlan& plan);

}  // namespace charrnn

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "charrnn/corpus.hpp"
#include "charrnn/layers.hpp"

namespace charrnn {

enum class CellKind { lstm, gru, birnn };

const char* to_string(CellKind kind) noexcept;
CellKind parse_cell_kind(std::string_view name);

/// Layer widths of the named architecture presets: uni = [1024],
/// bi = [512, 256], quad = [512, 256, 128, 64]. `scale` shrinks every width
/// (rounded, at least 1) for quick runs.
std::vector<std::size_t> preset_widths(std::string_view preset,
                                       double scale = 1.0);

struct ModelConfig {
  CellKind kind = CellKind::lstm;
  std::vector<std::size_t> layer_widths{1024};
  std::size_t embed_dim = 256;
  double dropout = 0.4;
  std::size_t seq_len = 100;
  std::size_t batch_size = 64;
  std::size_t vocab_size = 0;
  std::uint64_t init_seed = 0;
  bool forget_bias = true;

  /// Throws a config error describing the first invalid field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Number of trainable scalars implied by `config`:
///   embedding        V*E
///   LSTM layer       4H*(in + H + 1)
///   GRU layer        3H*(in + H + 1)
///   bidirectional    2 * 4H*(in + H + 1), output width 2H
///   dense            F*V + V
std::size_t parameter_count(const ModelConfig& config);

class Model {
 public:
  /// Builds and initializes from config.init_seed. vocab_size is taken from
  /// `vocab`.
  Model(ModelConfig config, Vocabulary vocab);

  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  Network& network() noexcept { return net_; }
  const Network& network() const noexcept { return net_; }

  std::vector<NamedTensor> parameters() { return net_.parameters(); }
  std::vector<const Tensor*> parameters() const { return net_.parameters(); }
  std::size_t parameter_count() const;

  /// Train mode requires batch.batch == config().batch_size.
  ForwardPass forward(const SequenceBatch& batch, Mode mode,
                      Rng* dropout_rng = nullptr) const;
  std::vector<Tensor> backward(const Tape* tape, const Tensor& d_logits) const {
    return net_.backward(tape, d_logits);
  }

  /// Sets the batch size used for train-mode checks (generation uses 1).
  void set_batch_size(std::size_t batch) { config_.batch_size = batch; }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  Network net_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// CRNF checkpoint layout (all integers little-endian):
///
///   "CRNF"                      4 bytes magic
///   u32 version                 currently 1
///   u32 header_len, header      UTF-8 JSON: config fields + "vocab" as an
///                               index-ordered array of code points
///   per parameter, canonical order:
///     u32 rank, u32 dims[rank], float32 values[prod(dims)]
///   u32 crc32                   CRC-32 (IEEE) of every byte after the version
///                               field and before the checksum
///
/// Values are rounded to float32 on save.
std::string serialize_checkpoint(const Model& model);
/// The JSON header that serialize_checkpoint embeds.
std::string checkpoint_header(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames into place.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Same parameters, batch size 1, for step-wise generation. Dropout is never
/// applied outside train mode, so the result only needs eval-mode calls.
Model rebuild_for_generation(const Model& trained);

/// Writes `bytes` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace charrnn

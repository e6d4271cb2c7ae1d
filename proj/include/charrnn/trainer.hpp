#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "charrnn/corpus.hpp"
#include "charrnn/model.hpp"
#include "charrnn/objective.hpp"

namespace charrnn {

struct TrainPlan {
  std::size_t epochs = 75;
  double lr = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-7;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t shuffle_seed = 0;
  std::uint64_t dropout_seed = 0;

  void validate() const;
};

struct HistoryRow {
  std::size_t epoch = 0;
  double mean_loss = 0.0;   // nats per character
  double ms_per_step = 0.0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct TrainingHistory {
  std::vector<HistoryRow> rows;
};

struct EpochResult {
  double mean_loss = 0.0;
  double ms_per_step = 0.0;
};

/// One pass over `batches`: forward, loss, backward, global-norm clip, RMSprop
/// update. The loss is averaged over batches; time per step covers
/// forward + backward + update on a monotonic clock.
EpochResult train_epoch(Model& model, std::span<const SequenceBatch> batches,
                        const TrainPlan& plan, RmspropState& optimizer,
                        Rng& dropout_rng);

struct TrainRequest {
  std::filesystem::path corpus;
  ModelConfig config;  // vocab_size is filled in from the corpus
  TrainPlan plan;
  std::filesystem::path checkpoint_out;  // empty: do not write
  std::filesystem::path history_out;     // empty: do not write
};

struct TrainResult {
  Model model;
  TrainingHistory history;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

/// Full pipeline: load, vocabulary, sequences, then `plan.epochs` epochs with
/// batches reshuffled each epoch from shuffle_seed + epoch. Outputs are
/// written atomically after the last epoch.
TrainResult train(const TrainRequest& request, const EpochCallback& on_epoch = {});

/// Same loop over an in-memory text.
TrainResult train_on_text(std::u32string_view text, ModelConfig config,
                          const TrainPlan& plan, const EpochCallback& on_epoch = {});

/// CSV with header "epoch,mean_loss,ms_per_step"; losses carry 17 significant
/// digits so parsing recovers them exactly.
std::string format_history(const TrainingHistory& history);
void export_history(const TrainingHistory& history,
                    const std::filesystem::path& path);
TrainingHistory parse_history(std::string_view csv);
TrainingHistory load_history(const std::filesystem::path& path);

struct NamedHistory {
  std::string run;
  TrainingHistory history;
};

/// Long-format table "run,epoch,mean_loss,ms_per_step" with one row per
/// (run, epoch), runs in the given order, for overlaying several runs.
std::string render_report(std::span<const NamedHistory> runs);

}  // namespace charrnn

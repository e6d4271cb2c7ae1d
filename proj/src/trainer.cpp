#include "charrnn/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <utility>

#include "charrnn/error.hpp"

namespace charrnn {

void TrainPlan::validate() const {
  if (epochs == 0) throw Error(ErrorCode::config, "epochs must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::config, "learning rate must be finite and nonnegative");
  }
}

EpochResult train_epoch(Model& model, std::span<const SequenceBatch> batches,
                        const TrainPlan& plan, RmspropState& optimizer,
                        Rng& dropout_rng) {
  if (batches.empty()) {
    throw Error(ErrorCode::corpus, "an epoch needs at least one batch");
  }
  std::vector<Tensor*> params;
  for (const NamedTensor& p : model.parameters()) params.push_back(p.value);

  using Clock = std::chrono::steady_clock;
  Clock::duration busy{};
  double loss_sum = 0.0;
  Tensor d_logits;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const SequenceBatch& batch = batches[i];
    const auto start = Clock::now();
    ForwardPass pass = model.forward(batch, Mode::train, &dropout_rng);
    const LossReport loss = ce_loss_and_grad(pass.logits, batch.targets, d_logits);
    if (!std::isfinite(loss.mean_loss)) {
      std::ostringstream os;
      os << "non-finite loss " << loss.mean_loss << " at batch " << i;
      throw Error(ErrorCode::numeric, os.str());
    }
    std::vector<Tensor> grads = model.backward(pass.tape ? &*pass.tape : nullptr,
                                               d_logits);
    clip_global_norm(grads, plan.clip_norm);
    rmsprop_step(params, grads, optimizer);
    busy += Clock::now() - start;
    loss_sum += loss.mean_loss;
  }
  const double ms =
      std::chrono::duration<double, std::milli>(busy).count() /
      static_cast<double>(batches.size());
  return {loss_sum / static_cast<double>(batches.size()), ms};
}

TrainResult train_on_text(std::u32string_view text, ModelConfig config,
                          const TrainPlan& plan, const EpochCallback& on_epoch) {
  plan.validate();
  Vocabulary vocab = Vocabulary::build(text);
  const std::vector<Index> indices = vocab.encode(text);
  const CorpusPlan corpus_plan{config.seq_len, config.batch_size, plan.shuffle_seed};
  const std::vector<SequencePair> pairs = make_sequences(indices, corpus_plan);

  Model model(std::move(config), std::move(vocab));
  std::vector<const Tensor*> params = std::as_const(model).parameters();
  RmspropState optimizer =
      make_rmsprop_state(params, {plan.lr, plan.rho, plan.epsilon});
  Rng dropout_rng(plan.dropout_seed);

  TrainingHistory history;
  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    Rng shuffle_rng(plan.shuffle_seed + epoch);
    const std::vector<SequenceBatch> batches =
        shuffle_batches(pairs, corpus_plan, shuffle_rng);
    EpochResult r;
    try {
      r = train_epoch(model, batches, plan, optimizer, dropout_rng);
    } catch (const Error& e) {
      throw Error(e.code(), "epoch " + std::to_string(epoch) + ": " + e.what());
    }
    history.rows.push_back({epoch, r.mean_loss, r.ms_per_step});
    if (on_epoch) on_epoch(history.rows.back());
  }
  return {std::move(model), std::move(history)};
}

TrainResult train(const TrainRequest& request, const EpochCallback& on_epoch) {
  const std::u32string text = load_corpus(request.corpus);
  TrainResult result = train_on_text(text, request.config, request.plan, on_epoch);
  if (!request.checkpoint_out.empty()) {
    save_checkpoint(result.model, request.checkpoint_out);
  }
  if (!request.history_out.empty()) {
    export_history(result.history, request.history_out);
  }
  return result;
}

namespace {

std::string format_row(const HistoryRow& row) {
  char line[128];
  std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", row.epoch, row.mean_loss,
                row.ms_per_step);
  return line;
}

}  // namespace

std::string format_history(const TrainingHistory& history) {
  std::string out = "epoch,mean_loss,ms_per_step\n";
  for (const HistoryRow& row : history.rows) out += format_row(row);
  return out;
}

std::string render_report(std::span<const NamedHistory> runs) {
  std::string out = "run,epoch,mean_loss,ms_per_step\n";
  for (const NamedHistory& run : runs) {
    if (run.run.find_first_of(",\n\r\"") != std::string::npos) {
      throw Error(ErrorCode::usage, "run name '" + run.run +
                                        "' must not contain commas, quotes or newlines");
    }
    for (const HistoryRow& row : run.history.rows) out += run.run + "," + format_row(row);
  }
  return out;
}

void export_history(const TrainingHistory& history,
                    const std::filesystem::path& path) {
  if (history.rows.empty()) {
    throw Error(ErrorCode::usage, "refusing to export an empty training history");
  }
  write_file_atomic(path, format_history(history));
}

namespace {

template <typename T>
bool parse_field(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

TrainingHistory parse_history(std::string_view csv) {
  TrainingHistory history;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string_view::npos) eol = csv.size();
    std::string_view line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::format,
                  "history CSV line " + std::to_string(line_no) + ": " + why);
    };
    if (!saw_header) {
      if (line != "epoch,mean_loss,ms_per_step") {
        fail("expected header 'epoch,mean_loss,ms_per_step'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      fail("expected 3 comma-separated fields");
    }
    HistoryRow row;
    if (!parse_field(line.substr(0, c1), row.epoch)) fail("bad epoch");
    if (!parse_field(line.substr(c1 + 1, c2 - c1 - 1), row.mean_loss)) {
      fail("bad mean_loss");
    }
    if (!parse_field(line.substr(c2 + 1), row.ms_per_step)) fail("bad ms_per_step");
    if (!history.rows.empty() && row.epoch <= history.rows.back().epoch) {
      fail("epochs must be strictly increasing");
    }
    history.rows.push_back(row);
  }
  if (!saw_header) {
    throw Error(ErrorCode::format, "history CSV line 1: missing header");
  }
  return history;
}

TrainingHistory load_history(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open history '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  try {
    return parse_history(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace charrnn

// Command-line front end over the charrnn C API.
//
//   charrnn vocab    --corpus PATH
//   charrnn train    --corpus PATH --model lstm|gru|birnn --preset uni|bi|quad ...
//   charrnn generate --checkpoint CKPT --prime STR ...
//   charrnn report   --history CSV... [--out PATH]
//
// Exit codes: 0 success, 2 usage error, 1 runtime error. Data goes to stdout,
// diagnostics to stderr.

#include <cstdio>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "charrnn/charrnn.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int report_failure(crnn_status status) {
  std::cerr << "charrnn: " << crnn_status_name(status) << ": " << crnn_last_error()
            << "\n";
  return (status == CRNN_ERR_USAGE || status == CRNN_ERR_CONFIG) ? kExitUsage
                                                                  : kExitRuntime;
}

struct StringDeleter {
  void operator()(char* s) const { crnn_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

int write_output(const std::string& path, const char* text) {
  if (path.empty()) {
    std::fputs(text, stdout);
    std::fflush(stdout);
    return 0;
  }
  const crnn_status s = crnn_write_file(path.c_str(), text, std::strlen(text));
  return s == CRNN_OK ? 0 : report_failure(s);
}

int run_vocab(const std::string& corpus) {
  crnn_vocab* raw = nullptr;
  crnn_status s = crnn_vocab_from_corpus(corpus.c_str(), &raw);
  if (s != CRNN_OK) return report_failure(s);
  std::unique_ptr<crnn_vocab, decltype(&crnn_vocab_free)> vocab(raw, crnn_vocab_free);
  char* table = nullptr;
  s = crnn_vocab_table(vocab.get(), &table);
  if (s != CRNN_OK) return report_failure(s);
  OwnedString owned(table);
  return write_output("", owned.get());
}

struct TrainArgs {
  std::string corpus, model, preset, out, history;
  double scale = 1.0;
  std::size_t seq_len = 100, batch_size = 64, epochs = 75, embed_dim = 256;
  double lr = 1e-3, dropout = 0.4, clip_norm = 5.0;
  std::uint64_t seed = 0;
  bool no_forget_bias = false;
};

void print_epoch(void*, size_t epoch, double loss, double ms) {
  std::printf("epoch %zu  loss %.6f  ms/step %.3f\n", epoch, loss, ms);
  std::fflush(stdout);
}

int run_train(const TrainArgs& a) {
  if (a.preset.empty()) {
    std::cerr << "charrnn: --preset is required (valid presets: uni, bi, quad)\n";
    return kExitUsage;
  }
  crnn_train_options o;
  crnn_train_options_init(&o);
  o.corpus = a.corpus.c_str();
  o.kind = a.model.c_str();
  o.preset = a.preset.c_str();
  o.preset_scale = a.scale;
  o.seq_len = a.seq_len;
  o.batch_size = a.batch_size;
  o.epochs = a.epochs;
  o.embed_dim = a.embed_dim;
  o.lr = a.lr;
  o.dropout = a.dropout;
  o.clip_norm = a.clip_norm;
  o.seed = a.seed;
  o.forget_bias = a.no_forget_bias ? 0 : 1;
  o.checkpoint_out = a.out.c_str();
  o.history_out = a.history.empty() ? nullptr : a.history.c_str();
  const crnn_status s = crnn_train(&o, print_epoch, nullptr);
  return s == CRNN_OK ? 0 : report_failure(s);
}

struct GenerateArgs {
  std::string checkpoint, prime, mode = "sample", out;
  std::size_t length = 200;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  crnn_model* raw = nullptr;
  crnn_status s = crnn_model_load(a.checkpoint.c_str(), &raw);
  if (s != CRNN_OK) return report_failure(s);
  std::unique_ptr<crnn_model, decltype(&crnn_model_free)> model(raw, crnn_model_free);

  crnn_generate_options o;
  crnn_generate_options_init(&o);
  o.prime = a.prime.c_str();
  o.length = a.length;
  o.temperature = a.temperature;
  o.mode = a.mode.c_str();
  o.seed = a.seed;
  char* text = nullptr;
  s = crnn_generate(model.get(), &o, &text);
  if (s != CRNN_OK) return report_failure(s);
  OwnedString owned(text);
  return write_output(a.out, owned.get());
}

int run_report(const std::vector<std::string>& histories, const std::string& out) {
  crnn_report* raw = nullptr;
  crnn_status s = crnn_report_create(&raw);
  if (s != CRNN_OK) return report_failure(s);
  std::unique_ptr<crnn_report, decltype(&crnn_report_free)> report(raw,
                                                                  crnn_report_free);
  for (const std::string& path : histories) {
    s = crnn_report_add(report.get(), nullptr, path.c_str());
    if (s != CRNN_OK) return report_failure(s);
  }
  char* csv = nullptr;
  s = crnn_report_render(report.get(), &csv);
  if (s != CRNN_OK) return report_failure(s);
  OwnedString owned(csv);
  return write_output(out, owned.get());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Character-level LSTM / GRU / bidirectional text generator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", crnn_version());

  std::string vocab_corpus;
  auto* vocab = app.add_subcommand("vocab", "Print the character vocabulary of a corpus");
  vocab->add_option("--corpus", vocab_corpus, "UTF-8 text file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--corpus", ta.corpus, "UTF-8 text file")->required();
  train->add_option("--model", ta.model, "Recurrent cell kind")
      ->required()
      ->check(CLI::IsMember({"lstm", "gru", "birnn"}));
  train->add_option("--preset", ta.preset, "Layer widths: uni=[1024], bi=[512,256], "
                                           "quad=[512,256,128,64]")
      ->check(CLI::IsMember({"uni", "bi", "quad"}));
  train->add_option("--scale", ta.scale,
                    "Multiply preset widths by this factor (for quick test runs)")
      ->check(CLI::Range(1e-6, 1.0));
  train->add_option("--seq-len", ta.seq_len, "Characters per training sequence")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--batch-size", ta.batch_size, "Sequences per batch")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--epochs", ta.epochs, "Training epochs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.lr, "RMSprop learning rate")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--dropout", ta.dropout, "Dropout after each recurrent layer")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.999999));
  train->add_option("--embed-dim", ta.embed_dim, "Embedding width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--clip-norm", ta.clip_norm,
                    "Global gradient-norm clip (0 disables)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", ta.seed, "Seed for init, shuffling and dropout")
      ->capture_default_str();
  train->add_flag("--no-forget-bias", ta.no_forget_bias,
                  "Start LSTM forget-gate biases at 0 instead of 1");
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--history", ta.history, "Training history CSV path");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate text from a checkpoint");
  gen->add_option("--checkpoint", ga.checkpoint, "CRNF checkpoint")->required();
  gen->add_option("--prime", ga.prime, "Seed text")->required();
  gen->add_option("--length", ga.length, "Characters to generate")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--temperature", ga.temperature,
                  "Logit divisor; must be > 0 (lower is more predictable)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--mode", ga.mode, "Next-character selection")
      ->capture_default_str()
      ->check(CLI::IsMember({"sample", "argmax"}));
  gen->add_option("--seed", ga.seed, "Sampling seed")->capture_default_str();
  gen->add_option("--out", ga.out, "Write text here instead of stdout");

  std::vector<std::string> histories;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge history CSVs into one long table");
  report->add_option("--history", histories, "History CSV files")
      ->required()
      ->expected(1, -1);
  report->add_option("--out", report_out, "Write CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*vocab) return run_vocab(vocab_corpus);
  if (*train) return run_train(ta);
  if (*gen) return run_generate(ga);
  if (*report) return run_report(histories, report_out);
  return kExitUsage;
}

#include "charrnn/charrnn.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "charrnn/corpus.hpp"
#include "charrnn/error.hpp"
#include "charrnn/generator.hpp"
#include "charrnn/model.hpp"
#include "charrnn/trainer.hpp"

struct crnn_vocab {
  charrnn::Vocabulary vocab;
};

struct crnn_model {
  charrnn::Model model;
  std::string header;
};

struct crnn_report {
  std::vector<charrnn::NamedHistory> runs;
};

namespace {

thread_local std::string g_last_error;

crnn_status to_status(charrnn::ErrorCode code) {
  return static_cast<crnn_status>(static_cast<int>(code));
}

crnn_status fail(crnn_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes and the thread-local
// error message. Nothing may throw across the C boundary.
template <typename F>
crnn_status guarded(F&& body) noexcept {
  try {
    body();
    return CRNN_OK;
  } catch (const charrnn::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CRNN_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CRNN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CRNN_ERR_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw charrnn::Error(charrnn::ErrorCode::usage, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* crnn_version(void) { return "1.0.0"; }

const char* crnn_status_name(crnn_status status) {
  switch (status) {
    case CRNN_OK: return "ok";
    case CRNN_ERR_INTERNAL: return "internal error";
    default: break;
  }
  if (status >= CRNN_ERR_USAGE && status <= CRNN_ERR_INTEGRITY) {
    return charrnn::to_string(static_cast<charrnn::ErrorCode>(status));
  }
  return "unknown status";
}

const char* crnn_last_error(void) { return g_last_error.c_str(); }

void crnn_string_free(char* s) { std::free(s); }

crnn_status crnn_write_file(const char* path, const char* data, size_t len) {
  return guarded([&] {
    require(path != nullptr, "crnn_write_file: path is NULL");
    require(data != nullptr || len == 0, "crnn_write_file: data is NULL");
    charrnn::write_file_atomic(path, std::string_view(data ? data : "", len));
  });
}

// ---- vocabulary -----------------------------------------------------------

crnn_status crnn_vocab_from_corpus(const char* corpus_path, crnn_vocab** out) {
  return guarded([&] {
    require(corpus_path != nullptr && out != nullptr,
            "crnn_vocab_from_corpus: NULL argument");
    *out = nullptr;
    const std::u32string text = charrnn::load_corpus(corpus_path);
    *out = new crnn_vocab{charrnn::Vocabulary::build(text)};
  });
}

size_t crnn_vocab_size(const crnn_vocab* vocab) {
  return vocab ? vocab->vocab.size() : 0;
}

uint32_t crnn_vocab_code_point(const crnn_vocab* vocab, size_t index) {
  if (!vocab || index >= vocab->vocab.size()) return UINT32_MAX;
  return static_cast<uint32_t>(vocab->vocab.chars()[index]);
}

crnn_status crnn_vocab_table(const crnn_vocab* vocab, char** out) {
  return guarded([&] {
    require(vocab != nullptr && out != nullptr, "crnn_vocab_table: NULL argument");
    std::string table = "V=" + std::to_string(vocab->vocab.size()) + "\n";
    const auto& chars = vocab->vocab.chars();
    for (std::size_t i = 0; i < chars.size(); ++i) {
      table += std::to_string(i) + "\t" + charrnn::escape_char(chars[i]) + "\n";
    }
    *out = dup_string(table);
  });
}

void crnn_vocab_free(crnn_vocab* vocab) { delete vocab; }

// ---- training -------------------------------------------------------------

void crnn_train_options_init(crnn_train_options* o) {
  if (!o) return;
  *o = crnn_train_options{};
  o->kind = "lstm";
  o->preset = "uni";
  o->preset_scale = 1.0;
  o->seq_len = 100;
  o->batch_size = 64;
  o->epochs = 75;
  o->embed_dim = 256;
  o->lr = 1e-3;
  o->dropout = 0.4;
  o->clip_norm = 5.0;
  o->seed = 0;
  o->forget_bias = 1;
}

crnn_status crnn_train(const crnn_train_options* o, crnn_epoch_fn on_epoch,
                       void* user) {
  return guarded([&] {
    require(o != nullptr, "crnn_train: options are NULL");
    require(o->corpus != nullptr, "crnn_train: corpus path is required");
    require(o->kind != nullptr, "crnn_train: model kind is required");

    charrnn::TrainRequest req;
    req.corpus = o->corpus;
    charrnn::ModelConfig& c = req.config;
    c.kind = charrnn::parse_cell_kind(o->kind);
    if (o->preset) {
      c.layer_widths = charrnn::preset_widths(o->preset, o->preset_scale);
    } else {
      require(o->layer_widths != nullptr && o->num_layers > 0,
              "crnn_train: either a preset or explicit layer widths are required");
      c.layer_widths.assign(o->layer_widths, o->layer_widths + o->num_layers);
    }
    c.embed_dim = o->embed_dim;
    c.dropout = o->dropout;
    c.seq_len = o->seq_len;
    c.batch_size = o->batch_size;
    c.init_seed = o->seed;
    c.forget_bias = o->forget_bias != 0;

    charrnn::TrainPlan& p = req.plan;
    p.epochs = o->epochs;
    p.lr = o->lr;
    p.clip_norm = o->clip_norm;
    p.shuffle_seed = charrnn::derive_seed(o->seed, 1);
    p.dropout_seed = charrnn::derive_seed(o->seed, 2);

    if (o->checkpoint_out) req.checkpoint_out = o->checkpoint_out;
    if (o->history_out) req.history_out = o->history_out;

    charrnn::EpochCallback cb;
    if (on_epoch) {
      cb = [&](const charrnn::HistoryRow& row) {
        on_epoch(user, row.epoch, row.mean_loss, row.ms_per_step);
      };
    }
    charrnn::train(req, cb);
  });
}

// ---- models and generation --------------------------------------------

crnn_status crnn_model_load(const char* checkpoint_path, crnn_model** out) {
  return guarded([&] {
    require(checkpoint_path != nullptr && out != nullptr,
            "crnn_model_load: NULL argument");
    *out = nullptr;
    charrnn::Model trained = charrnn::load_checkpoint(checkpoint_path);
    std::string header = charrnn::checkpoint_header(trained);
    *out = new crnn_model{charrnn::rebuild_for_generation(trained), std::move(header)};
  });
}

size_t crnn_model_parameter_count(const crnn_model* model) {
  return model ? model->model.parameter_count() : 0;
}

size_t crnn_model_vocab_size(const crnn_model* model) {
  return model ? model->model.vocab().size() : 0;
}

crnn_status crnn_model_describe(const crnn_model* model, char** out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "crnn_model_describe: NULL argument");
    *out = dup_string(model->header);
  });
}

void crnn_model_free(crnn_model* model) { delete model; }

void crnn_generate_options_init(crnn_generate_options* o) {
  if (!o) return;
  *o = crnn_generate_options{};
  o->length = 200;
  o->temperature = 1.0;
  o->mode = "sample";
  o->seed = 0;
}

crnn_status crnn_generate(const crnn_model* model, const crnn_generate_options* o,
                          char** out) {
  return guarded([&] {
    require(model != nullptr && o != nullptr && out != nullptr,
            "crnn_generate: NULL argument");
    require(o->prime != nullptr, "crnn_generate: prime is required");
    charrnn::GenerationPlan plan;
    plan.prime = charrnn::decode_utf8(o->prime);
    plan.length = o->length;
    plan.temperature = o->temperature;
    plan.mode = charrnn::parse_select_mode(o->mode ? o->mode : "sample");
    plan.sample_seed = o->seed;
    *out = dup_string(charrnn::encode_utf8(charrnn::generate(model->model, plan)));
  });
}

// ---- history reports ------------------------------------------------------

crnn_status crnn_report_create(crnn_report** out) {
  return guarded([&] {
    require(out != nullptr, "crnn_report_create: NULL argument");
    *out = new crnn_report{};
  });
}

crnn_status crnn_report_add(crnn_report* report, const char* run,
                            const char* history_path) {
  return guarded([&] {
    require(report != nullptr && history_path != nullptr,
            "crnn_report_add: NULL argument");
    const std::filesystem::path path(history_path);
    charrnn::NamedHistory entry{run ? run : path.stem().string(),
                                charrnn::load_history(path)};
    report->runs.push_back(std::move(entry));
  });
}

size_t crnn_report_row_count(const crnn_report* report) {
  if (!report) return 0;
  std::size_t n = 0;
  for (const auto& r : report->runs) n += r.history.rows.size();
  return n;
}

crnn_status crnn_report_render(const crnn_report* report, char** out) {
  return guarded([&] {
    require(report != nullptr && out != nullptr, "crnn_report_render: NULL argument");
    require(!report->runs.empty(), "crnn_report_render: no histories added");
    *out = dup_string(charrnn::render_report(report->runs));
  });
}

void crnn_report_free(crnn_report* report) { delete report; }

}  // extern "C"

#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "charrnn/charrnn.h"
#include "tempdir.hpp"

namespace {

const std::string kData = CHARRNN_TEST_DATA;

std::string take(char* s) {
  std::string out = s ? s : "";
  crnn_string_free(s);
  return out;
}

crnn_train_options tiny_options(const std::string& corpus, const std::string& ckpt) {
  crnn_train_options o;
  crnn_train_options_init(&o);
  o.corpus = corpus.c_str();
  o.kind = "lstm";
  o.preset = "uni";
  o.preset_scale = 1.0 / 64;
  o.seq_len = 20;
  o.batch_size = 4;
  o.epochs = 2;
  o.embed_dim = 8;
  o.seed = 9;
  o.checkpoint_out = ckpt.c_str();
  return o;
}

struct Epochs {
  std::vector<double> losses;
};

void record(void* user, size_t epoch, double loss, double ms) {
  auto* e = static_cast<Epochs*>(user);
  CHECK(epoch == e->losses.size() + 1);
  CHECK(ms >= 0.0);
  e->losses.push_back(loss);
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(crnn_version()) == "1.0.0");
  CHECK(std::string(crnn_status_name(CRNN_OK)) == "ok");
  CHECK(std::string(crnn_status_name(CRNN_ERR_INTEGRITY)) == "integrity error");
  CHECK(std::string(crnn_status_name(CRNN_ERR_INTERNAL)) == "internal error");
  CHECK(std::string(crnn_status_name(static_cast<crnn_status>(55))) == "unknown status");
}

TEST_CASE("vocabulary handle") {
  crnn_vocab* v = nullptr;
  REQUIRE(crnn_vocab_from_corpus((kData + "/controls.txt").c_str(), &v) == CRNN_OK);
  CHECK(crnn_vocab_size(v) == 14);
  CHECK(crnn_vocab_code_point(v, 0) == 1);
  CHECK(crnn_vocab_code_point(v, 13) == 'y');
  CHECK(crnn_vocab_code_point(v, 14) == UINT32_MAX);
  char* table = nullptr;
  REQUIRE(crnn_vocab_table(v, &table) == CRNN_OK);
  CHECK(take(table) == read_bytes(kData + "/controls_vocab.golden"));
  crnn_vocab_free(v);
  crnn_vocab_free(nullptr);
  CHECK(crnn_vocab_size(nullptr) == 0);
}

TEST_CASE("errors map to status codes with a message") {
  crnn_vocab* v = reinterpret_cast<crnn_vocab*>(1);
  CHECK(crnn_vocab_from_corpus("/nonexistent/corpus.txt", &v) == CRNN_ERR_IO);
  CHECK(v == nullptr);
  CHECK(std::string(crnn_last_error()).find("corpus.txt") != std::string::npos);

  TempDir dir;
  const auto bad = dir.write("bad.txt", "ok\xfe");
  CHECK(crnn_vocab_from_corpus(bad.c_str(), &v) == CRNN_ERR_ENCODING);
  const auto empty = dir.write("empty.txt", "");
  CHECK(crnn_vocab_from_corpus(empty.c_str(), &v) == CRNN_ERR_CORPUS);
  CHECK(crnn_vocab_from_corpus(nullptr, &v) == CRNN_ERR_USAGE);
  CHECK(crnn_vocab_table(nullptr, nullptr) == CRNN_ERR_USAGE);
  CHECK(crnn_train(nullptr, nullptr, nullptr) == CRNN_ERR_USAGE);
  CHECK(crnn_model_load(nullptr, nullptr) == CRNN_ERR_USAGE);
}

TEST_CASE("train, load, describe and generate") {
  TempDir dir;
  const std::string corpus = kData + "/fixture.txt";
  const std::string ckpt = (dir / "m.crnf").string();
  const std::string hist = (dir / "h.csv").string();
  crnn_train_options o = tiny_options(corpus, ckpt);
  o.history_out = hist.c_str();
  Epochs epochs;
  REQUIRE(crnn_train(&o, record, &epochs) == CRNN_OK);
  CHECK(epochs.losses.size() == 2);
  CHECK(std::filesystem::exists(hist));

  crnn_model* m = nullptr;
  REQUIRE(crnn_model_load(ckpt.c_str(), &m) == CRNN_OK);
  CHECK(crnn_model_vocab_size(m) == 32);
  // V = 32, E = 8, H = 16: 32*8 + 4*16*(8+16+1) + 16*32 + 32
  CHECK(crnn_model_parameter_count(m) == 256 + 1600 + 512 + 32);
  char* desc = nullptr;
  REQUIRE(crnn_model_describe(m, &desc) == CRNN_OK);
  const std::string header = take(desc);
  CHECK(header.find("\"kind\":\"lstm\"") != std::string::npos);
  CHECK(header.find("\"layer_widths\":[16]") != std::string::npos);

  crnn_generate_options g;
  crnn_generate_options_init(&g);
  CHECK(g.length == 200);
  CHECK(g.temperature == 1.0);
  CHECK(std::string(g.mode) == "sample");
  g.prime = "MARA: ";
  g.length = 40;
  g.mode = "argmax";
  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(crnn_generate(m, &g, &a) == CRNN_OK);
  REQUIRE(crnn_generate(m, &g, &b) == CRNN_OK);
  const std::string first = take(a);
  CHECK(first == take(b));
  CHECK(first.rfind("MARA: ", 0) == 0);

  g.length = 0;
  REQUIRE(crnn_generate(m, &g, &a) == CRNN_OK);
  CHECK(take(a) == "MARA: ");

  g.temperature = 0.0;
  CHECK(crnn_generate(m, &g, &a) == CRNN_ERR_CONFIG);
  g.temperature = 1.0;
  g.prime = "\xe4\xb8\xad";
  CHECK(crnn_generate(m, &g, &a) == CRNN_ERR_VOCABULARY);
  g.prime = "MARA";
  g.mode = "beam";
  CHECK(crnn_generate(m, &g, &a) == CRNN_ERR_CONFIG);
  crnn_model_free(m);
}

TEST_CASE("training option validation") {
  TempDir dir;
  const std::string corpus = kData + "/fixture.txt";
  const std::string ckpt = (dir / "m.crnf").string();
  crnn_train_options o = tiny_options(corpus, ckpt);
  o.preset = "hex";
  CHECK(crnn_train(&o, nullptr, nullptr) == CRNN_ERR_CONFIG);
  CHECK(std::string(crnn_last_error()).find("quad") != std::string::npos);
  o = tiny_options(corpus, ckpt);
  o.kind = "rnn";
  CHECK(crnn_train(&o, nullptr, nullptr) == CRNN_ERR_CONFIG);
  o = tiny_options(corpus, ckpt);
  o.dropout = 1.0;
  CHECK(crnn_train(&o, nullptr, nullptr) == CRNN_ERR_CONFIG);
  o = tiny_options(corpus, ckpt);
  o.batch_size = 1000;
  CHECK(crnn_train(&o, nullptr, nullptr) == CRNN_ERR_CORPUS);
  CHECK_FALSE(std::filesystem::exists(ckpt));

  const size_t widths[] = {5, 3};
  o = tiny_options(corpus, ckpt);
  o.preset = nullptr;
  o.layer_widths = widths;
  o.num_layers = 2;
  o.epochs = 1;
  REQUIRE(crnn_train(&o, nullptr, nullptr) == CRNN_OK);
  crnn_model* m = nullptr;
  REQUIRE(crnn_model_load(ckpt.c_str(), &m) == CRNN_OK);
  char* desc = nullptr;
  REQUIRE(crnn_model_describe(m, &desc) == CRNN_OK);
  CHECK(take(desc).find("\"layer_widths\":[5,3]") != std::string::npos);
  crnn_model_free(m);

  o.layer_widths = nullptr;
  CHECK(crnn_train(&o, nullptr, nullptr) == CRNN_ERR_USAGE);
}

TEST_CASE("corrupt checkpoints are rejected through the API") {
  TempDir dir;
  const std::string corpus = kData + "/fixture.txt";
  const std::string ckpt = (dir / "m.crnf").string();
  crnn_train_options o = tiny_options(corpus, ckpt);
  o.epochs = 1;
  REQUIRE(crnn_train(&o, nullptr, nullptr) == CRNN_OK);
  std::string bytes = read_bytes(ckpt);
  bytes[bytes.size() - 10] ^= 0x04;
  const auto bad = dir.write("bad.crnf", bytes);
  crnn_model* m = nullptr;
  CHECK(crnn_model_load(bad.c_str(), &m) == CRNN_ERR_INTEGRITY);
  CHECK(m == nullptr);
  const auto cut = dir.write("cut.crnf", bytes.substr(0, 30));
  CHECK(crnn_model_load(cut.c_str(), &m) == CRNN_ERR_FORMAT);
  CHECK(std::string(crnn_last_error()).find("offset") != std::string::npos);
}

TEST_CASE("reports") {
  crnn_report* r = nullptr;
  REQUIRE(crnn_report_create(&r) == CRNN_OK);
  char* csv = nullptr;
  CHECK(crnn_report_render(r, &csv) == CRNN_ERR_USAGE);
  for (const char* run : {"lstm", "gru", "birnn"}) {
    const std::string path = kData + "/runs/" + run + ".csv";
    REQUIRE(crnn_report_add(r, nullptr, path.c_str()) == CRNN_OK);
  }
  CHECK(crnn_report_row_count(r) == 9);
  REQUIRE(crnn_report_render(r, &csv) == CRNN_OK);
  CHECK(take(csv) == read_bytes(kData + "/runs/report.golden"));
  CHECK(crnn_report_add(r, "x", (kData + "/fixture.txt").c_str()) == CRNN_ERR_FORMAT);
  CHECK(std::string(crnn_last_error()).find("line 1") != std::string::npos);
  crnn_report_free(r);

  REQUIRE(crnn_report_create(&r) == CRNN_OK);
  REQUIRE(crnn_report_add(r, "renamed", (kData + "/runs/gru.csv").c_str()) == CRNN_OK);
  REQUIRE(crnn_report_render(r, &csv) == CRNN_OK);
  CHECK(take(csv).find("\nrenamed,3,") != std::string::npos);
  crnn_report_free(r);
}

TEST_CASE("write_file") {
  TempDir dir;
  const std::string p = (dir / "out.txt").string();
  CHECK(crnn_write_file(p.c_str(), "hello", 5) == CRNN_OK);
  CHECK(read_bytes(p) == "hello");
  CHECK(crnn_write_file((dir / "no/dir.txt").c_str(), "x", 1) == CRNN_ERR_IO);
  CHECK(crnn_write_file(nullptr, "x", 1) == CRNN_ERR_USAGE);
}

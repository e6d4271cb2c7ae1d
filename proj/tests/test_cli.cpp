#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <string>

#include <sys/wait.h>

#include "tempdir.hpp"

namespace {

const std::string kData = CHARRNN_TEST_DATA;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  static TempDir scratch;
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd =
      std::string(CHARRNN_CLI) + " " + args + " 2>'" + err_path.string() + "'";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_bytes(err_path);
  return r;
}

std::string train_args(const TempDir& dir, const std::string& name, int epochs,
                       const std::string& model = "lstm") {
  return "train --corpus " + kData + "/fixture.txt --model " + model +
         " --preset uni --scale 0.015625 --seq-len 20 --batch-size 4 --embed-dim 8"
         " --epochs " + std::to_string(epochs) + " --seed 3 --out " +
         (dir / (name + ".crnf")).string() + " --history " +
         (dir / (name + ".csv")).string();
}

}  // namespace

TEST_CASE("vocab") {
  TempDir dir;
  const Run abc = cli("vocab --corpus " + dir.write("abc.txt", "abc").string());
  CHECK(abc.code == 0);
  CHECK(abc.out == "V=3\n0\ta\n1\tb\n2\tc\n");
  CHECK(abc.err.empty());

  const Run a = cli("vocab --corpus " + kData + "/fixture.txt");
  const Run b = cli("vocab --corpus " + kData + "/fixture.txt");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("V=32\n0\t\\n\n1\t \n", 0) == 0);

  const Run controls = cli("vocab --corpus " + kData + "/controls.txt");
  CHECK(controls.out == read_bytes(kData + "/controls_vocab.golden"));

  const Run missing = cli("vocab --corpus " + (dir / "missing.txt").string());
  CHECK(missing.code == 1);
  CHECK(missing.out.empty());
  CHECK(missing.err.find("missing.txt") != std::string::npos);

  const Run bad = cli("vocab --corpus " + dir.write("bad.txt", "ab\xff").string());
  CHECK(bad.code == 1);
  CHECK(bad.err.find("offset 2") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("vocab").code == 2);
  CHECK(cli("vocab --corpus x --bogus").code == 2);

  TempDir dir;
  const Run no_preset = cli("train --corpus " + kData + "/fixture.txt --model lstm --out " +
                            (dir / "m.crnf").string());
  CHECK(no_preset.code == 2);
  CHECK(no_preset.out.empty());
  for (const char* p : {"uni", "bi", "quad"}) CHECK(no_preset.err.find(p) != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "m.crnf"));

  CHECK(cli("train --corpus x --model rnn --preset uni --out y").code == 2);
  CHECK(cli("train --corpus x --model lstm --preset hex --out y").code == 2);
  CHECK(cli("train --corpus x --model lstm --preset uni --out y --dropout 1.5").code == 2);
}

TEST_CASE("train prints epochs and writes outputs") {
  TempDir dir;
  const Run r = cli(train_args(dir, "one", 1));
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  CHECK(r.out.rfind("epoch 1  loss ", 0) == 0);
  CHECK(r.out.find("  ms/step ") != std::string::npos);
  const std::string hist = read_bytes(dir / "one.csv");
  CHECK(hist.rfind("epoch,mean_loss,ms_per_step\n1,", 0) == 0);
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 2);
  CHECK(std::filesystem::exists(dir / "one.crnf"));
}

TEST_CASE("train is deterministic for a fixed seed") {
  TempDir dir;
  REQUIRE(cli(train_args(dir, "a", 2)).code == 0);
  REQUIRE(cli(train_args(dir, "b", 2)).code == 0);
  CHECK(read_bytes(dir / "a.crnf") == read_bytes(dir / "b.crnf"));
}

TEST_CASE("train failures leave no checkpoint") {
  TempDir dir;
  const Run r = cli("train --corpus " + dir.write("tiny.txt", "abc").string() +
                    " --model gru --preset uni --scale 0.01 --out " +
                    (dir / "m.crnf").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("corpus") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "m.crnf"));
  CHECK_FALSE(std::filesystem::exists(dir / "m.crnf.tmp"));
}

TEST_CASE("generate") {
  TempDir dir;
  REQUIRE(cli(train_args(dir, "g", 2, "gru")).code == 0);
  const std::string ckpt = " --checkpoint " + (dir / "g.crnf").string();

  const Run zero = cli("generate" + ckpt + " --prime 'MARA: ' --length 0");
  CHECK(zero.code == 0);
  CHECK(zero.out == "MARA: ");

  const Run a = cli("generate" + ckpt + " --prime 'MARA: ' --length 50 --mode argmax");
  const Run b = cli("generate" + ckpt + " --prime 'MARA: ' --length 50 --mode argmax");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.size() == 56);

  const Run s1 = cli("generate" + ckpt + " --prime M --length 30 --seed 5");
  const Run s2 = cli("generate" + ckpt + " --prime M --length 30 --seed 5");
  CHECK(s1.out == s2.out);

  const Run cold = cli("generate" + ckpt + " --prime 'MARA: ' --length 50 --temperature 0.001");
  CHECK(cold.out == a.out);

  const Run t0 = cli("generate" + ckpt + " --prime M --temperature 0");
  CHECK(t0.code == 2);
  CHECK(t0.err.find("temperature") != std::string::npos);
  CHECK(t0.out.empty());

  const Run unknown = cli("generate" + ckpt + " --prime 'Z\xc3\xa9'");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("vocabulary") != std::string::npos);

  const Run to_file = cli("generate" + ckpt + " --prime 'MARA: ' --length 50 --mode argmax --out " +
                          (dir / "gen.txt").string());
  CHECK(to_file.code == 0);
  CHECK(to_file.out.empty());
  CHECK(read_bytes(dir / "gen.txt") == a.out);

  CHECK(cli("generate --checkpoint " + (dir / "none.crnf").string() + " --prime M").code == 1);
}

TEST_CASE("report") {
  const Run one = cli("report --history " + kData + "/runs/gru.csv");
  CHECK(one.code == 0);
  CHECK(one.out ==
        "run,epoch,mean_loss,ms_per_step\n"
        "gru,1,3.1804399490356445,11\n"
        "gru,2,2.3390121459960938,10.875\n"
        "gru,3,1.8657891750335693,11.125\n");

  const std::string runs = kData + "/runs/";
  const Run three = cli("report --history " + runs + "lstm.csv " + runs + "gru.csv " + runs +
                        "birnn.csv");
  CHECK(three.code == 0);
  CHECK(three.out == read_bytes(runs + "report.golden"));

  TempDir dir;
  const Run out = cli("report --history " + runs + "lstm.csv --out " + (dir / "r.csv").string());
  CHECK(out.out.empty());
  CHECK(read_bytes(dir / "r.csv").rfind("run,epoch,mean_loss,ms_per_step\nlstm,1,", 0) == 0);

  const auto bad = dir.write("bad.csv", "epoch,mean_loss,ms_per_step\n1,0.5,3\n2,oops,3\n");
  const Run malformed = cli("report --history " + bad.string());
  CHECK(malformed.code == 1);
  CHECK(malformed.out.empty());
  CHECK(malformed.err.find("line 3") != std::string::npos);
  CHECK(cli("report").code == 2);
}

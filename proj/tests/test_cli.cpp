#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "prefnet/checkpoint.hpp"
#include "prefnet/features.hpp"
#include "prefnet/manifest.hpp"
#include "prefnet/optimizer.hpp"

using namespace prefnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "prefnet_cli";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Run cli(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path o = kWork / "stdout.txt";
  const fs::path e = kWork / "stderr.txt";
  const std::string cmd = std::string(PREFNET_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::map<std::string, std::string> run_txt(const fs::path& dir) {
  std::map<std::string, std::string> kv;
  std::istringstream in(slurp(dir / "run.txt"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

fs::path fresh(const std::string& name) {
  const fs::path d = kWork / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("noise-estimate --n 10").code == 2);
  CHECK(cli("train --epochs notanumber").code == 2);
}

TEST_CASE("help exits with 0") {
  auto r = cli("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("train") != std::string::npos);
}

TEST_CASE("noise-estimate prints the estimate") {
  auto r = cli("noise-estimate --n 100 --errors 12");
  CHECK(r.code == 0);
  CHECK(r.out == "0.24\n");
  CHECK(cli("noise-estimate --n 100 --errors 0").out == "0\n");
}

TEST_CASE("pipeline errors exit with 1 and one JSON line") {
  auto r = cli("noise-estimate --n 10 --errors 11");
  CHECK(r.code == 1);
  auto j = json::parse(r.err);
  CHECK(j["error"]["kind"] == "argument");
  CHECK_FALSE(j["error"]["message"].get<std::string>().empty());

  const fs::path dir = fresh("errors");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"learning_rate": 0.01, "colour": "blue"})";
  r = cli("train --synth 20 --size 64 --out " + dir.string() + " --config " + (dir / "bad.json").string());
  CHECK(r.code == 1);
  j = json::parse(r.err);
  CHECK(j["error"]["kind"] == "config");
  CHECK(j["error"]["message"].get<std::string>().find("colour") != std::string::npos);

  r = cli("train --synth 20 --size 64 --lr -1 --out " + dir.string());
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["error"]["kind"] == "config");

  r = cli("evaluate --model " + (dir / "nope.ckpt").string() + " --manifest x.csv --out " + dir.string());
  CHECK(r.code == 1);
  CHECK(json::parse(r.err).contains("error"));
}

TEST_CASE("train records recipe defaults") {
  const fs::path dir = fresh("defaults");
  auto r = cli("train --synth 150 --size 64 --epochs 1 --out " + dir.string());
  REQUIRE(r.code == 0);
  auto kv = run_txt(dir);
  const TrainConfig want = attractiveness_defaults();
  CHECK(std::stod(kv["learning_rate"]) == want.learning_rate);
  CHECK(std::stod(kv["momentum"]) == want.momentum);
  CHECK(std::stod(kv["l2"]) == want.l2);
  CHECK(std::stoul(kv["batch_size"]) == want.batch_size);
  CHECK(kv["dropout"] == "true");
  CHECK(kv["epochs"] == "1");
  CHECK(kv["seed"] == "0");
  CHECK(kv["preset"] == "attractiveness");

  const fs::path g = fresh("defaults_gender");
  r = cli("train --preset gender --synth 60 --size 128 --width-divisor 8 --epochs 1 --out " + g.string());
  REQUIRE(r.code == 0);
  kv = run_txt(g);
  const TrainConfig gw = gender_defaults();
  CHECK(std::stod(kv["l2"]) == gw.l2);
  CHECK(std::stoul(kv["batch_size"]) == gw.batch_size);
}

TEST_CASE("flags beat the config file") {
  const fs::path dir = fresh("precedence");
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({"learning_rate": 0.02, "momentum": 0.5, "epochs": 1})";
  auto r = cli("train --synth 20 --size 64 --batch-size 6 --lr 0.03 --config " + (dir / "cfg.json").string() + " --out " +
               (dir / "run").string());
  REQUIRE(r.code == 0);
  auto kv = run_txt(dir / "run");
  CHECK(std::stod(kv["learning_rate"]) == 0.03);
  CHECK(std::stod(kv["momentum"]) == 0.5);
  CHECK(kv["config_file"] == (dir / "cfg.json").string());
}

TEST_CASE("train is bitwise deterministic for a fixed seed") {
  const std::string args = "train --synth 80 --noise 0.1 --size 64 --epochs 3 --batch-size 16 --lr 0.01 --seed 11";
  const fs::path a = fresh("det_a");
  const fs::path b = fresh("det_b");
  const fs::path c = fresh("det_c");
  REQUIRE(cli(args + " --out " + a.string()).code == 0);
  REQUIRE(cli(args + " --out " + b.string()).code == 0);
  CHECK(slurp(a / "curves.csv") == slurp(b / "curves.csv"));
  CHECK(slurp(a / "best.ckpt") == slurp(b / "best.ckpt"));
  CHECK(slurp(a / "mean.bin") == slurp(b / "mean.bin"));
  CHECK(slurp(a / "run.txt") == slurp(b / "run.txt"));
  CHECK(slurp(a / "curves.csv").find("epoch") == 0);
  REQUIRE(cli("train --synth 80 --noise 0.1 --size 64 --epochs 3 --batch-size 16 --lr 0.01 --seed 12 --out " +
              c.string())
              .code == 0);
  CHECK(slurp(a / "best.ckpt") != slurp(c / "best.ckpt"));
}

TEST_CASE("end to end: synth, split, train, transfer, features, logreg, evaluate") {
  const fs::path root = fresh("e2e");
  const std::string data = (root / "data").string();
  REQUIRE(cli("synth --n 60 --size 64 --seed 3 --out " + data).code == 0);
  CHECK(read_manifest(root / "data/manifest.csv").size() == 60);

  auto r = cli("split --manifest " + data + "/manifest.csv --ratios 0.6,0.2,0.2 --seed 1 --out " +
               (root / "split").string());
  REQUIRE(r.code == 0);
  CHECK(r.out == "train 36 val 12 test 12\n");
  const std::string manifest = (root / "split/manifest.csv").string();

  const std::string run = (root / "run").string();
  r = cli("train --manifest " + manifest + " --size 64 --epochs 2 --batch-size 12 --lr 0.01 --pixel-scale 255 --out " +
          run);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("epoch 2 ") != std::string::npos);
  const Checkpoint best = load_checkpoint(root / "run/best.ckpt");
  CHECK(best.spec.input.h == 64);

  const std::string mean = run + "/mean.bin";
  r = cli("evaluate --model " + run + "/best.ckpt --manifest " + manifest + " --split test --mean " + mean +
          " --pixel-scale 255 --out " + (root / "eval").string());
  REQUIRE(r.code == 0);
  auto ev = json::parse(r.out);
  CHECK(ev["count"] == 12);
  CHECK(ev["accuracy"].get<double>() + ev["misclassification"].get<double>() == doctest::Approx(1.0));

  r = cli("transfer --pretrained " + run + "/best.ckpt --last-k 2 --manifest " + manifest +
          " --epochs 1 --batch-size 12 --pixel-scale 255 --out " + (root / "ft").string());
  REQUIRE(r.code == 0);
  const Checkpoint ft = load_checkpoint(root / "ft/best.ckpt");
  // Everything below the last two parameterized layers is untouched.
  CHECK(ft.params[0].weights.storage() == best.params[0].weights.storage());
  CHECK(run_txt(root / "ft")["last_k"] == "2");

  for (const char* split : {"train", "val"}) {
    r = cli("extract-features --model " + run + "/best.ckpt --layer fc2_relu --manifest " + manifest + " --split " +
            split + " --mean " + mean + " --pixel-scale 255 --out " + (root / "feat").string());
    REQUIRE(r.code == 0);
  }
  const auto f = import_features(root / "feat/features_train.swft");
  CHECK(f.rows == 36);
  CHECK(f.dim == 16);

  r = cli("train-logreg --train " + (root / "feat/features_train.swft").string() + " --val " +
          (root / "feat/features_val.swft").string() + " --epochs 3 --batch-size 12 --out " + (root / "lr").string());
  REQUIRE(r.code == 0);
  r = cli("evaluate --model " + (root / "lr/best.ckpt").string() + " --features " +
          (root / "feat/features_val.swft").string() + " --out " + (root / "lr_eval").string());
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["count"] == 12);

  r = cli("extract-features --model " + run + "/best.ckpt --layer fc9 --manifest " + manifest + " --out " +
          (root / "feat").string());
  CHECK(r.code == 1);
}

TEST_CASE("audit tallies categories") {
  const fs::path root = fresh("audit");
  REQUIRE(cli("synth --n 30 --size 64 --out " + (root / "data").string()).code == 0);
  auto r = cli("audit --manifest " + (root / "data/manifest.csv").string() + " --n 10 --out " + (root / "a").string());
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  std::size_t total = 0;
  for (const auto& [k, v] : j.items()) total += v.get<std::size_t>();
  CHECK(total == 10);
  CHECK(read_manifest(root / "a/audit.csv").size() == 10);
}

// prefnet: command-line front end for every pipeline stage.
//
// Exit codes: 0 success, 1 pipeline error (reported as one JSON line on
// stderr), 2 usage error.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefnet/checkpoint.hpp"
#include "prefnet/error.hpp"
#include "prefnet/features.hpp"
#include "prefnet/image_io.hpp"
#include "prefnet/manifest.hpp"
#include "prefnet/model_spec.hpp"
#include "prefnet/optimizer.hpp"
#include "prefnet/service.hpp"
#include "prefnet/synth.hpp"
#include "prefnet/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prefnet;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Run seed");
  cmd->add_option("--config", c.config, "JSON file with settings")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory");
}

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  std::ifstream f(c.config);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + c.config + " is not a JSON object");
  return j;
}

// Reads and removes `key`, so leftover keys can be reported as unknown.
template <typename T>
void take(json& cfg, const char* key, T& into) {
  if (!cfg.contains(key)) return;
  try {
    into = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
  cfg.erase(key);
}

void reject_leftovers(const json& cfg) {
  if (cfg.empty()) return;
  std::string keys;
  for (const auto& [k, v] : cfg.items()) keys += (keys.empty() ? "" : ", ") + k;
  throw ConfigError("unknown config keys: " + keys);
}

void take_train(json& cfg, TrainConfig& t) {
  take(cfg, "learning_rate", t.learning_rate);
  take(cfg, "momentum", t.momentum);
  take(cfg, "l2", t.l2);
  take(cfg, "epochs", t.epochs);
  take(cfg, "batch_size", t.batch_size);
  take(cfg, "dropout", t.dropout_enabled);
  take(cfg, "shuffle", t.shuffle);
}

// Explicit flags beat the config file, which beats preset defaults.
struct TrainFlags {
  std::optional<double> lr, momentum, l2;
  std::optional<std::size_t> epochs, batch;
  bool no_dropout = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--momentum", momentum, "Momentum");
    cmd->add_option("--l2", l2, "L2 coefficient");
    cmd->add_option("--epochs", epochs, "Epoch count");
    cmd->add_option("--batch-size", batch, "Mini-batch size");
    cmd->add_flag("--no-dropout", no_dropout, "Disable dropout");
  }
  void apply(TrainConfig& t) const {
    if (lr) t.learning_rate = *lr;
    if (momentum) t.momentum = *momentum;
    if (l2) t.l2 = *l2;
    if (epochs) t.epochs = *epochs;
    if (batch) t.batch_size = *batch;
    if (no_dropout) t.dropout_enabled = false;
  }
};

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class RunLog {
 public:
  RunLog(std::string command, const Common& c) {
    add("command", std::move(command));
    add("seed", std::to_string(c.seed));
    if (!c.config.empty()) add("config_file", c.config);
  }
  void add(const std::string& k, const std::string& v) { lines_.emplace_back(k, v); }
  void add(const std::string& k, double v) { add(k, fmt(v)); }
  void add(const std::string& k, std::size_t v) { add(k, std::to_string(v)); }
  void add_train(const TrainConfig& t) {
    add("learning_rate", t.learning_rate);
    add("momentum", t.momentum);
    add("l2", t.l2);
    add("epochs", t.epochs);
    add("batch_size", t.batch_size);
    add("dropout", std::string(t.dropout_enabled ? "true" : "false"));
    add("shuffle", std::string(t.shuffle ? "true" : "false"));
  }
  void write(const fs::path& dir) const {
    std::ofstream f(dir / "run.txt", std::ios::trunc);
    for (const auto& [k, v] : lines_) f << k << '=' << v << '\n';
    if (!f) throw DataError("cannot write " + (dir / "run.txt").string());
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

fs::path prepare_out(const Common& c) {
  fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

std::string created_at() {
  const char* sde = std::getenv("SOURCE_DATE_EPOCH");
  return sde ? std::string(sde) : std::string();
}

// Data for training runs: either a manifest (train/val splits) or a freshly
// generated synthetic set split by position.
struct DataArgs {
  std::string manifest;
  std::size_t synth_n = 0;
  double noise = 0.0;
  double val_fraction = 0.1;
  float pixel_scale = 1.0f;

  void add(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "Manifest CSV with train/val splits");
    cmd->add_option("--synth", synth_n, "Train on N synthetic images instead of a manifest");
    cmd->add_option("--noise", noise, "Synthetic label-flip rate");
    cmd->add_option("--val-fraction", val_fraction, "Synthetic validation share");
    cmd->add_option("--pixel-scale", pixel_scale, "Multiplier applied after mean subtraction");
  }
  void take_config(json& cfg) {
    take(cfg, "noise", noise);
    take(cfg, "val_fraction", val_fraction);
    take(cfg, "pixel_scale", pixel_scale);
  }
};

struct PreparedData {
  InMemoryDataset train;
  InMemoryDataset val;
  MeanImage mean;
};

PreparedData prepare_data(const DataArgs& d, std::size_t input_size, std::uint64_t seed) {
  if (d.manifest.empty() == (d.synth_n == 0)) throw ConfigError("give exactly one of --manifest or --synth");
  if (!(d.pixel_scale > 0.0f)) throw ConfigError("pixel scale must be positive");
  PreparedData p;
  if (d.synth_n) {
    if (!(d.val_fraction > 0.0 && d.val_fraction < 1.0)) throw ConfigError("val fraction must be in (0, 1)");
    const InMemoryDataset all = materialize(synth_generate({d.synth_n, d.noise, seed, input_size}));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(d.synth_n) * d.val_fraction));
    if (n_val == 0 || n_val >= d.synth_n) throw ConfigError("val fraction leaves an empty split");
    std::vector<std::size_t> tr(d.synth_n - n_val);
    std::vector<std::size_t> va(n_val);
    std::iota(tr.begin(), tr.end(), 0);
    std::iota(va.begin(), va.end(), tr.size());
    p.train = all.subset(tr);
    p.val = all.subset(va);
  } else {
    const Manifest m = read_manifest(d.manifest);
    p.train = materialize(ManifestDataset(m, Split::train, input_size));
    p.val = materialize(ManifestDataset(m, Split::val, input_size));
  }
  p.mean = compute_mean(p.train);
  apply_mean(p.train.examples(), p.mean, d.pixel_scale);
  if (p.val.size()) apply_mean(p.val.examples(), p.mean, d.pixel_scale);
  return p;
}

void finish_training(const fs::path& out, const TrainResult& r, RunLog& log) {
  write_curves(r.curves, out / "curves.csv");
  Checkpoint best = r.best;
  best.meta.created_at = created_at();
  save_checkpoint(best, out / "best.ckpt");
  log.add("best_epoch", r.best_epoch);
  if (!r.curves.empty()) {
    const auto& last = r.curves.records.back();
    log.add("final_train_err", last.train_err);
    log.add("final_val_err", last.val_err);
    log.add("best_val_err", r.best.meta.val_err);
  }
  log.write(out);
}

void print_epoch(const CurveRecord& rec) {
  std::printf("epoch %zu train_err %.6f val_err %.6f\n", rec.epoch, rec.train_err, rec.val_err);
  std::fflush(stdout);
}

// -- subcommands -----------------------------------------------------------

struct SplitCmd {
  Common c;
  std::string manifest;
  std::vector<double> ratios{0.9, 0.05, 0.05};

  void run() {
    json cfg = load_config(c);
    take(cfg, "ratios", ratios);
    reject_leftovers(cfg);
    if (ratios.size() != 3) throw ConfigError("ratios need three values: train, val, test");
    const fs::path out = prepare_out(c);
    const Manifest m = read_manifest(manifest);
    Manifest s = split(m, {ratios[0], ratios[1], ratios[2]}, c.seed);
    // Rewrite paths relative to the new manifest's directory.
    const fs::path base = fs::absolute(out).lexically_normal();
    Manifest relocated;
    for (auto e : s.entries()) {
      const fs::path abs = fs::absolute(s.resolve(e)).lexically_normal();
      const fs::path rel = abs.lexically_relative(base);
      e.path = rel.empty() ? abs.string() : rel.string();
      relocated.add(std::move(e));
    }
    write_manifest(relocated, out / "manifest.csv");
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& e : relocated.entries()) ++counts[static_cast<int>(e.split)];
    RunLog log("split", c);
    log.add("manifest", manifest);
    log.add("ratios", fmt(ratios[0]) + "," + fmt(ratios[1]) + "," + fmt(ratios[2]));
    log.add("n_train", counts[0]);
    log.add("n_val", counts[1]);
    log.add("n_test", counts[2]);
    log.write(out);
    std::printf("train %zu val %zu test %zu\n", counts[0], counts[1], counts[2]);
  }
};

struct TrainCmd {
  Common c;
  std::string preset = "attractiveness";
  std::size_t size = 250;
  std::size_t width_divisor = 1;
  DataArgs data;
  TrainFlags flags;

  void run() {
    json cfg = load_config(c);
    take(cfg, "preset", preset);
    if (preset != "attractiveness" && preset != "gender") {
      throw ConfigError("preset must be 'attractiveness' or 'gender'");
    }
    TrainConfig t = preset == "gender" ? gender_defaults() : attractiveness_defaults();
    take_train(cfg, t);
    take(cfg, "input_size", size);
    take(cfg, "width_divisor", width_divisor);
    data.take_config(cfg);
    reject_leftovers(cfg);
    flags.apply(t);
    t.seed = c.seed;
    t.validate();

    const fs::path out = prepare_out(c);
    const ModelSpec spec = build_preset(preset, {size, width_divisor, 4096});
    PreparedData d = prepare_data(data, size, c.seed);
    save_mean(d.mean, out / "mean.bin");
    const Checkpoint init = init_params(spec, c.seed);
    const TrainResult r = train(init, FreezeMask::all_trainable(spec), d.train, d.val, t,
                                [](const CurveRecord& rec, const Checkpoint&) { print_epoch(rec); });
    RunLog log("train", c);
    log.add("preset", preset);
    log.add("input_size", size);
    log.add("width_divisor", width_divisor);
    log.add("data", data.manifest.empty() ? "synth:" + std::to_string(data.synth_n) : data.manifest);
    log.add("noise", data.noise);
    log.add("pixel_scale", static_cast<double>(data.pixel_scale));
    log.add("n_train", d.train.size());
    log.add("n_val", d.val.size());
    log.add("parameters", count_params(spec));
    log.add_train(t);
    finish_training(out, r, log);
  }
};

struct TransferCmd {
  Common c;
  std::string pretrained;
  std::size_t last_k = 1;
  DataArgs data;
  TrainFlags flags;

  void run() {
    json cfg = load_config(c);
    TrainConfig t = fine_tune_defaults();
    take_train(cfg, t);
    take(cfg, "last_k", last_k);
    data.take_config(cfg);
    reject_leftovers(cfg);
    flags.apply(t);
    t.seed = c.seed;
    t.dropout_enabled = false;
    t.validate();

    const fs::path out = prepare_out(c);
    const Checkpoint base = load_checkpoint(pretrained);
    PreparedData d = prepare_data(data, base.spec.input.h, c.seed);
    save_mean(d.mean, out / "mean.bin");
    const TrainResult r = fine_tune(base, last_k, d.train, d.val, t,
                                    [](const CurveRecord& rec, const Checkpoint&) { print_epoch(rec); });
    RunLog log("transfer", c);
    log.add("pretrained", pretrained);
    log.add("last_k", last_k);
    log.add("trainable_parameters", count_params(base.spec, last_k));
    log.add("data", data.manifest.empty() ? "synth:" + std::to_string(data.synth_n) : data.manifest);
    log.add("pixel_scale", static_cast<double>(data.pixel_scale));
    log.add_train(t);
    finish_training(out, r, log);
  }
};

struct ExtractCmd {
  Common c;
  std::string model;
  std::string layer;
  std::string manifest;
  std::string split_name = "train";
  std::string mean_path;
  float pixel_scale = 1.0f;

  void run() {
    json cfg = load_config(c);
    take(cfg, "layer", layer);
    take(cfg, "pixel_scale", pixel_scale);
    reject_leftovers(cfg);
    if (layer.empty()) throw ConfigError("--layer is required");
    const fs::path out = prepare_out(c);
    const Checkpoint m = load_checkpoint(model);
    std::optional<MeanImage> mean;
    if (!mean_path.empty()) mean = load_mean(mean_path);
    const ManifestDataset ds(read_manifest(manifest), parse_split(split_name), m.spec.input.h, mean, pixel_scale);
    const FeatureMatrix fm = extract_features(m, layer, ds);
    const fs::path file = out / ("features_" + split_name + ".swft");
    export_features(fm, file);
    RunLog log("extract-features", c);
    log.add("model", model);
    log.add("layer", layer);
    log.add("split", split_name);
    log.add("rows", fm.rows);
    log.add("dim", fm.dim);
    log.add("features", file.string());
    log.write(out);
    std::printf("%zu x %zu -> %s\n", fm.rows, fm.dim, file.string().c_str());
  }
};

struct LogregCmd {
  Common c;
  std::string train_path;
  std::string val_path;
  TrainFlags flags;

  void run() {
    json cfg = load_config(c);
    TrainConfig t = logreg_defaults();
    take_train(cfg, t);
    reject_leftovers(cfg);
    flags.apply(t);
    t.seed = c.seed;
    t.validate();
    const fs::path out = prepare_out(c);
    const FeatureMatrix tr = import_features(train_path);
    const FeatureMatrix va = import_features(val_path);
    const TrainResult r =
        train_logreg(tr, va, t, [](const CurveRecord& rec, const Checkpoint&) { print_epoch(rec); });
    RunLog log("train-logreg", c);
    log.add("train_features", train_path);
    log.add("val_features", val_path);
    log.add("dim", tr.dim);
    log.add_train(t);
    finish_training(out, r, log);
  }
};

struct EvaluateCmd {
  Common c;
  std::string model;
  std::string manifest;
  std::string features;
  std::string split_name = "test";
  std::string mean_path;
  float pixel_scale = 1.0f;

  void run() {
    json cfg = load_config(c);
    take(cfg, "pixel_scale", pixel_scale);
    reject_leftovers(cfg);
    if (manifest.empty() == features.empty()) throw ConfigError("give exactly one of --manifest or --features");
    const fs::path out = prepare_out(c);
    const Checkpoint m = load_checkpoint(model);
    EvalResult r;
    if (!features.empty()) {
      const FeatureMatrix fm = import_features(features);
      if (Shape{1, fm.dim, 1, 1} != m.spec.input) {
        throw ShapeError("features have d=" + std::to_string(fm.dim) + " but the model expects " +
                         m.spec.input.str());
      }
      r = evaluate(m, to_dataset(fm));
    } else {
      std::optional<MeanImage> mean;
      if (!mean_path.empty()) mean = load_mean(mean_path);
      r = evaluate(m, ManifestDataset(read_manifest(manifest), parse_split(split_name), m.spec.input.h, mean,
                                      pixel_scale));
    }
    RunLog log("evaluate", c);
    log.add("model", model);
    log.add("data", features.empty() ? manifest + ":" + split_name : features);
    log.add("count", r.count);
    log.add("misclassification", r.misclassification);
    log.add("accuracy", r.accuracy);
    log.add("mean_nll", r.mean_nll);
    for (std::size_t t = 0; t < r.confusion.size(); ++t) {
      for (std::size_t p = 0; p < r.confusion[t].size(); ++p) {
        log.add("confusion_" + std::to_string(t) + "_" + std::to_string(p), r.confusion[t][p]);
      }
    }
    log.write(out);
    json j{{"count", r.count}, {"accuracy", r.accuracy}, {"misclassification", r.misclassification},
           {"mean_nll", r.mean_nll}, {"confusion", r.confusion}};
    std::printf("%s\n", j.dump().c_str());
  }
};

struct NoiseCmd {
  Common c;
  long long n = 0;
  long long errors = 0;
  bool write_log = false;

  void run() {
    json cfg = load_config(c);
    reject_leftovers(cfg);
    const double est = estimate_label_noise(n, errors);
    std::printf("%s\n", fmt(est).c_str());
    if (write_log) {
      RunLog log("noise-estimate", c);
      log.add("n", std::to_string(n));
      log.add("errors", std::to_string(errors));
      log.add("estimate", est);
      log.write(prepare_out(c));
    }
  }
};

struct SynthCmd {
  Common c;
  std::size_t n = 100;
  double noise = 0.0;
  std::size_t size = 250;

  void run() {
    json cfg = load_config(c);
    take(cfg, "n", n);
    take(cfg, "noise", noise);
    take(cfg, "size", size);
    reject_leftovers(cfg);
    const fs::path out = prepare_out(c);
    fs::create_directories(out / "images");
    const SynthDataset ds = synth_generate({n, noise, c.seed, size});
    Manifest m({}, out);
    std::ofstream truth(out / "truth.csv", std::ios::trunc);
    truth << "id,true_label,observed_label,pixel_count\n";
    std::vector<float> buf(ds.example_shape().size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ds.load(i, buf);
      const std::string rel = "images/" + ds.id(i) + ".png";
      save_png(out / rel, buf, size, size);
      m.add({ds.id(i), rel, ds.label(i), Split::unassigned, Category::untagged});
      truth << ds.id(i) << ',' << ds.true_label(i) << ',' << ds.label(i) << ',' << ds.pixel_count(i) << '\n';
    }
    write_manifest(m, out / "manifest.csv");
    RunLog log("synth", c);
    log.add("n", n);
    log.add("noise", noise);
    log.add("size", size);
    log.add("threshold_pixels", ds.threshold());
    log.write(out);
    std::printf("wrote %zu images to %s\n", n, (out / "images").string().c_str());
  }
};

struct AuditCmd {
  Common c;
  std::string manifest;
  std::size_t n = 1000;

  void run() {
    json cfg = load_config(c);
    take(cfg, "n", n);
    reject_leftovers(cfg);
    const fs::path out = prepare_out(c);
    const Manifest m = read_manifest(manifest);
    const auto sample = audit_sample(m, n, c.seed);
    write_manifest(Manifest(sample, m.base_dir()), out / "audit.csv");
    const CategoryCounts counts = tally_categories(sample);
    RunLog log("audit", c);
    log.add("manifest", manifest);
    log.add("n", n);
    json j = json::object();
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const std::string name(to_string(static_cast<Category>(k)));
      log.add("count_" + name, counts[k]);
      j[name] = counts[k];
    }
    log.write(out);
    std::printf("%s\n", j.dump().c_str());
  }
};

struct ServeCmd {
  Common c;
  std::string manifest;
  std::string model;
  std::string mean_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  float pixel_scale = 1.0f;

  void run() {
    json cfg = load_config(c);
    take(cfg, "host", host);
    take(cfg, "port", port);
    take(cfg, "pixel_scale", pixel_scale);
    reject_leftovers(cfg);
    ServiceOptions opts;
    if (!model.empty()) opts.model = load_checkpoint(model);
    if (!mean_path.empty()) opts.mean = load_mean(mean_path);
    opts.pixel_scale = pixel_scale;
    LabelService svc(manifest, std::move(opts));
    std::fprintf(stderr, "serving %s on http://%s:%d\n", manifest.c_str(), host.c_str(), port);
    if (!svc.serve(host, port)) throw DataError("cannot listen on " + host + ":" + std::to_string(port));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefnet: convnet training, transfer and labeling tools"};
  app.require_subcommand(1);

  SplitCmd split_cmd;
  auto* s = app.add_subcommand("split", "Assign seeded train/val/test splits");
  add_common(s, split_cmd.c);
  s->add_option("--manifest", split_cmd.manifest, "Input manifest")->required();
  s->add_option("--ratios", split_cmd.ratios, "train val test fractions")->expected(3)->delimiter(',');

  TrainCmd train_cmd;
  auto* t = app.add_subcommand("train", "Train a preset network from scratch");
  add_common(t, train_cmd.c);
  t->add_option("--preset", train_cmd.preset, "attractiveness or gender");
  t->add_option("--size", train_cmd.size, "Input image extent");
  t->add_option("--width-divisor", train_cmd.width_divisor, "Divide every layer width");
  train_cmd.data.add(t);
  train_cmd.flags.add(t);

  TransferCmd transfer_cmd;
  auto* tr = app.add_subcommand("transfer", "Fine-tune the last k layers of a checkpoint");
  add_common(tr, transfer_cmd.c);
  tr->add_option("--pretrained", transfer_cmd.pretrained, "Pretrained checkpoint")->required();
  tr->add_option("--last-k", transfer_cmd.last_k, "Layers to retrain (1-3)");
  transfer_cmd.data.add(tr);
  transfer_cmd.flags.add(tr);

  ExtractCmd extract_cmd;
  auto* ex = app.add_subcommand("extract-features", "Dump activations at a named layer");
  add_common(ex, extract_cmd.c);
  ex->add_option("--model", extract_cmd.model, "Checkpoint")->required();
  ex->add_option("--layer", extract_cmd.layer, "Layer name, e.g. fc2_relu");
  ex->add_option("--manifest", extract_cmd.manifest, "Manifest")->required();
  ex->add_option("--split", extract_cmd.split_name, "train, val or test");
  ex->add_option("--mean", extract_cmd.mean_path, "Mean image from the training run");
  ex->add_option("--pixel-scale", extract_cmd.pixel_scale, "Multiplier applied after mean subtraction");

  LogregCmd logreg_cmd;
  auto* lr = app.add_subcommand("train-logreg", "Fit logistic regression on feature files");
  add_common(lr, logreg_cmd.c);
  lr->add_option("--train", logreg_cmd.train_path, "Training features")->required();
  lr->add_option("--val", logreg_cmd.val_path, "Validation features")->required();
  logreg_cmd.flags.add(lr);

  EvaluateCmd eval_cmd;
  auto* ev = app.add_subcommand("evaluate", "Misclassification and confusion of a checkpoint");
  add_common(ev, eval_cmd.c);
  ev->add_option("--model", eval_cmd.model, "Checkpoint")->required();
  ev->add_option("--manifest", eval_cmd.manifest, "Manifest");
  ev->add_option("--features", eval_cmd.features, "Feature file (for logreg heads)");
  ev->add_option("--split", eval_cmd.split_name, "train, val or test");
  ev->add_option("--mean", eval_cmd.mean_path, "Mean image from the training run");
  ev->add_option("--pixel-scale", eval_cmd.pixel_scale, "Multiplier applied after mean subtraction");

  NoiseCmd noise_cmd;
  auto* ne = app.add_subcommand("noise-estimate", "Label noise from a relabeling session");
  add_common(ne, noise_cmd.c);
  ne->add_option("--n", noise_cmd.n, "Relabeled examples")->required();
  ne->add_option("--errors", noise_cmd.errors, "Disagreements")->required();
  ne->add_flag("--log", noise_cmd.write_log, "Also write run.txt to --out");

  SynthCmd synth_cmd;
  auto* sy = app.add_subcommand("synth", "Write a synthetic image set and manifest");
  add_common(sy, synth_cmd.c);
  sy->add_option("--n", synth_cmd.n, "Image count");
  sy->add_option("--noise", synth_cmd.noise, "Label flip rate in [0, 0.5)");
  sy->add_option("--size", synth_cmd.size, "Image extent");

  AuditCmd audit_cmd;
  auto* au = app.add_subcommand("audit", "Sample entries and tally their categories");
  add_common(au, audit_cmd.c);
  au->add_option("--manifest", audit_cmd.manifest, "Manifest")->required();
  au->add_option("--n", audit_cmd.n, "Sample size");

  ServeCmd serve_cmd;
  auto* sv = app.add_subcommand("serve", "Run the labeling HTTP service");
  add_common(sv, serve_cmd.c);
  sv->add_option("--manifest", serve_cmd.manifest, "Manifest to label")->required();
  sv->add_option("--model", serve_cmd.model, "Checkpoint for scores and uncertainty ordering");
  sv->add_option("--mean", serve_cmd.mean_path, "Mean image for the model");
  sv->add_option("--host", serve_cmd.host, "Bind address");
  sv->add_option("--port", serve_cmd.port, "Port");
  sv->add_option("--pixel-scale", serve_cmd.pixel_scale, "Multiplier applied after mean subtraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*s) split_cmd.run();
    else if (*t) train_cmd.run();
    else if (*tr) transfer_cmd.run();
    else if (*ex) extract_cmd.run();
    else if (*lr) logreg_cmd.run();
    else if (*ev) eval_cmd.run();
    else if (*ne) noise_cmd.run();
    else if (*sy) synth_cmd.run();
    else if (*au) audit_cmd.run();
    else if (*sv) serve_cmd.run();
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}

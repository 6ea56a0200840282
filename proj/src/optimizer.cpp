#include "prefnet/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "prefnet/error.hpp"
#include "prefnet/kernels.hpp"
#include "prefnet/network.hpp"

namespace prefnet {
namespace {

bool same_example_shape(const Shape& a, const Shape& b) { return a.c == b.c && a.h == b.h && a.w == b.w; }

// Runs the frozen prefix [0, end) once over a whole source.
InMemoryDataset cache_prefix(const Checkpoint& model, const ExampleSource& source, std::size_t end,
                             std::size_t batch_size) {
  const auto shapes = infer_shapes(model.spec);
  Shape out_shape = shapes[end - 1].out;
  out_shape.n = source.size();
  Tensor<float> features(out_shape);
  std::vector<int> labels(source.size());
  std::vector<std::string> ids(source.size());
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    const std::size_t stop = std::min(source.size(), start + batch_size);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<float> out = forward_range(model.spec, model.params, gather_batch(source, idx), 0, end);
    std::copy(out.ptr(), out.ptr() + out.size(), features.ptr() + start * out_shape.sample_size());
    for (auto i : idx) {
      labels[i] = source.label(i);
      ids[i] = source.id(i);
    }
  }
  return InMemoryDataset(std::move(features), std::move(labels), std::move(ids));
}

EvalResult evaluate_from(const Checkpoint& model, const ExampleSource& data, std::size_t begin,
                         std::size_t batch_size) {
  if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  const std::size_t classes = infer_shapes(model.spec).back().out.c;
  EvalResult result;
  result.count = data.size();
  result.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t wrong = 0;
  double nll = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t stop = std::min(data.size(), start + batch_size);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<float> probs = forward_range(model.spec, model.params, gather_batch(data, idx), begin);
    const auto predicted = argmax_rows(probs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const int truth = data.label(idx[b]);
      if (truth < 0 || static_cast<std::size_t>(truth) >= classes) {
        throw LabelError("example " + data.id(idx[b]) + " has label " + std::to_string(truth) +
                         " outside [0, " + std::to_string(classes) + ")");
      }
      ++result.confusion[truth][predicted[b]];
      if (predicted[b] != truth) ++wrong;
      const double p = std::max(static_cast<double>(probs[b * classes + truth]), 1e-30);
      nll -= std::log(p);
    }
  }
  result.misclassification = static_cast<double>(wrong) / static_cast<double>(data.size());
  result.accuracy = 1.0 - result.misclassification;
  result.mean_nll = nll / static_cast<double>(data.size());
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

TrainConfig attractiveness_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 0.001;
  cfg.momentum = 0.9;
  cfg.l2 = 0.001;
  cfg.epochs = 50;
  cfg.batch_size = 128;
  cfg.dropout_enabled = true;
  return cfg;
}

TrainConfig gender_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 0.001;
  cfg.momentum = 0.9;
  cfg.l2 = 0.0001;
  cfg.epochs = 13;
  cfg.batch_size = 50;
  cfg.dropout_enabled = true;
  return cfg;
}

std::string curves_to_csv(const CurveLog& log) {
  std::string out = "epoch,train_err,val_err\n";
  char line[96];
  for (const auto& r : log.records) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f\n", r.epoch, r.train_err, r.val_err);
    out += line;
  }
  return out;
}

CurveLog curves_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_err,val_err") {
    throw FormatError("curve CSV must start with the header 'epoch,train_err,val_err'");
  }
  CurveLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    CurveRecord r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf%c", &r.epoch, &r.train_err, &r.val_err, &tail) != 3) {
      throw FormatError("curve CSV line " + std::to_string(line_no) + " is malformed: " + line);
    }
    if (!log.records.empty() && r.epoch <= log.records.back().epoch) {
      throw FormatError("curve CSV epochs must be strictly increasing (line " + std::to_string(line_no) + ")");
    }
    log.records.push_back(r);
  }
  return log;
}

void write_curves(const CurveLog& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << curves_to_csv(log);
}

CurveLog read_curves(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return curves_from_csv(ss.str());
}

ParamSet zero_velocity(const ModelSpec& spec, const ParamSet& params) {
  ParamSet v(params.size());
  for (std::size_t i : parameterized_layers(spec)) {
    v[i].weights = Tensor<float>(params[i].weights.shape(), 0.0f);
    v[i].bias = Tensor<float>(params[i].bias.shape(), 0.0f);
  }
  return v;
}

void sgd_step(const ModelSpec& spec, ParamSet& params, const ParamSet& grads, ParamSet& velocity,
              const FreezeMask& mask, const TrainConfig& cfg) {
  const auto groups = param_groups(spec);
  if (mask.trainable.size() != groups.size()) {
    throw ShapeError("freeze mask has " + std::to_string(mask.trainable.size()) + " flags for " +
                     std::to_string(groups.size()) + " parameter groups");
  }
  if (params.size() != spec.layers.size() || grads.size() != params.size() || velocity.size() != params.size()) {
    throw ShapeError("parameter, gradient and velocity sets must cover every layer");
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (!mask.trainable[gi]) continue;
    const auto& g = groups[gi];
    Tensor<float>& w = g.is_bias ? params[g.layer].bias : params[g.layer].weights;
    const Tensor<float>& dw = g.is_bias ? grads[g.layer].bias : grads[g.layer].weights;
    Tensor<float>& v = g.is_bias ? velocity[g.layer].bias : velocity[g.layer].weights;
    if (v.empty() && !w.empty()) v = Tensor<float>(w.shape(), 0.0f);
    if (dw.shape() != w.shape() || v.shape() != w.shape()) {
      throw ShapeError("layer " + std::to_string(g.layer) + (g.is_bias ? " bias" : " weights") +
                       ": parameter " + w.shape().str() + ", gradient " + dw.shape().str() + ", velocity " +
                       v.shape().str());
    }
    kernels::SgdArgs args;
    args.lr = static_cast<float>(cfg.learning_rate);
    args.momentum = static_cast<float>(cfg.momentum);
    args.decay = g.is_bias ? 0.0f : static_cast<float>(2.0 * cfg.l2);
    kernels::sgd_momentum(w.size(), args, w.ptr(), dw.ptr(), v.ptr());
  }
}

TrainResult train(const Checkpoint& model, const FreezeMask& mask, const ExampleSource& train_set,
                  const ExampleSource& val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  validate_params(model.spec, model.params);
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (val_set.size() == 0) throw DataError("validation set is empty");
  if (!same_example_shape(train_set.example_shape(), model.spec.input) ||
      !same_example_shape(val_set.example_shape(), model.spec.input)) {
    throw ShapeError("dataset examples " + train_set.example_shape().str() + " do not match model input " +
                     model.spec.input.str());
  }
  if (mask.trainable.size() != param_groups(model.spec).size() || !mask.any()) {
    throw ConfigError("freeze mask must match the model and leave at least one group trainable");
  }

  TrainResult result;
  result.best = model;
  result.final_model = model;
  if (cfg.epochs == 0) return result;
  if (cfg.batch_size > train_set.size()) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the " +
                      std::to_string(train_set.size()) + " training examples");
  }

  // A frozen prefix without active dropout is a fixed function of the input,
  // so its output is computed once and reused every epoch.
  const std::size_t first = first_trainable_layer(model.spec, mask);
  bool cacheable = first > 0;
  for (std::size_t i = 0; i < first && cacheable; ++i) {
    if (const auto* d = std::get_if<Dropout>(&model.spec.layers[i])) {
      if (cfg.dropout_enabled && d->p > 0.0) cacheable = false;
    }
  }
  std::size_t begin = 0;
  InMemoryDataset train_cache;
  InMemoryDataset val_cache;
  const ExampleSource* train_src = &train_set;
  const ExampleSource* val_src = &val_set;
  if (cacheable) {
    begin = first;
    train_cache = cache_prefix(model, train_set, first, 64);
    val_cache = cache_prefix(model, val_set, first, 64);
    train_src = &train_cache;
    val_src = &val_cache;
  }

  Checkpoint current = model;
  ParamSet velocity(model.params.size());  // filled lazily for trainable groups
  Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  Rng dropout_rng = Rng::stream(cfg.seed, "dropout");
  std::vector<std::size_t> order(train_src->size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = 2.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_rng.shuffle(std::span<std::size_t>(order));
    std::size_t wrong = 0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto labels = gather_labels(*train_src, idx);
      auto step = compute_gradients(current.spec, current.params, mask, gather_batch(*train_src, idx), labels,
                                    cfg.dropout_enabled, dropout_rng, begin);
      if (!std::isfinite(step.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no + 1));
      }
      result.step_losses.push_back(step.loss);
      wrong += idx.size() - step.correct;
      seen += idx.size();
      sgd_step(current.spec, current.params, step.grads, velocity, mask, cfg);
    }

    CurveRecord rec;
    rec.epoch = epoch;
    rec.train_err = static_cast<double>(wrong) / static_cast<double>(seen);
    rec.val_err = evaluate_from(current, *val_src, begin, 64).misclassification;
    result.curves.records.push_back(rec);

    current.meta.epoch = epoch;
    current.meta.train_err = rec.train_err;
    current.meta.val_err = rec.val_err;
    current.meta.seed = cfg.seed;
    if (rec.val_err < best_val) {
      best_val = rec.val_err;
      result.best = current;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec, current);
  }
  result.final_model = std::move(current);
  return result;
}

std::size_t select_early_stop(const CurveLog& curves) {
  if (curves.empty()) throw DataError("cannot early-stop on an empty curve log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curves.records.size(); ++i) {
    if (curves.records[i].val_err < curves.records[best].val_err) best = i;
  }
  return curves.records[best].epoch;
}

const Checkpoint& select_early_stop(const CurveLog& curves, const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.size() != curves.size()) {
    throw ShapeError("need one checkpoint per curve record (" + std::to_string(curves.size()) + "), got " +
                     std::to_string(checkpoints.size()));
  }
  const std::size_t epoch = select_early_stop(curves);
  for (std::size_t i = 0; i < curves.records.size(); ++i) {
    if (curves.records[i].epoch == epoch) return checkpoints[i];
  }
  return checkpoints.front();
}

EvalResult evaluate(const Checkpoint& model, const ExampleSource& data, std::size_t batch_size) {
  if (!same_example_shape(data.example_shape(), model.spec.input) && data.size() > 0) {
    throw ShapeError("dataset examples " + data.example_shape().str() + " do not match model input " +
                     model.spec.input.str());
  }
  return evaluate_from(model, data, 0, std::max<std::size_t>(1, batch_size));
}

}  // namespace prefnet

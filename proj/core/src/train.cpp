#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "text_util.hpp"
#include "wsloc/harness.hpp"
#include "wsloc/rng.hpp"

namespace wsloc {

namespace {

const std::vector<std::string> kTrainKeys = {
    "learning_rate", "batch_size", "max_epochs", "patience",   "min_delta",    "seed",
    "split_seed",    "adam_beta1", "adam_beta2", "adam_epsilon", "head",       "input_size",
    "widths",        "pooling_m",  "pooling_c",  "pooling_k",  "pooling_alpha"};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Adam {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, const TrainConfig& c) {
    ++t;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    const double step = c.learning_rate / bc1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
      params[i] -= step * m[i] / (std::sqrt(v[i] / bc2) + c.epsilon);
    }
  }
};

bool has_both_classes(std::span<const AnnotatedSample> samples) {
  bool pos = false;
  bool neg = false;
  for (const auto& s : samples) (s.label == 1 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("learning_rate must be finite and non-negative");
  }
  if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
  if (max_epochs < 1) throw InvalidInput("max_epochs must be at least 1");
  if (patience < 1) throw InvalidInput("patience must be at least 1");
  if (!(min_delta >= 0.0)) throw InvalidInput("min_delta must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw InvalidInput("Adam needs betas in [0, 1) and epsilon > 0");
  }
  network.validate();
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  c.set("learning_rate", text::format_double(learning_rate));
  c.set("batch_size", std::to_string(batch_size));
  c.set("max_epochs", std::to_string(max_epochs));
  c.set("patience", std::to_string(patience));
  c.set("min_delta", text::format_double(min_delta));
  c.set("seed", std::to_string(seed));
  c.set("split_seed", std::to_string(split_seed));
  c.set("adam_beta1", text::format_double(beta1));
  c.set("adam_beta2", text::format_double(beta2));
  c.set("adam_epsilon", text::format_double(epsilon));
  c.set("head", std::string(wsloc::to_string(network.head)));
  c.set("input_size", std::to_string(network.input_size));
  std::string widths;
  for (int w : network.widths) widths += (widths.empty() ? "" : ", ") + std::to_string(w);
  c.set("widths", widths);
  c.set("pooling_m", std::to_string(network.pooling.maps_per_class));
  c.set("pooling_c", std::to_string(network.pooling.classes));
  c.set("pooling_k", network.pooling.k.to_string());
  c.set("pooling_alpha", text::format_double(network.pooling.alpha));
  return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c, bool apply_env) {
  const auto unknown = c.unknown_keys(kTrainKeys);
  if (!unknown.empty()) throw InvalidInput("unknown training config key '" + unknown.front() + "'");
  TrainConfig t;
  t.learning_rate = c.get_double("learning_rate", t.learning_rate);
  t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
  t.max_epochs = static_cast<int>(c.get_int("max_epochs", t.max_epochs));
  t.patience = static_cast<int>(c.get_int("patience", t.patience));
  t.min_delta = c.get_double("min_delta", t.min_delta);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  t.split_seed = static_cast<std::uint64_t>(c.get_int("split_seed", 0));
  t.beta1 = c.get_double("adam_beta1", t.beta1);
  t.beta2 = c.get_double("adam_beta2", t.beta2);
  t.epsilon = c.get_double("adam_epsilon", t.epsilon);
  t.network.head = parse_head_kind(c.get_string("head", "baseline"));
  t.network.input_size = static_cast<int>(c.get_int("input_size", t.network.input_size));
  if (c.has("widths")) {
    const auto widths = c.get_int_list("widths");
    if (widths.size() != t.network.widths.size()) {
      throw InvalidInput("widths needs " + std::to_string(t.network.widths.size()) + " entries");
    }
    for (std::size_t i = 0; i < widths.size(); ++i) t.network.widths[i] = static_cast<int>(widths[i]);
  }
  t.network.pooling.maps_per_class = static_cast<int>(c.get_int("pooling_m", 1));
  t.network.pooling.classes = static_cast<int>(c.get_int("pooling_c", 1));
  t.network.pooling.k = PoolSize::parse(c.get_string("pooling_k", "1"));
  t.network.pooling.alpha = c.get_double("pooling_alpha", 0.0);
  if (apply_env) {
    if (const auto s = seed_override()) t.seed = *s;
  }
  t.validate();
  return t;
}

std::string TrainConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(to_config().to_string())));
  return buf;
}

std::optional<std::uint64_t> seed_override() {
  const char* env = std::getenv("WSLOC_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  const auto v = text::parse_int(env);
  if (!v || *v < 0) throw InvalidInput(std::string("WSLOC_SEED must be a non-negative integer, got '") + env + "'");
  return static_cast<std::uint64_t>(*v);
}

const EpochRecord& RunRecord::best() const {
  for (const auto& e : epochs) {
    if (e.epoch == best_epoch) return e;
  }
  throw InvalidInput("run record has no entry for its best epoch");
}

SplitData materialize(std::span<const AnnotatedSample> samples, const DatasetSplit& split) {
  return SplitData{select_samples(samples, split.train), select_samples(samples, split.val),
                   select_samples(samples, split.test)};
}

std::vector<double> predict(const Network& model, std::span<const AnnotatedSample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    validate_image(s.image, model.downsample_factor());
    const ModelOutput o = model.forward(s.image.pixels);
    out.push_back(logistic(o.logits.at(model.positive_output())));
  }
  return out;
}

double mean_bce(std::span<const double> probabilities, std::span<const AnnotatedSample> samples) {
  if (probabilities.size() != samples.size() || samples.empty()) {
    throw InvalidInput("mean_bce: need one probability per sample");
  }
  constexpr double kFloor = 1e-15;
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double p = std::clamp(probabilities[i], kFloor, 1.0 - kFloor);
    sum -= samples[i].label == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(samples.size());
}

double auc_or_nan(std::span<const double> probabilities, std::span<const AnnotatedSample> samples) {
  if (!has_both_classes(samples)) return std::numeric_limits<double>::quiet_NaN();
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return roc_auc(labels, probabilities);
}

TrainResult train(const TrainConfig& config, const SplitData& data) {
  config.validate();
  if (data.train.empty() || data.val.empty()) throw InvalidInput("train and val splits must be nonempty");
  if (!has_both_classes(data.train) || !has_both_classes(data.val)) {
    throw InvalidInput("train and val splits must contain both classes");
  }
  Network model(config.network);
  model.initialize(config.seed);
  for (const auto& s : data.train) validate_image(s.image, model.downsample_factor());

  RunRecord record;
  record.config = config;
  record.run_id = config.hash();

  auto evaluate_epoch = [&](int epoch, double train_loss) {
    const auto probs = predict(model, data.val);
    EpochRecord e{epoch, train_loss, mean_bce(probs, data.val), auc_or_nan(probs, data.val)};
    record.epochs.push_back(e);
    return e;
  };

  const EpochRecord initial = evaluate_epoch(0, mean_bce(predict(model, data.train), data.train));
  double best_loss = initial.val_loss;
  double reference_loss = initial.val_loss;  // last loss that counted as an improvement
  std::vector<double> best_params(model.parameters().begin(), model.parameters().end());
  int stale = 0;

  Adam adam(model.parameters().size());
  std::vector<double> grad(model.parameters().size());
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, 0x5eed7a1));
  record.stop_reason = "max_epochs";

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data.train[order[i]];
        loss_sum += model.accumulate_loss_gradient(s.image.pixels, s.label, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      adam.step(model.parameters(), grad, config);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(train_loss) || !all_finite(model.parameters())) {
      record.epochs.push_back({epoch, train_loss, std::numeric_limits<double>::quiet_NaN(),
                               std::numeric_limits<double>::quiet_NaN()});
      record.diverged = true;
      record.stop_reason = "diverged";
      break;
    }
    const EpochRecord e = evaluate_epoch(epoch, train_loss);
    if (!std::isfinite(e.val_loss)) {
      record.diverged = true;
      record.stop_reason = "diverged";
      break;
    }
    if (e.val_loss < best_loss) {
      best_loss = e.val_loss;
      record.best_epoch = epoch;
      std::copy(model.parameters().begin(), model.parameters().end(), best_params.begin());
    }
    if (e.val_loss <= reference_loss - config.min_delta) {
      reference_loss = e.val_loss;
      stale = 0;
    } else if (++stale >= config.patience) {
      record.stop_reason = "early_stopping";
      break;
    }
  }

  std::copy(best_params.begin(), best_params.end(), model.parameters().begin());
  record.val_auc = record.best().val_auc;
  record.test_auc = data.test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : auc_or_nan(predict(model, data.test), data.test);
  return TrainResult{std::move(record), std::move(model)};
}

const RunRecord& select_best(std::span<const RunRecord> records) {
  if (records.empty()) throw InvalidInput("select_best needs at least one record");
  std::size_t best = 0;
  auto key = [](const RunRecord& r) { return std::isnan(r.val_auc) ? -1.0 : r.val_auc; };
  for (std::size_t i = 1; i < records.size(); ++i) {
    const double a = key(records[i]);
    const double b = key(records[best]);
    if (a > b || (a == b && records[i].run_id < records[best].run_id)) best = i;
  }
  return records[best];
}

}  // namespace wsloc

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "text_util.hpp"
#include "wsloc/harness.hpp"

namespace wsloc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kCheckpointMagic = "wsloc-checkpoint 1";

ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double number_from(const ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

ordered_json config_json(const KeyValueConfig& config) {
  ordered_json out = ordered_json::object();
  for (const auto& [key, value] : config.entries()) out[key] = value;
  return out;
}

ordered_json metric_json(const MetricReport& r) {
  ordered_json j;
  j["metric"] = r.metric;
  j["value"] = number(r.value);
  j["images"] = r.per_image.size();
  j["excluded"] = r.excluded;
  ordered_json config = ordered_json::object();
  for (const auto& [k, v] : r.config) config[k] = v;
  j["config"] = config;
  ordered_json rows = ordered_json::array();
  for (const auto& p : r.per_image) rows.push_back({{"image_id", p.image_id}, {"value", number(p.value)}});
  j["per_image"] = rows;
  return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& model, const TrainConfig& config) {
  if (config.network.architecture() != model.architecture() || config.network.head != model.spec().head ||
      !(config.network.pooling == model.spec().pooling) || config.network.input_size != model.spec().input_size) {
    throw InvalidInput("checkpoint config does not describe the model");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write checkpoint '" + path + "'");
  const auto params = model.parameters();
  out << kCheckpointMagic << '\n'
      << "architecture = " << model.architecture() << '\n'
      << "parameters = " << params.size() << '\n'
      << config.to_config().to_string() << "end\n";
  std::vector<char> bytes(params.size() * 8);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(params[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw ParseError(path, 1, "not a wsloc checkpoint");
  }
  std::string header;
  std::size_t line_no = 1;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "end") {
      ended = true;
      break;
    }
    header += line + '\n';
  }
  if (!ended) throw ParseError(path, line_no, "header has no 'end' line");
  KeyValueConfig fields = KeyValueConfig::parse(header, path);
  const std::string architecture = fields.get_string("architecture", "");
  const long long count = fields.get_int("parameters", -1);
  KeyValueConfig train_fields;
  for (const auto& [k, v] : fields.entries()) {
    if (k != "architecture" && k != "parameters") train_fields.set(k, v);
  }
  TrainConfig config = TrainConfig::from_config(train_fields, false);
  Network model(config.network);
  if (architecture != model.architecture()) {
    throw InvalidInput("checkpoint architecture '" + architecture + "' does not match its config ('" +
                       model.architecture() + "')");
  }
  if (count != static_cast<long long>(model.parameters().size())) {
    throw InvalidInput("checkpoint holds " + std::to_string(count) + " parameters, model needs " +
                       std::to_string(model.parameters().size()));
  }
  std::vector<char> bytes(static_cast<std::size_t>(count) * 8);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw InvalidInput("checkpoint '" + path + "' is truncated");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("checkpoint '" + path + "' has trailing bytes");
  }
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    params[i] = std::bit_cast<double>(bits);
  }
  return LoadedCheckpoint{std::move(model), std::move(config)};
}

std::string run_record_json(const RunRecord& r) {
  ordered_json j;
  j["run_id"] = r.run_id;
  j["config"] = config_json(r.config.to_config());
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", number(e.train_loss)},
                      {"val_loss", number(e.val_loss)},
                      {"val_auc", number(e.val_auc)}});
  }
  j["epochs"] = epochs;
  j["best_epoch"] = r.best_epoch;
  j["val_auc"] = number(r.val_auc);
  j["test_auc"] = number(r.test_auc);
  j["diverged"] = r.diverged;
  j["stop_reason"] = r.stop_reason;
  j["checkpoint"] = r.checkpoint_path;
  ordered_json metrics = ordered_json::object();
  for (const auto& [k, v] : r.test_metrics) metrics[k] = number(v);
  j["test_metrics"] = metrics;
  return j.dump(2) + "\n";
}

RunRecord parse_run_record_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    KeyValueConfig config;
    for (const auto& [k, v] : j.at("config").items()) config.set(k, v.get<std::string>());
    r.config = TrainConfig::from_config(config, false);
    for (const auto& e : j.at("epochs")) {
      r.epochs.push_back({e.at("epoch").get<int>(), number_from(e.at("train_loss")),
                          number_from(e.at("val_loss")), number_from(e.at("val_auc"))});
    }
    r.best_epoch = j.at("best_epoch").get<int>();
    r.val_auc = number_from(j.at("val_auc"));
    r.test_auc = number_from(j.at("test_auc"));
    r.diverged = j.at("diverged").get<bool>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    r.checkpoint_path = j.at("checkpoint").get<std::string>();
    for (const auto& [k, v] : j.at("test_metrics").items()) r.test_metrics[k] = number_from(v);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed run record: ") + e.what());
  }
}

std::string metric_report_json(const MetricReport& report) { return metric_json(report).dump(2) + "\n"; }

std::string report_json(const EvaluationReport& report) {
  ordered_json j;
  j["run_id"] = report.run_id;
  j["architecture"] = report.architecture;
  j["head"] = report.head;
  ordered_json summary = ordered_json::object();
  for (const auto& m : report.metrics) summary[m.metric] = number(m.value);
  j["summary"] = summary;
  ordered_json metrics = ordered_json::array();
  for (const auto& m : report.metrics) metrics.push_back(metric_json(m));
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "metric,image_id,value\n";
  auto fmt = [](double v) { return std::isfinite(v) ? text::format_double(v) : std::string(); };
  for (const auto& m : report.metrics) {
    os << m.metric << ",," << fmt(m.value) << '\n';
    for (const auto& p : m.per_image) os << m.metric << ',' << p.image_id << ',' << fmt(p.value) << '\n';
  }
  return os.str();
}

}  // namespace wsloc

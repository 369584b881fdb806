#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "text_util.hpp"
#include "wsloc/harness.hpp"

namespace wsloc {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kGridKeys = {
    "learning_rates", "k",          "alpha",      "m",           "seeds",
    "heads",          "batch_size", "max_epochs", "patience",    "min_delta",
    "split_seed",     "input_size", "widths",     "adam_beta1",  "adam_beta2",
    "adam_epsilon"};

std::string fmt(double v) { return std::isfinite(v) ? text::format_double(v) : std::string(); }

std::string read_text(const fs::path& path) {
  const Bytes bytes = read_file(path.string());
  return std::string(bytes.begin(), bytes.end());
}

std::optional<RunRecord> try_resume(const fs::path& record_path, const std::string& run_id) {
  if (!fs::exists(record_path)) return std::nullopt;
  try {
    RunRecord r = parse_run_record_json(read_text(record_path));
    if (r.run_id != run_id || r.config.hash() != run_id) return std::nullopt;
    if (r.checkpoint_path.empty() || !fs::exists(r.checkpoint_path)) return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable record: retrain
  }
}

void add_localization_metrics(RunRecord& record, const Network& model, const SplitData& data) {
  if (record.config.network.head != HeadKind::modified || data.test.empty()) return;
  const EvaluationReport report = evaluate(model, record.run_id, data.test, EvaluationOptions{});
  for (const auto& m : report.metrics) {
    if (m.metric != "auc") record.test_metrics[m.metric] = m.value;
  }
}

nlohmann::ordered_json run_row(const RunRecord& r) {
  const auto& net = r.config.network;
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["head"] = std::string(to_string(net.head));
  j["learning_rate"] = r.config.learning_rate;
  if (net.head == HeadKind::modified) {
    j["k"] = net.pooling.k.to_string();
    j["alpha"] = net.pooling.alpha;
    j["m"] = net.pooling.maps_per_class;
  }
  j["seed"] = r.config.seed;
  j["epochs"] = r.epochs.empty() ? 0 : r.epochs.back().epoch;
  j["best_epoch"] = r.best_epoch;
  auto number = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  j["val_auc"] = number(r.val_auc);
  j["test_auc"] = number(r.test_auc);
  for (const auto& [k, v] : r.test_metrics) j[k] = number(v);
  j["stop_reason"] = r.stop_reason;
  return j;
}

}  // namespace

void SweepGrid::validate() const {
  if (learning_rates.empty() || seeds.empty() || heads.empty()) {
    throw InvalidInput("sweep grid needs nonempty learning_rates, seeds and heads");
  }
  const bool modified = std::find(heads.begin(), heads.end(), HeadKind::modified) != heads.end();
  if (modified && (ks.empty() || alphas.empty() || maps_per_class.empty())) {
    throw InvalidInput("sweep grid needs nonempty k, alpha and m for the modified head");
  }
  for (const auto& c : expand()) c.validate();
}

std::vector<TrainConfig> SweepGrid::expand() const {
  std::vector<TrainConfig> out;
  for (const HeadKind head : heads) {
    for (const double lr : learning_rates) {
      if (head == HeadKind::baseline) {
        for (const auto seed : seeds) {
          TrainConfig c = base;
          c.learning_rate = lr;
          c.seed = seed;
          c.network.head = head;
          c.network.pooling = PoolingConfig{};
          out.push_back(c);
        }
        continue;
      }
      for (const auto& k : ks) {
        for (const double alpha : alphas) {
          for (const int m : maps_per_class) {
            for (const auto seed : seeds) {
              TrainConfig c = base;
              c.learning_rate = lr;
              c.seed = seed;
              c.network.head = head;
              c.network.pooling.k = k;
              c.network.pooling.alpha = alpha;
              c.network.pooling.maps_per_class = m;
              out.push_back(c);
            }
          }
        }
      }
    }
  }
  return out;
}

SweepGrid SweepGrid::from_config(const KeyValueConfig& config) {
  const auto unknown = config.unknown_keys(kGridKeys);
  if (!unknown.empty()) throw InvalidInput("unknown grid config key '" + unknown.front() + "'");
  SweepGrid grid;
  KeyValueConfig shared;
  for (const auto& [key, value] : config.entries()) {
    if (key == "batch_size" || key == "max_epochs" || key == "patience" || key == "min_delta" ||
        key == "split_seed" || key == "input_size" || key == "widths" || key.rfind("adam_", 0) == 0) {
      shared.set(key, value);
    }
  }
  grid.base = TrainConfig::from_config(shared, false);
  if (config.has("learning_rates")) grid.learning_rates = config.get_double_list("learning_rates");
  if (config.has("k")) {
    grid.ks.clear();
    for (const auto& item : config.get_list("k")) grid.ks.push_back(PoolSize::parse(item));
  }
  if (config.has("alpha")) grid.alphas = config.get_double_list("alpha");
  if (config.has("m")) {
    grid.maps_per_class.clear();
    for (const auto v : config.get_int_list("m")) grid.maps_per_class.push_back(static_cast<int>(v));
  }
  if (config.has("seeds")) {
    grid.seeds.clear();
    for (const auto v : config.get_int_list("seeds")) {
      if (v < 0) throw InvalidInput("seeds must be non-negative");
      grid.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (config.has("heads")) {
    grid.heads.clear();
    for (const auto& item : config.get_list("heads")) grid.heads.push_back(parse_head_kind(item));
  }
  if (const auto s = seed_override()) grid.seeds = {*s};
  grid.validate();
  return grid;
}

SweepSummary sweep(const SweepGrid& grid, const SplitData& data, const SweepOptions& options) {
  grid.validate();
  if (options.out_dir.empty()) throw InvalidInput("sweep needs an output directory");
  const fs::path root(options.out_dir);
  fs::create_directories(root / "runs");
  fs::create_directories(root / "checkpoints");

  const std::vector<TrainConfig> configs = grid.expand();
  SweepSummary summary;
  summary.runs.resize(configs.size());
  std::vector<char> resumed(configs.size(), 0);

  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        const std::string id = configs[i].hash();
        const fs::path record_path = root / "runs" / (id + ".json");
        std::optional<RunRecord> record;
        if (options.resume) record = try_resume(record_path, id);
        if (record) {
          resumed[i] = 1;
        } else {
          TrainResult result = train(configs[i], data);
          result.record.checkpoint_path = (root / "checkpoints" / (id + ".ckpt")).string();
          save_checkpoint(result.record.checkpoint_path, result.model, configs[i]);
          add_localization_metrics(result.record, result.model, data);
          write_file(record_path.string(), run_record_json(result.record));
          record = std::move(result.record);
        }
        summary.runs[i] = std::move(*record);
        if (options.on_run) {
          std::lock_guard lock(mutex);
          options.on_run(summary.runs[i], resumed[i] != 0);
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        next.store(configs.size());
        return;
      }
    }
  };

  int workers = options.workers > 0 ? options.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, static_cast<int>(configs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  summary.resumed = static_cast<std::size_t>(std::count(resumed.begin(), resumed.end(), 1));
  summary.trained = configs.size() - summary.resumed;

  std::vector<RunRecord> baseline;
  std::vector<RunRecord> modified;
  std::vector<std::size_t> baseline_index;
  std::vector<std::size_t> modified_index;
  for (std::size_t i = 0; i < summary.runs.size(); ++i) {
    const bool is_modified = summary.runs[i].config.network.head == HeadKind::modified;
    (is_modified ? modified : baseline).push_back(summary.runs[i]);
    (is_modified ? modified_index : baseline_index).push_back(i);
  }
  auto locate = [](const std::vector<RunRecord>& runs, const std::vector<std::size_t>& index) {
    const RunRecord& best = select_best(runs);
    return index[static_cast<std::size_t>(&best - runs.data())];
  };
  if (!baseline.empty()) summary.best_baseline = locate(baseline, baseline_index);
  if (!modified.empty()) summary.best_modified = locate(modified, modified_index);

  std::ostringstream csv;
  csv << "run_id,head,learning_rate,k,alpha,m,seed,epochs,best_epoch,val_auc,test_auc,pointwise_ap,"
         "utility_CLASSWISE,stop_reason\n";
  for (const auto& r : summary.runs) {
    const auto& net = r.config.network;
    const bool is_modified = net.head == HeadKind::modified;
    auto metric = [&](const char* name) {
      auto it = r.test_metrics.find(name);
      return it == r.test_metrics.end() ? std::string() : fmt(it->second);
    };
    csv << r.run_id << ',' << to_string(net.head) << ',' << fmt(r.config.learning_rate) << ','
        << (is_modified ? net.pooling.k.to_string() : "") << ','
        << (is_modified ? fmt(net.pooling.alpha) : "") << ','
        << (is_modified ? std::to_string(net.pooling.maps_per_class) : "") << ',' << r.config.seed << ','
        << (r.epochs.empty() ? 0 : r.epochs.back().epoch) << ',' << r.best_epoch << ',' << fmt(r.val_auc)
        << ',' << fmt(r.test_auc) << ',' << metric("pointwise_ap") << ',' << metric("utility_CLASSWISE")
        << ',' << r.stop_reason << '\n';
  }
  summary.summary_csv = csv.str();

  nlohmann::ordered_json j;
  j["runs"] = summary.runs.size();
  j["selection"] = "max val_auc, ties to the lower run_id";
  if (summary.best_baseline) j["best_baseline"] = run_row(summary.runs[*summary.best_baseline]);
  if (summary.best_modified) {
    const RunRecord& best = summary.runs[*summary.best_modified];
    j["best_modified"] = run_row(best);
    j["best_k"] = best.config.network.pooling.k.to_string();
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : summary.runs) rows.push_back(run_row(r));
  j["rows"] = rows;
  summary.summary_json = j.dump(2) + "\n";

  write_file((root / "summary.csv").string(), summary.summary_csv);
  write_file((root / "summary.json").string(), summary.summary_json);
  return summary;
}

}  // namespace wsloc

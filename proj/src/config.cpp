#include "fedkd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fedkd/error.hpp"

namespace fedkd {
namespace {

using nlohmann::json;

// Collects problems instead of throwing on the first one.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  // Keys of `obj` not in `allowed` are reported under `where`.
  void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
      problems_.push_back(where + ": expected an object");
      return;
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
        problems_.push_back("unknown key '" + qualify(where, it.key()) + "'");
      }
    }
  }

  template <typename T>
  void get(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned())) {
          problems_.push_back(qualify(where, key) + ": expected a non-negative integer");
          return;
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) {
          problems_.push_back(qualify(where, key) + ": expected a number");
          return;
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) {
          problems_.push_back(qualify(where, key) + ": expected a string");
          return;
        }
      }
      out = v.get<T>();
    } catch (const json::exception&) {
      problems_.push_back(qualify(where, key) + ": wrong type");
    }
  }

  void strings(const json& obj, const std::string& where, const char* key, std::vector<std::string>& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
      problems_.push_back(qualify(where, key) + ": expected an array of strings");
      return;
    }
    out = v.get<std::vector<std::string>>();
  }

  void link(const json& obj, const std::string& where, const char* key, LinkModel& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string w = qualify(where, key);
    check_keys(v, w, {"latency", "bandwidth"});
    get(v, w, "latency", out.latency);
    get(v, w, "bandwidth", out.bandwidth);
  }

 private:
  static std::string qualify(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }
  std::vector<std::string>& problems_;
};

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<TopologyMode> parse_mode(const std::string& s) {
  if (s == "hier" || s == "hierarchical") return TopologyMode::Hierarchical;
  if (s == "central" || s == "centralised" || s == "centralized") return TopologyMode::Centralised;
  return std::nullopt;
}

json link_json(const LinkModel& l) { return {{"latency", l.latency}, {"bandwidth", l.bandwidth}}; }

void throw_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid config (" << problems.size() << " problem" << (problems.size() == 1 ? "" : "s") << "):";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ConfigError(os.str());
}

}  // namespace

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::Synth: return "synth";
    case DataSource::Csv: return "csv";
    case DataSource::Cache: return "cache";
  }
  return "?";
}

bool RunConfig::wants(std::string_view format) const {
  return std::find(formats.begin(), formats.end(), format) != formats.end();
}

std::vector<std::string> RunConfig::problems() const {
  auto p = experiment.problems();
  if (source == DataSource::Synth) {
    if (synth.samples_per_class < 1) p.push_back("data.synth.samples_per_class must be >= 1");
    if (!(synth.class_separation >= 0.0)) p.push_back("data.synth.class_separation must be >= 0");
    if (!(synth.noise_std >= 0.0)) p.push_back("data.synth.noise_std must be >= 0");
    const std::size_t rows = synth.num_classes * synth.samples_per_class;
    const std::size_t shards = experiment.topology.num_clients + experiment.public_shards;
    if (rows * (1.0 - test_fraction) < static_cast<double>(shards)) {
      p.push_back("data.synth: too few training rows for " + std::to_string(shards) + " shards");
    }
  }
  if (source == DataSource::Csv && csv.path.empty()) p.push_back("data.csv.path must be set");
  if (source == DataSource::Csv &&
      !(csv.schema.max_bad_row_fraction >= 0.0 && csv.schema.max_bad_row_fraction <= 1.0)) {
    p.push_back("data.csv.max_bad_row_fraction must lie in [0, 1]");
  }
  if (source == DataSource::Cache && cache_dir.empty()) p.push_back("data.cache.dir must be set");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) p.push_back("data.test_fraction must lie in (0, 1)");
  if (subsample && *subsample == 0) p.push_back("data.subsample must be >= 1 or \"none\"");
  if (out_dir.empty()) p.push_back("output.dir must be set");
  std::set<std::string> seen;
  for (const auto& f : formats) {
    if (f != "json" && f != "text" && f != "csv") p.push_back("output.formats: unknown format '" + f + "'");
    if (!seen.insert(f).second) p.push_back("output.formats: duplicate format '" + f + "'");
  }
  return p;
}

RunConfig parse_config(std::string_view text) {
  json root;
  if (!blank(text)) {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  } else {
    root = json::object();
  }
  std::vector<std::string> problems;
  Reader rd(problems);
  RunConfig cfg;
  ExperimentConfig& ex = cfg.experiment;
  rd.check_keys(root, "", {"seed", "rounds", "local_epochs", "batch_size", "learning_rate", "alpha",
                           "temperature", "eval_every", "accuracy_threshold", "averaging", "threads",
                           "mode", "clients", "clusters", "cluster_assignment", "input_length",
                           "public_shards", "teacher", "links", "data", "output"});
  if (!root.is_object()) throw_problems(problems);

  rd.get(root, "", "seed", ex.seed);
  rd.get(root, "", "rounds", ex.rounds);
  rd.get(root, "", "local_epochs", ex.local_epochs);
  rd.get(root, "", "batch_size", ex.batch_size);
  rd.get(root, "", "learning_rate", ex.learning_rate);
  rd.get(root, "", "alpha", ex.distill.alpha);
  rd.get(root, "", "temperature", ex.distill.temperature);
  rd.get(root, "", "eval_every", ex.eval_every);
  rd.get(root, "", "accuracy_threshold", ex.accuracy_threshold);
  rd.get(root, "", "threads", ex.threads);
  rd.get(root, "", "input_length", ex.input_length);
  rd.get(root, "", "public_shards", ex.public_shards);

  std::string averaging = "weighted";
  rd.get(root, "", "averaging", averaging);
  if (averaging == "weighted") {
    ex.averaging = Averaging::Weighted;
  } else if (averaging == "macro") {
    ex.averaging = Averaging::Macro;
  } else {
    problems.push_back("averaging: expected \"weighted\" or \"macro\"");
  }

  std::string mode = "hier";
  rd.get(root, "", "mode", mode);
  const auto parsed_mode = parse_mode(mode);
  if (!parsed_mode) problems.push_back("mode: expected \"hier\" or \"central\", got \"" + mode + "\"");
  std::size_t clients = 9;
  std::size_t clusters = 3;
  rd.get(root, "", "clients", clients);
  rd.get(root, "", "clusters", clusters);
  const TopologyMode m = parsed_mode.value_or(TopologyMode::Hierarchical);
  ex.topology = FederationTopology::contiguous(clients, clusters, m);
  if (root.contains("cluster_assignment")) {
    const json& a = root.at("cluster_assignment");
    if (!a.is_array() || !std::all_of(a.begin(), a.end(), [](const json& e) { return e.is_number_unsigned(); })) {
      problems.push_back("cluster_assignment: expected an array of non-negative integers");
    } else {
      ex.topology.assignment = a.get<std::vector<ClusterId>>();
    }
  }

  if (root.contains("teacher")) {
    const json& t = root.at("teacher");
    rd.check_keys(t, "teacher", {"max_epochs", "patience", "validation_fraction"});
    rd.get(t, "teacher", "max_epochs", ex.teacher.max_epochs);
    rd.get(t, "teacher", "patience", ex.teacher.patience);
    rd.get(t, "teacher", "validation_fraction", ex.teacher.validation_fraction);
  }
  if (root.contains("links")) {
    const json& l = root.at("links");
    rd.check_keys(l, "links", {"client_edge", "edge_cloud", "client_cloud"});
    rd.link(l, "links", "client_edge", ex.links.client_edge);
    rd.link(l, "links", "edge_cloud", ex.links.edge_cloud);
    rd.link(l, "links", "client_cloud", ex.links.client_cloud);
  }

  if (root.contains("data")) {
    const json& d = root.at("data");
    rd.check_keys(d, "data", {"synth", "csv", "cache", "test_fraction", "subsample"});
    const int sources = (d.contains("synth") ? 1 : 0) + (d.contains("csv") ? 1 : 0) + (d.contains("cache") ? 1 : 0);
    if (sources > 1) problems.push_back("data: exactly one of synth, csv, cache may be given");
    if (d.contains("synth")) {
      cfg.source = DataSource::Synth;
      const json& s = d.at("synth");
      rd.check_keys(s, "data.synth", {"samples_per_class", "class_separation", "noise_std", "seed"});
      rd.get(s, "data.synth", "samples_per_class", cfg.synth.samples_per_class);
      rd.get(s, "data.synth", "class_separation", cfg.synth.class_separation);
      rd.get(s, "data.synth", "noise_std", cfg.synth.noise_std);
      if (s.is_object() && s.contains("seed")) {
        std::uint64_t seed = 0;
        rd.get(s, "data.synth", "seed", seed);
        cfg.synth_seed = seed;
      }
    }
    if (d.contains("csv")) {
      cfg.source = DataSource::Csv;
      const json& c = d.at("csv");
      rd.check_keys(c, "data.csv", {"path", "label_column", "categorical_columns", "drop_columns",
                                    "max_bad_row_fraction"});
      std::string path;
      rd.get(c, "data.csv", "path", path);
      cfg.csv.path = path;
      rd.get(c, "data.csv", "label_column", cfg.csv.schema.label_column);
      rd.strings(c, "data.csv", "categorical_columns", cfg.csv.schema.categorical_columns);
      rd.strings(c, "data.csv", "drop_columns", cfg.csv.drop_columns);
      rd.get(c, "data.csv", "max_bad_row_fraction", cfg.csv.schema.max_bad_row_fraction);
    }
    if (d.contains("cache")) {
      cfg.source = DataSource::Cache;
      const json& c = d.at("cache");
      rd.check_keys(c, "data.cache", {"dir"});
      std::string dir;
      rd.get(c, "data.cache", "dir", dir);
      cfg.cache_dir = dir;
    }
    rd.get(d, "data", "test_fraction", cfg.test_fraction);
    if (d.is_object() && d.contains("subsample")) {
      const json& s = d.at("subsample");
      if (s.is_null() || (s.is_string() && s.get<std::string>() == "none")) {
        cfg.subsample.reset();
      } else if (s.is_number_unsigned()) {
        cfg.subsample = s.get<std::size_t>();
      } else {
        problems.push_back("data.subsample: expected a positive integer or \"none\"");
      }
    }
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    rd.check_keys(o, "output", {"dir", "formats"});
    std::string dir = cfg.out_dir.string();
    rd.get(o, "output", "dir", dir);
    cfg.out_dir = dir;
    rd.strings(o, "output", "formats", cfg.formats);
  }

  cfg.synth.input_length = ex.input_length;
  const auto semantic = cfg.problems();
  problems.insert(problems.end(), semantic.begin(), semantic.end());
  if (!problems.empty()) throw_problems(problems);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  const ExperimentConfig& ex = cfg.experiment;
  json j;
  j["seed"] = ex.seed;
  j["rounds"] = ex.rounds;
  j["local_epochs"] = ex.local_epochs;
  j["batch_size"] = ex.batch_size;
  j["learning_rate"] = ex.learning_rate;
  j["alpha"] = ex.distill.alpha;
  j["temperature"] = ex.distill.temperature;
  j["eval_every"] = ex.eval_every;
  j["accuracy_threshold"] = ex.accuracy_threshold;
  j["averaging"] = ex.averaging == Averaging::Macro ? "macro" : "weighted";
  j["threads"] = ex.threads;
  j["mode"] = ex.topology.mode == TopologyMode::Hierarchical ? "hier" : "central";
  j["clients"] = ex.topology.num_clients;
  j["clusters"] = ex.topology.num_clusters;
  j["cluster_assignment"] = ex.topology.assignment;
  j["input_length"] = ex.input_length;
  j["public_shards"] = ex.public_shards;
  j["teacher"] = {{"max_epochs", ex.teacher.max_epochs},
                  {"patience", ex.teacher.patience},
                  {"validation_fraction", ex.teacher.validation_fraction}};
  j["links"] = {{"client_edge", link_json(ex.links.client_edge)},
                {"edge_cloud", link_json(ex.links.edge_cloud)},
                {"client_cloud", link_json(ex.links.client_cloud)}};
  json data;
  switch (cfg.source) {
    case DataSource::Synth: {
      json s = {{"samples_per_class", cfg.synth.samples_per_class},
                {"class_separation", cfg.synth.class_separation},
                {"noise_std", cfg.synth.noise_std}};
      if (cfg.synth_seed) s["seed"] = *cfg.synth_seed;
      data["synth"] = s;
      break;
    }
    case DataSource::Csv:
      data["csv"] = {{"path", cfg.csv.path.string()},
                     {"label_column", cfg.csv.schema.label_column},
                     {"categorical_columns", cfg.csv.schema.categorical_columns},
                     {"drop_columns", cfg.csv.drop_columns},
                     {"max_bad_row_fraction", cfg.csv.schema.max_bad_row_fraction}};
      break;
    case DataSource::Cache:
      data["cache"] = {{"dir", cfg.cache_dir.string()}};
      break;
  }
  data["test_fraction"] = cfg.test_fraction;
  data["subsample"] = cfg.subsample ? json(*cfg.subsample) : json("none");
  j["data"] = data;
  j["output"] = {{"dir", cfg.out_dir.string()}, {"formats", cfg.formats}};
  return j;
}

std::filesystem::path cache_train_path(const std::filesystem::path& dir) { return dir / "train.fkdd"; }
std::filesystem::path cache_test_path(const std::filesystem::path& dir) { return dir / "test.fkdd"; }

std::pair<LabeledDataset, LabeledDataset> load_csv_split(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.csv.path)) {
    throw DataError("CSV file not found: " + cfg.csv.path.string());
  }
  RawDataset raw = ingest_csv(cfg.csv.path, cfg.csv.schema);
  if (raw.rows() == 0) throw DataError("CSV file has no data rows: " + cfg.csv.path.string());
  const std::uint64_t seed = cfg.experiment.seed;
  if (cfg.subsample && raw.rows() > *cfg.subsample) {
    raw = raw.select(stratified_subsample(raw.labels, *cfg.subsample, seed));
  }
  const auto [train_idx, test_idx] = stratified_split(raw.labels, cfg.test_fraction, seed);
  FeaturePolicy policy;
  policy.drop_columns = cfg.csv.drop_columns;
  policy.input_length = cfg.experiment.input_length;
  LabeledDataset train = preprocess(raw.select(train_idx), policy);
  LabeledDataset test = apply_stats(raw.select(test_idx), train.stats);
  return {std::move(train), std::move(test)};
}

PreparedData load_data(const RunConfig& cfg) {
  const ExperimentConfig& ex = cfg.experiment;
  const std::size_t clients = ex.topology.num_clients;
  switch (cfg.source) {
    case DataSource::Synth: {
      SynthSpec spec = cfg.synth;
      spec.input_length = ex.input_length;
      spec.seed = cfg.synth_seed.value_or(ex.seed);
      return prepare_data(synth_generate(spec), cfg.test_fraction, clients, ex.public_shards, ex.seed);
    }
    case DataSource::Csv: {
      auto [train, test] = load_csv_split(cfg);
      return prepare_data(train, std::move(test), clients, ex.public_shards, ex.seed);
    }
    case DataSource::Cache: {
      LabeledDataset train = read_dataset_cache(cache_train_path(cfg.cache_dir));
      LabeledDataset test = read_dataset_cache(cache_test_path(cfg.cache_dir));
      if (train.input_length != ex.input_length || test.input_length != ex.input_length) {
        throw DataError("cached dataset width differs from input_length " + std::to_string(ex.input_length));
      }
      return prepare_data(train, std::move(test), clients, ex.public_shards, ex.seed);
    }
  }
  throw ConfigError("unknown data source");
}

}  // namespace fedkd

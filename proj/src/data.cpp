#include "fedkd/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "fedkd/error.hpp"
#include "fedkd/random.hpp"

namespace fedkd {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_missing(std::string_view cell) {
  static const std::set<std::string> tokens = {"", "nan", "na", "n/a", "null", "none", "?"};
  return tokens.count(lower(trim(cell))) > 0;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool getline_stripped(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("dataset cache: truncated header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

constexpr char kCacheMagic[4] = {'F', 'K', 'D', 'D'};
constexpr std::uint32_t kCacheVersion = 1;

bool row_complete(const RawDataset& raw, std::size_t r) {
  for (const auto& col : raw.columns) {
    if (col.type == ColumnType::Numeric ? std::isnan(col.numeric[r])
                                        : col.codes[r] == kMissingCategory) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::optional<std::uint8_t> class_from_label(std::string_view label) {
  static const std::map<std::string, std::uint8_t> table = {
      {"normal", 0},
      {"ddos", 1}, {"dos/ddos", 1}, {"(d)dos", 1}, {"ddos_udp", 1}, {"ddos_icmp", 1},
      {"ddos_tcp", 1}, {"ddos_http", 1},
      {"mitm", 2}, {"minm", 2},
      {"injection", 3}, {"sql_injection", 3}, {"xss", 3}, {"uploading", 3},
      {"malware", 4}, {"backdoor", 4}, {"password", 4}, {"ransomware", 4},
      {"information gathering", 5}, {"information_gathering", 5}, {"inf. gathering", 5},
      {"port_scanning", 5}, {"vulnerability_scanner", 5}, {"fingerprinting", 5},
  };
  const auto it = table.find(lower(trim(label)));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::vector<std::string> default_drop_columns() {
  return {"frame.time",          "ip.src_host",        "ip.dst_host",
          "arp.src.proto_ipv4",  "arp.dst.proto_ipv4", "tcp.srcport",
          "tcp.dstport",         "udp.port",           "tcp.payload",
          "tcp.options",         "http.file_data",     "http.request.full_uri",
          "http.request.uri.query", "icmp.transmit_timestamp", "mqtt.msg",
          "Attack_label"};
}

RawDataset RawDataset::select(std::span<const std::size_t> rows) const {
  RawDataset out;
  out.warnings = warnings;
  out.columns.reserve(columns.size());
  for (const auto& col : columns) {
    RawColumn c;
    c.name = col.name;
    c.type = col.type;
    c.categories = col.categories;
    if (col.type == ColumnType::Numeric) {
      for (const auto r : rows) c.numeric.push_back(col.numeric[r]);
    } else {
      for (const auto r : rows) c.codes.push_back(col.codes[r]);
    }
    out.columns.push_back(std::move(c));
  }
  for (const auto r : rows) out.labels.push_back(labels[r]);
  return out;
}

RawDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV " + path.string());
  std::string line;
  if (!getline_stripped(in, line)) throw DataError("CSV " + path.string() + " has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = std::string(trim(h));
  const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end()) {
    throw DataError("CSV " + path.string() + " lacks label column '" + schema.label_column + "'");
  }
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t width = header.size();

  // Pass 1: column types and bad-row census.
  std::vector<bool> numeric(width, true);
  for (const auto& name : schema.categorical_columns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it != header.end()) numeric[static_cast<std::size_t>(it - header.begin())] = false;
  }
  std::size_t good = 0;
  std::size_t bad = 0;
  while (getline_stripped(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != width || !class_from_label(cells[label_col])) {
      ++bad;
      continue;
    }
    ++good;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col || !numeric[c] || is_missing(cells[c])) continue;
      if (!parse_number(cells[c])) numeric[c] = false;
    }
  }
  const std::size_t total = good + bad;
  if (total > 0 && static_cast<double>(bad) > schema.max_bad_row_fraction * static_cast<double>(total)) {
    throw DataError("CSV " + path.string() + ": " + std::to_string(bad) + " of " +
                    std::to_string(total) + " rows unparseable (limit " +
                    std::to_string(schema.max_bad_row_fraction * 100.0) + "%)");
  }

  RawDataset raw;
  raw.bad_rows = bad;
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_col) continue;
    RawColumn col;
    col.name = header[c];
    col.type = numeric[c] ? ColumnType::Numeric : ColumnType::Categorical;
    raw.columns.push_back(std::move(col));
  }
  if (good == 0) {
    raw.warnings.push_back("CSV " + path.string() + " contains no data rows");
    return raw;
  }
  if (bad > 0) raw.warnings.push_back("skipped " + std::to_string(bad) + " unparseable rows");

  // Pass 2: typed fill.
  in.clear();
  in.seekg(0);
  getline_stripped(in, line);
  std::vector<std::map<std::string, std::uint32_t, std::less<>>> dictionaries(raw.columns.size());
  for (auto& col : raw.columns) {
    if (col.type == ColumnType::Numeric) col.numeric.reserve(good);
    else col.codes.reserve(good);
  }
  while (getline_stripped(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != width) continue;
    const auto cls = class_from_label(cells[label_col]);
    if (!cls) continue;
    raw.labels.push_back(*cls);
    ++raw.label_census[std::string(trim(cells[label_col]))];
    std::size_t k = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col) continue;
      RawColumn& col = raw.columns[k];
      if (col.type == ColumnType::Numeric) {
        col.numeric.push_back(is_missing(cells[c]) ? std::numeric_limits<double>::quiet_NaN()
                                                   : *parse_number(cells[c]));
      } else if (is_missing(cells[c])) {
        col.codes.push_back(kMissingCategory);
      } else {
        const std::string value(trim(cells[c]));
        auto& dict = dictionaries[k];
        auto it = dict.find(value);
        if (it == dict.end()) {
          it = dict.emplace(value, static_cast<std::uint32_t>(col.categories.size())).first;
          col.categories.push_back(value);
        }
        col.codes.push_back(it->second);
      }
      ++k;
    }
  }
  return raw;
}

std::pair<double, double> standardize_column(std::span<double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return {mean, 0.0};
  for (auto& v : values) v = (v - mean) / sd;
  return {mean, sd};
}

namespace {

// Encoded value of one cell before min-max scaling (standardized number or
// ordinal category code).
double encode_cell(const RawColumn& col, const FeatureStats& fs, std::size_t r) {
  if (col.type == ColumnType::Numeric) {
    if (fs.categorical) return -1.0;
    return fs.stddev > 0.0 ? (col.numeric[r] - fs.mean) / fs.stddev : 0.0;
  }
  const std::string& name = col.categories[col.codes[r]];
  const auto it = std::lower_bound(fs.categories.begin(), fs.categories.end(), name);
  if (it == fs.categories.end() || *it != name) return -1.0;  // unseen category
  return static_cast<double>(it - fs.categories.begin());
}

}  // namespace

LabeledDataset preprocess(const RawDataset& raw, const FeaturePolicy& policy) {
  if (raw.rows() == 0) throw DataError("preprocess: no rows");
  if (policy.input_length == 0) throw ConfigError("preprocess: input_length must be positive");

  // (1) drop incomplete rows
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    if (row_complete(raw, r)) keep.push_back(r);
  }
  if (keep.empty()) throw DataError("preprocess: every row has missing or invalid cells");

  LabeledDataset out;
  out.input_length = policy.input_length;
  out.warnings = raw.warnings;
  if (keep.size() < raw.rows()) {
    out.warnings.push_back("dropped " + std::to_string(raw.rows() - keep.size()) + " incomplete rows");
  }

  // (2) drop identity columns, keep the first input_length remaining
  std::vector<const RawColumn*> selected;
  for (const auto& col : raw.columns) {
    if (std::find(policy.drop_columns.begin(), policy.drop_columns.end(), col.name) !=
        policy.drop_columns.end()) {
      continue;
    }
    if (selected.size() == policy.input_length) break;
    selected.push_back(&col);
  }

  const std::size_t n = keep.size();
  const std::size_t width = policy.input_length;
  out.features.assign(n * width, 0.0f);
  for (const auto r : keep) out.labels.push_back(raw.labels[r]);

  std::vector<double> values(n);
  for (std::size_t f = 0; f < width; ++f) {
    FeatureStats fs;
    if (f >= selected.size()) {
      fs.name = "pad" + std::to_string(f - selected.size());
      fs.padding = true;
      fs.constant = true;
      out.feature_names.push_back(fs.name);
      out.stats.features.push_back(std::move(fs));
      continue;  // zero column
    }
    const RawColumn& col = *selected[f];
    fs.name = col.name;
    if (col.type == ColumnType::Numeric) {
      // (3) standardize
      for (std::size_t i = 0; i < n; ++i) values[i] = col.numeric[keep[i]];
      const auto [mean, sd] = standardize_column(values);
      fs.mean = mean;
      fs.stddev = sd;
      if (sd == 0.0) std::fill(values.begin(), values.end(), 0.0);
    } else {
      // (4) ordinal codes by sorted category name
      fs.categorical = true;
      std::set<std::string> seen;
      for (const auto r : keep) seen.insert(col.categories[col.codes[r]]);
      fs.categories.assign(seen.begin(), seen.end());
      for (std::size_t i = 0; i < n; ++i) values[i] = encode_cell(col, fs, keep[i]);
    }
    // (5) min-max to [0, 1]
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    fs.min = *lo;
    fs.max = *hi;
    fs.constant = !(fs.max > fs.min) || (!fs.categorical && fs.stddev == 0.0);
    if (fs.constant) {
      out.warnings.push_back("column '" + fs.name + "' has zero variance; mapped to 0.5");
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.features[i * width + f] =
          fs.constant ? 0.5f : static_cast<float>((values[i] - fs.min) / (fs.max - fs.min));
    }
    out.feature_names.push_back(fs.name);
    out.stats.features.push_back(std::move(fs));
  }
  return out;
}

LabeledDataset apply_stats(const RawDataset& raw, const NormalizationStats& stats) {
  LabeledDataset out;
  out.input_length = stats.features.size();
  out.stats = stats;
  std::vector<const RawColumn*> cols;
  for (const auto& fs : stats.features) {
    out.feature_names.push_back(fs.name);
    if (fs.padding) {
      cols.push_back(nullptr);
      continue;
    }
    const auto it = std::find_if(raw.columns.begin(), raw.columns.end(),
                                 [&](const RawColumn& c) { return c.name == fs.name; });
    if (it == raw.columns.end()) throw DataError("apply_stats: column '" + fs.name + "' missing");
    cols.push_back(&*it);
  }
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    if (!row_complete(raw, r)) continue;
    out.labels.push_back(raw.labels[r]);
    for (std::size_t f = 0; f < stats.features.size(); ++f) {
      const FeatureStats& fs = stats.features[f];
      float v = 0.0f;
      if (fs.padding) {
        v = 0.0f;
      } else if (fs.constant) {
        v = 0.5f;
      } else {
        const double enc = encode_cell(*cols[f], fs, r);
        v = static_cast<float>(std::clamp((enc - fs.min) / (fs.max - fs.min), 0.0, 1.0));
      }
      out.features.push_back(v);
    }
  }
  return out;
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.input_length = input_length;
  out.feature_names = feature_names;
  out.stats = stats;
  out.features.reserve(rows.size() * input_length);
  out.labels.reserve(rows.size());
  for (const auto r : rows) {
    const auto src = row(r);
    out.features.insert(out.features.end(), src.begin(), src.end());
    out.labels.push_back(labels[r]);
  }
  return out;
}

InputBatch LabeledDataset::batch(std::span<const std::size_t> rows) const {
  InputBatch b;
  b.size = rows.size();
  b.input_length = input_length;
  b.features.reserve(rows.size() * input_length);
  for (const auto r : rows) {
    const auto src = row(r);
    b.features.insert(b.features.end(), src.begin(), src.end());
    b.labels.push_back(labels[r]);
  }
  return b;
}

InputBatch LabeledDataset::all() const {
  InputBatch b;
  b.size = rows();
  b.input_length = input_length;
  b.features = features;
  b.labels = labels;
  return b;
}

LabeledDataset concat(std::span<const LabeledDataset* const> parts) {
  LabeledDataset out;
  if (parts.empty()) return out;
  out.input_length = parts.front()->input_length;
  out.feature_names = parts.front()->feature_names;
  out.stats = parts.front()->stats;
  for (const auto* p : parts) {
    if (p->input_length != out.input_length) throw DataError("concat: differing input lengths");
    out.features.insert(out.features.end(), p->features.begin(), p->features.end());
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
  }
  return out;
}

std::vector<Shard> shard(const LabeledDataset& dataset, std::size_t num_shards, std::uint64_t seed,
                         std::size_t client_shards) {
  if (num_shards == 0) throw DataError("shard: num_shards must be positive");
  if (dataset.rows() < num_shards) {
    throw DataError("shard: " + std::to_string(dataset.rows()) + " rows cannot fill " +
                    std::to_string(num_shards) + " shards");
  }
  std::vector<std::size_t> order(dataset.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x7368617264 /* "shard" */));
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t base = dataset.rows() / num_shards;
  const std::size_t extra = dataset.rows() % num_shards;
  std::vector<Shard> shards;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < num_shards; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    Shard sh;
    sh.shard_id = static_cast<std::uint32_t>(s + 1);
    sh.role = s < client_shards ? ShardRole::Client : ShardRole::Public;
    sh.data = dataset.select(std::span<const std::size_t>(order).subspan(offset, len));
    offset += len;
    shards.push_back(std::move(sh));
  }
  return shards;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const std::uint8_t> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  std::map<std::uint8_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(derive_seed(seed, 0x73706C6974 /* "split" */));
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::vector<std::size_t> stratified_subsample(std::span<const std::uint8_t> labels, std::size_t cap,
                                              std::uint64_t seed) {
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (labels.size() <= cap) return all;

  std::map<std::uint8_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  const double scale = static_cast<double>(cap) / static_cast<double>(labels.size());
  struct Quota {
    std::uint8_t cls;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [cls, idx] : by_class) {
    const double exact = scale * static_cast<double>(idx.size());
    const auto take = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({cls, take, exact - static_cast<double>(take)});
    assigned += take;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (std::size_t k = 0; assigned < cap && k < order.size(); ++k, ++assigned) ++quotas[order[k]].take;

  Rng rng(derive_seed(seed, 0x737562 /* "sub" */));
  std::vector<std::size_t> out;
  for (const auto& q : quotas) {
    auto idx = by_class[q.cls];
    rng.shuffle(std::span<std::size_t>(idx));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q.take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SynthSpec::validate() const {
  if (num_classes == 0 || num_classes > 255) throw ConfigError("synth: num_classes out of range");
  if (samples_per_class == 0) throw ConfigError("synth: samples_per_class must be >= 1");
  if (input_length == 0) throw ConfigError("synth: input_length must be positive");
  if (!(class_separation >= 0.0)) throw ConfigError("synth: class_separation must be >= 0");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
}

LabeledDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t L = spec.input_length;
  Rng rng(derive_seed(spec.seed, 0x73796E7468 /* "synth" */));

  // Orthonormal class directions (Gram-Schmidt); plain unit vectors once the
  // class count exceeds the dimension.
  std::vector<std::vector<double>> dirs;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::vector<double> v(L);
    for (auto& x : v) x = rng.normal();
    if (c < L) {
      for (const auto& d : dirs) {
        double dot = 0.0;
        for (std::size_t j = 0; j < L; ++j) dot += v[j] * d[j];
        for (std::size_t j = 0; j < L; ++j) v[j] -= dot * d[j];
      }
    }
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }

  const double radius = spec.class_separation * std::sqrt(2.0);
  const std::size_t n = spec.num_classes * spec.samples_per_class;
  std::vector<double> values(n * L);
  LabeledDataset out;
  out.input_length = L;
  out.labels.reserve(n);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const std::size_t r = out.labels.size();
      for (std::size_t j = 0; j < L; ++j) {
        values[r * L + j] = radius * dirs[c][j] + spec.noise_std * rng.normal();
      }
      out.labels.push_back(static_cast<std::uint8_t>(c));
    }
  }

  out.features.resize(n * L);
  for (std::size_t j = 0; j < L; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, values[r * L + j]);
      hi = std::max(hi, values[r * L + j]);
    }
    FeatureStats fs;
    fs.name = "f" + std::to_string(j);
    fs.min = lo;
    fs.max = hi;
    fs.constant = !(hi > lo);
    for (std::size_t r = 0; r < n; ++r) {
      out.features[r * L + j] =
          fs.constant ? 0.5f : static_cast<float>((values[r * L + j] - lo) / (hi - lo));
    }
    out.feature_names.push_back(fs.name);
    out.stats.features.push_back(std::move(fs));
  }
  return out;
}

void write_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset cache " + path.string());
  os.write(kCacheMagic, 4);
  put_u32(os, kCacheVersion);
  put_u32(os, static_cast<std::uint32_t>(data.rows()));
  put_u32(os, static_cast<std::uint32_t>(data.input_length));
  for (const float v : data.features) put_u32(os, std::bit_cast<std::uint32_t>(v));
  os.write(reinterpret_cast<const char*>(data.labels.data()),
           static_cast<std::streamsize>(data.labels.size()));
  if (!os) throw DataError("failed writing dataset cache " + path.string());
}

LabeledDataset read_dataset_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset cache " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw FormatError("dataset cache " + path.string() + ": bad magic");
  }
  if (get_u32(is) != kCacheVersion) throw FormatError("dataset cache: unsupported version");
  const std::size_t rows = get_u32(is);
  const std::size_t cols = get_u32(is);
  LabeledDataset out;
  out.input_length = cols;
  out.features.resize(rows * cols);
  for (auto& v : out.features) v = std::bit_cast<float>(get_u32(is));
  out.labels.resize(rows);
  if (!is.read(reinterpret_cast<char*>(out.labels.data()), static_cast<std::streamsize>(rows))) {
    throw FormatError("dataset cache: truncated labels");
  }
  for (const auto l : out.labels) {
    if (l >= kNumClasses) throw FormatError("dataset cache: label out of range");
  }
  for (std::size_t j = 0; j < cols; ++j) out.feature_names.push_back("f" + std::to_string(j));
  return out;
}

std::uint64_t content_hash(const LabeledDataset& data) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ull;
    }
  };
  const std::uint64_t len = data.input_length;
  mix(&len, sizeof len);
  mix(data.features.data(), data.features.size() * sizeof(float));
  mix(data.labels.data(), data.labels.size());
  return h;
}

}  // namespace fedkd

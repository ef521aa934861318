#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedkd/data.hpp"
#include "fedkd/error.hpp"

using namespace fedkd;
namespace fs = std::filesystem;

namespace {

fs::path write_csv(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("fedkd_test_" + name + ".csv");
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

FeaturePolicy narrow(std::size_t width) {
  FeaturePolicy p;
  p.drop_columns = {};
  p.input_length = width;
  return p;
}

}  // namespace

TEST_CASE("toy csv ingests three rows") {
  const auto p = write_csv("toy", "a,b,Attack_type\n1,2,Normal\n3,4,DDoS_UDP\n5,6,MITM\n");
  const auto raw = ingest_csv(p);
  CHECK(raw.rows() == 3);
  CHECK(raw.columns.size() == 2);
  CHECK(raw.labels == std::vector<std::uint8_t>{0, 1, 2});
  CHECK(raw.label_census.at("DDoS_UDP") == 1);
}

TEST_CASE("header-only csv is empty with a warning") {
  const auto raw = ingest_csv(write_csv("header", "a,b,Attack_type\n"));
  CHECK(raw.rows() == 0);
  CHECK_FALSE(raw.warnings.empty());
}

TEST_CASE("missing label column and too many bad rows are data errors") {
  CHECK_THROWS_AS(ingest_csv(write_csv("nolabel", "a,b\n1,2\n")), DataError);
  CHECK_THROWS_AS(ingest_csv(write_csv("bad", "a,Attack_type\n1,Normal\n2,Normal,extra\n")), DataError);
  CHECK_THROWS_AS(ingest_csv(fs::temp_directory_path() / "fedkd_no_such_file.csv"), DataError);
}

TEST_CASE("edge-iiotset labels fold into six families") {
  CHECK(class_from_label("Normal") == 0);
  CHECK(class_from_label("DDoS_HTTP") == 1);
  CHECK(class_from_label("MITM") == 2);
  CHECK(class_from_label("SQL_injection") == 3);
  CHECK(class_from_label("XSS") == 3);
  CHECK(class_from_label("Uploading") == 3);
  CHECK(class_from_label("Ransomware") == 4);
  CHECK(class_from_label("Backdoor") == 4);
  CHECK(class_from_label("Password") == 4);
  CHECK(class_from_label("Port_Scanning") == 5);
  CHECK(class_from_label("Fingerprinting") == 5);
  CHECK(class_from_label("Vulnerability_scanner") == 5);
  CHECK_FALSE(class_from_label("Nonsense").has_value());
}

TEST_CASE("quoted csv fields") {
  CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(split_csv_line("\"x\"\"y\",") == std::vector<std::string>{"x\"y", ""});
}

TEST_CASE("standardization then min-max") {
  std::vector<double> v = {1, 2, 3};
  const auto [mean, sd] = standardize_column(v);
  CHECK(mean == doctest::Approx(2));
  CHECK(v[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(v[1] == doctest::Approx(0).epsilon(1e-12));
  CHECK(v[2] == doctest::Approx(1.2247).epsilon(1e-4));
  (void)sd;

  const auto raw = ingest_csv(write_csv("steps", "x,Attack_type\n1,Normal\n2,Normal\n3,DDoS\n"));
  const auto ds = preprocess(raw, narrow(1));
  CHECK(ds.features == std::vector<float>{0.0f, 0.5f, 1.0f});
}

TEST_CASE("rows with missing cells are dropped") {
  const auto raw = ingest_csv(write_csv("missing", "x,y,Attack_type\n1,5,Normal\n,6,Normal\n3,nan,DDoS\n4,8,DDoS\n"));
  CHECK(raw.rows() == 4);
  const auto ds = preprocess(raw, narrow(2));
  CHECK(ds.rows() == 2);
  CHECK(ds.labels == std::vector<std::uint8_t>{0, 1});
  CHECK_THROWS_AS(preprocess(ingest_csv(write_csv("allmissing", "x,Attack_type\n,Normal\n")), narrow(1)), DataError);
}

TEST_CASE("categorical codes follow sorted names") {
  CsvSchema schema;
  schema.categorical_columns = {"proto"};
  const auto raw = ingest_csv(write_csv("cat", "proto,Attack_type\ntcp,Normal\nudp,Normal\nicmp,DDoS\n"), schema);
  const auto ds = preprocess(raw, narrow(1));
  CHECK(ds.stats.features[0].categories == std::vector<std::string>{"icmp", "tcp", "udp"});
  CHECK(ds.features == std::vector<float>{0.5f, 1.0f, 0.0f});
}

TEST_CASE("non-numeric columns are inferred categorical") {
  const auto raw = ingest_csv(write_csv("infer", "f,Attack_type\nb,Normal\na,Normal\n"));
  CHECK(raw.columns[0].type == ColumnType::Categorical);
}

TEST_CASE("zero-variance column maps to one half with a warning") {
  const auto raw = ingest_csv(write_csv("const", "x,y,Attack_type\n7,1,Normal\n7,2,DDoS\n"));
  const auto ds = preprocess(raw, narrow(2));
  CHECK(ds.features[0] == 0.5f);
  CHECK(ds.features[2] == 0.5f);
  CHECK(ds.stats.features[0].constant);
  CHECK_FALSE(ds.warnings.empty());
}

TEST_CASE("drop list and padding to input length") {
  const auto raw = ingest_csv(write_csv("drop", "ip.src_host,x,Attack_label,Attack_type\n1.2.3.4,1,1,Normal\n5.6.7.8,2,0,DDoS\n"));
  FeaturePolicy p;
  p.input_length = 4;
  const auto ds = preprocess(raw, p);
  CHECK(ds.feature_names == std::vector<std::string>{"x", "pad0", "pad1", "pad2"});
  CHECK(ds.features == std::vector<float>{0, 0, 0, 0, 1, 0, 0, 0});
  const auto defaults = default_drop_columns();
  CHECK(std::find(defaults.begin(), defaults.end(), "Attack_label") != defaults.end());
}

TEST_CASE("test rows reuse training stats and clamp") {
  CsvSchema schema;
  schema.categorical_columns = {"p"};
  const auto train_raw = ingest_csv(write_csv("fit", "x,p,Attack_type\n0,a,Normal\n10,b,DDoS\n"), schema);
  const auto test_raw = ingest_csv(write_csv("apply", "x,p,Attack_type\n5,b,Normal\n20,zzz,DDoS\n"), schema);
  const auto train = preprocess(train_raw, narrow(2));
  const auto test = apply_stats(test_raw, train.stats);
  REQUIRE(test.rows() == 2);
  CHECK(test.features[0] == doctest::Approx(0.5));
  CHECK(test.features[1] == 1.0f);
  CHECK(test.features[2] == 1.0f);  // clamped
  CHECK(test.features[3] == 0.0f);  // unseen category
}

TEST_CASE("shard sizes and roles") {
  SynthSpec spec;
  spec.samples_per_class = 2;
  const LabeledDataset twelve = synth_generate(spec);
  REQUIRE(twelve.rows() == 12);
  const auto s12 = shard(twelve, 12, 1);
  for (const auto& s : s12) CHECK(s.data.rows() == 1);

  std::vector<std::size_t> idx(13);
  for (std::size_t i = 0; i < 13; ++i) idx[i] = i % 12;
  const auto s13 = shard(twelve.select(idx), 12, 1);
  CHECK(s13[0].data.rows() == 2);
  for (std::size_t i = 1; i < 12; ++i) CHECK(s13[i].data.rows() == 1);

  CHECK(s12[8].role == ShardRole::Client);
  CHECK(s12[9].shard_id == 10);
  CHECK(s12[9].role == ShardRole::Public);
  CHECK(s12[11].role == ShardRole::Public);

  CHECK_THROWS_AS(shard(twelve.select(std::vector<std::size_t>{0, 1, 2}), 12, 1), DataError);
}

TEST_CASE("shards partition the rows") {
  SynthSpec spec;
  spec.samples_per_class = 50;
  const auto ds = synth_generate(spec);
  const auto shards = shard(ds, 12, 7);
  std::size_t total = 0;
  std::multiset<std::vector<float>> rows, seen;
  for (std::size_t r = 0; r < ds.rows(); ++r) rows.insert({ds.row(r).begin(), ds.row(r).end()});
  for (const auto& s : shards) {
    total += s.data.rows();
    for (std::size_t r = 0; r < s.data.rows(); ++r) seen.insert({s.data.row(r).begin(), s.data.row(r).end()});
  }
  CHECK(total == ds.rows());
  CHECK(seen == rows);
  CHECK(shard(ds, 12, 7)[3].data.features == shards[3].data.features);
}

TEST_CASE("stratified split and subsample keep proportions") {
  std::vector<std::uint8_t> labels;
  for (int c = 0; c < 6; ++c) labels.insert(labels.end(), 100 * (c + 1), static_cast<std::uint8_t>(c));
  const auto [train, test] = stratified_split(labels, 0.2, 3);
  CHECK(train.size() + test.size() == labels.size());
  std::vector<int> per(6, 0);
  for (const auto i : test) ++per[labels[i]];
  for (int c = 0; c < 6; ++c) CHECK(per[c] == 20 * (c + 1));

  const auto sub = stratified_subsample(labels, 210, 3);
  CHECK(sub.size() == 210);
  std::fill(per.begin(), per.end(), 0);
  for (const auto i : sub) ++per[labels[i]];
  for (int c = 0; c < 6; ++c) CHECK(per[c] == 10 * (c + 1));
  CHECK(stratified_subsample(labels, 100000, 3).size() == labels.size());
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  spec.samples_per_class = 20;
  const auto a = synth_generate(spec);
  CHECK(a.rows() == 120);
  CHECK(a.input_length == 30);
  CHECK(a.features == synth_generate(spec).features);
  for (const float v : a.features) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  std::vector<int> count(6, 0);
  for (const auto l : a.labels) ++count[l];
  for (const int c : count) CHECK(c == 20);

  spec.noise_std = 0.0;
  const auto clean = synth_generate(spec);
  for (std::size_t r = 1; r < clean.rows(); ++r) {
    if (clean.labels[r] == clean.labels[r - 1]) {
      CHECK(std::equal(clean.row(r).begin(), clean.row(r).end(), clean.row(r - 1).begin()));
    } else {
      CHECK_FALSE(std::equal(clean.row(r).begin(), clean.row(r).end(), clean.row(r - 1).begin()));
    }
  }
}

TEST_CASE("dataset cache round trip") {
  SynthSpec spec;
  spec.samples_per_class = 10;
  const auto ds = synth_generate(spec);
  const fs::path p = fs::temp_directory_path() / "fedkd_test_cache.fkdd";
  write_dataset_cache(p, ds);
  const auto back = read_dataset_cache(p);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(content_hash(back) == content_hash(ds));

  std::ofstream(p, std::ios::binary) << "XXXXjunk";
  CHECK_THROWS_AS(read_dataset_cache(p), FormatError);
}

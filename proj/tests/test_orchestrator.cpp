#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "fedkd/error.hpp"
#include "fedkd/orchestrator.hpp"

using namespace fedkd;

namespace {

PreparedData tiny_data(std::size_t per_class = 60, double separation = 3.0, std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.samples_per_class = per_class;
  spec.class_separation = separation;
  spec.seed = seed;
  return prepare_data(synth_generate(spec), 0.2, 9, 3, seed);
}

ExperimentConfig tiny_config(double alpha, TopologyMode mode = TopologyMode::Hierarchical) {
  ExperimentConfig c;
  c.topology = FederationTopology::contiguous(9, 3, mode);
  c.rounds = 2;
  c.local_epochs = 1;
  c.distill.alpha = alpha;
  c.eval_every = 1;
  c.teacher.max_epochs = 3;
  return c;
}

}  // namespace

TEST_CASE("contiguous topology spreads the remainder first") {
  const auto t = FederationTopology::contiguous(9, 4);
  const auto m = t.members();
  REQUIRE(m.size() == 4);
  CHECK(m[0].size() == 3);
  CHECK(m[1].size() == 2);
  CHECK(m[2].size() == 2);
  CHECK(m[3].size() == 2);
  CHECK(t.problems().empty());
  CHECK(FederationTopology::contiguous(9, 3).assignment ==
        std::vector<ClusterId>{0, 0, 0, 1, 1, 1, 2, 2, 2});

  auto bad = FederationTopology::contiguous(9, 3);
  bad.assignment[8] = 7;
  CHECK_FALSE(bad.problems().empty());
  bad = FederationTopology::contiguous(9, 3);
  bad.assignment = {0, 0, 0, 0, 0, 0, 1, 1, 1};
  CHECK_FALSE(bad.problems().empty());  // empty cluster 2
}

TEST_CASE("config validation lists every problem") {
  ExperimentConfig c;
  c.distill.alpha = 1.5;
  c.rounds = 0;
  c.batch_size = 0;
  CHECK(c.problems().size() >= 3);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ExperimentConfig{}.problems().empty());
}

TEST_CASE("prepared data roles and hash") {
  const auto d = tiny_data();
  CHECK(d.shards.size() == 12);
  CHECK(d.client_shards().size() == 9);
  CHECK(d.public_shards().size() == 3);
  CHECK(d.test.rows() == 72);
  CHECK(d.shard_hash == tiny_data().shard_hash);
  CHECK(d.shard_hash != tiny_data(60, 3.0, 1).shard_hash);
}

TEST_CASE("teacher reaches 95 percent on separated synthetic data") {
  SynthSpec spec;
  spec.samples_per_class = 2000;
  spec.class_separation = 3.0;
  const auto full = synth_generate(spec);
  const auto [train_idx, test_idx] = stratified_split(full.labels, 0.2, 0);
  const Shard pool{10, ShardRole::Public, full.select(train_idx)};
  const auto test = full.select(test_idx);
  const Shard* pub[] = {&pool};
  const auto t = init_teacher(pub, ExperimentConfig{});
  CHECK(t.summary.trained);
  CHECK(t.summary.validation_rows == 960);
  CHECK(t.summary.best_validation_accuracy >= 0.95);
  CHECK(metrics_from_confusion(evaluate(t.model, test.all())).accuracy >= 0.95);
}

TEST_CASE("zero-epoch teacher keeps its initial weights") {
  const auto d = tiny_data();
  ExperimentConfig c;
  c.teacher.max_epochs = 0;
  const auto pub = d.public_shards();
  const auto a = init_teacher(pub, c);
  const auto b = init_teacher(pub, c);
  CHECK(a.summary.epochs_run == 0);
  CHECK(a.model.weights() == b.model.weights());
}

TEST_CASE("empty shard gives no update and a warning") {
  const auto d = tiny_data();
  ExperimentConfig c = tiny_config(0.0);
  ClientState client{0, 0, ModelState::initialized(ModelArch::student(), 1, c.learning_rate), nullptr,
                     d.shards[0].data.select(std::vector<std::size_t>{}), Rng(1), std::nullopt};
  std::vector<std::string> warnings;
  const auto w = client.student.weights();
  CHECK_FALSE(client_local_train(client, w, c, 1, &warnings).has_value());
  CHECK(warnings.size() == 1);
}

TEST_CASE("hierarchical round message and byte counts") {
  const auto d = tiny_data();
  Federation fed(tiny_config(0.0), d);
  const auto r = fed.run_round(1);
  CHECK(r.updates_sent == 9);
  CHECK(r.global_aggregations == 1);
  CHECK(r.comm.cloud_messages_up == 3);
  CHECK(r.comm.cloud_messages_down == 3);
  CHECK(r.comm.messages == 24);
  CHECK(r.comm.cloud_bytes_up == 3 * 57512);
  CHECK(r.comm.peak_buffer_bytes.at("cloud") == 3 * 57512);
  CHECK(r.comm.c_to_s_avg == doctest::Approx(0.0365024).epsilon(1e-9));
  for (const auto& w : fed.last_received()) CHECK(w.get() == &fed.global_weights());
}

TEST_CASE("centralised round message and byte counts") {
  const auto d = tiny_data();
  Federation fed(tiny_config(0.0, TopologyMode::Centralised), d);
  const auto r = fed.run_round(1);
  CHECK(r.comm.cloud_messages_up == 9);
  CHECK(r.comm.cloud_messages_down == 9);
  CHECK(r.comm.messages == 18);
  CHECK(r.comm.cloud_bytes_up == 9 * 57512);
  CHECK(r.comm.peak_buffer_bytes.at("cloud") == 9 * 57512);
}

TEST_CASE("cloud ingress ratio is one third") {
  const auto d = tiny_data();
  Federation h(tiny_config(0.0), d);
  Federation c(tiny_config(0.0, TopologyMode::Centralised), d);
  const auto rh = h.run_round(1);
  const auto rc = c.run_round(1);
  CHECK(static_cast<double>(rh.comm.cloud_bytes_up) / static_cast<double>(rc.comm.cloud_bytes_up) ==
        doctest::Approx(1.0 / 3.0));
}

TEST_CASE("alpha zero never touches the soft loss or the teacher") {
  const auto d = tiny_data();
  const auto before = soft_loss_calls();
  const auto rep = run_experiment(tiny_config(0.0), d);
  CHECK(soft_loss_calls() == before);
  CHECK_FALSE(rep.teacher.trained);
  CHECK(rep.teacher_init.messages == 0);
  CHECK_FALSE(rep.teacher_inference.has_value());
}

TEST_CASE("alpha one half broadcasts the teacher once") {
  const auto d = tiny_data();
  const auto before = soft_loss_calls();
  const auto rep = run_experiment(tiny_config(0.5), d);
  CHECK(soft_loss_calls() > before);
  CHECK(rep.teacher.trained);
  CHECK(rep.teacher_init.messages == 12);
  CHECK(rep.teacher_init.bytes == 12 * 225576);
  CHECK(rep.teacher_inference.has_value());
}

TEST_CASE("evaluation cadence") {
  const auto d = tiny_data(20);
  auto c = tiny_config(0.0);
  c.rounds = 10;
  c.eval_every = 2;
  const auto rep = run_experiment(c, d);
  std::vector<std::uint32_t> evaluated;
  for (const auto& [round, acc] : rep.accuracy_history) evaluated.push_back(round);
  CHECK(evaluated == std::vector<std::uint32_t>{2, 4, 6, 8, 10});

  c.rounds = 1;
  const auto one = run_experiment(c, d);
  CHECK(one.accuracy_history.size() == 1);
  CHECK(one.accuracy_history[0].first == 1);

  c.rounds = 5;
  const auto five = run_experiment(c, d);
  CHECK(five.accuracy_history.back().first == 5);
  CHECK(five.accuracy_history.size() == 3);
}

TEST_CASE("runs are deterministic and thread count does not matter") {
  const auto d = tiny_data();
  auto c = tiny_config(0.5);
  const auto a = run_experiment(c, d);
  const auto b = run_experiment(c, d);
  c.threads = 3;
  const auto t = run_experiment(c, d);
  CHECK(a.final_metrics.accuracy == b.final_metrics.accuracy);
  CHECK(a.accuracy_history == b.accuracy_history);
  CHECK(a.accuracy_history == t.accuracy_history);
  CHECK(a.trace.size() == b.trace.size());
}

TEST_CASE("scenario matrix has four rows on one data split") {
  const auto d = tiny_data(20);
  auto c = tiny_config(0.0);
  c.rounds = 1;
  const auto rows = run_scenario_matrix(c, d);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "centralised alpha=0");
  CHECK(rows[1].label == "centralised alpha=0.5");
  CHECK(rows[2].label == "hierarchical alpha=0");
  CHECK(rows[3].label == "hierarchical alpha=0.5");
  for (const auto& r : rows) CHECK(r.data_hash == d.shard_hash);
  CHECK(rows[2].comm.cloud_bytes_up * 3 == rows[0].comm.cloud_bytes_up);
}

TEST_CASE("round totals add up across rounds") {
  const auto d = tiny_data(20);
  auto c = tiny_config(0.0);
  c.rounds = 3;
  const auto rep = run_experiment(c, d);
  std::size_t msgs = 0, up = 0;
  for (const auto& r : rep.rounds) {
    msgs += r.comm.messages;
    up += r.comm.total_bytes_up;
  }
  CHECK(rep.comm.messages == msgs);
  CHECK(rep.comm.bytes_up == up);
  CHECK(rep.trace.size() == rep.teacher_init.messages + rep.comm.messages);
}

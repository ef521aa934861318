#pragma once

// Round protocol over a federation of student clients grouped under edge
// servers, with a frozen teacher at the central server.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedkd/data.hpp"
#include "fedkd/distillation.hpp"
#include "fedkd/federation.hpp"
#include "fedkd/metrics.hpp"
#include "fedkd/netsim.hpp"
#include "fedkd/nn.hpp"
#include "fedkd/random.hpp"

namespace fedkd {

struct FederationTopology {
  std::size_t num_clients = 9;
  std::size_t num_clusters = 3;
  TopologyMode mode = TopologyMode::Hierarchical;
  std::vector<ClusterId> assignment;  // client -> cluster

  // Contiguous blocks; the first num_clients % num_clusters clusters get one
  // extra member.
  static FederationTopology contiguous(std::size_t clients, std::size_t clusters,
                                       TopologyMode mode = TopologyMode::Hierarchical);
  std::vector<std::vector<ClientId>> members() const;
  // Problems found, empty when valid.
  std::vector<std::string> problems() const;
};

struct TeacherConfig {
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  double validation_fraction = 0.1;
};

struct ExperimentConfig {
  FederationTopology topology = FederationTopology::contiguous(9, 3);
  std::size_t rounds = 10;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 32;
  DistillConfig distill;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  std::size_t eval_every = 2;
  std::size_t input_length = 30;
  double accuracy_threshold = 0.9;  // fraction, for rounds_to_threshold
  Averaging averaging = Averaging::Weighted;
  std::size_t public_shards = 3;
  std::size_t threads = 1;
  TeacherConfig teacher;
  LinkConfig links;

  std::vector<std::string> problems() const;
  // Throws ConfigError listing every problem.
  void validate() const;
};

// Client and public shards plus the held-out test split.
struct PreparedData {
  std::vector<Shard> shards;
  LabeledDataset test;
  std::uint64_t shard_hash = 0;

  std::vector<const Shard*> client_shards() const;
  std::vector<const Shard*> public_shards() const;
};

std::uint64_t shard_hash(std::span<const Shard> shards);

// Stratified hold-out of `test_fraction`, then clients + public shards of the rest.
PreparedData prepare_data(const LabeledDataset& full, double test_fraction, std::size_t num_clients,
                          std::size_t public_shards, std::uint64_t seed);
// Train/test already separated (e.g. the CSV pipeline).
PreparedData prepare_data(const LabeledDataset& train, LabeledDataset test,
                          std::size_t num_clients, std::size_t public_shards, std::uint64_t seed);

struct TeacherSummary {
  bool trained = false;
  std::size_t epochs_run = 0;
  double best_validation_accuracy = 0.0;
  std::size_t validation_rows = 0;
};

struct TeacherResult {
  ModelState model;
  TeacherSummary summary;
};

// Trains the teacher on the concatenated public shards until validation
// accuracy stops improving for `patience` epochs or max_epochs is reached;
// returns the best-validation weights.
TeacherResult init_teacher(std::span<const Shard* const> public_shards,
                           const ExperimentConfig& config);

struct ClientState {
  ClientId client_id = 0;
  ClusterId cluster_id = 0;
  ModelState student;
  std::shared_ptr<const ModelState> teacher;  // read-only; absent when alpha == 0
  LabeledDataset private_data;
  Rng rng;
  std::optional<Matrix> teacher_logits;  // soft targets for private_data, computed once
};

struct LocalTrainStats {
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  std::size_t steps = 0;
};

// Loads the global weights, runs local_epochs of mini-batch training on the
// private shard and returns the update. Empty shards yield nullopt and a
// warning.
std::optional<ClientUpdate> client_local_train(ClientState& client, const WeightVector& global_weights,
                                               const ExperimentConfig& config, std::uint32_t round,
                                               std::vector<std::string>* warnings = nullptr,
                                               LocalTrainStats* stats = nullptr);

struct TeacherInitComm {
  std::size_t messages = 0;
  std::size_t bytes = 0;
  double span = 0.0;
};

struct RoundReport {
  std::uint32_t round = 0;
  std::optional<EvalMetrics> metrics;
  CommMetrics comm;
  std::size_t updates_sent = 0;
  std::size_t global_aggregations = 0;
  double mean_train_loss = 0.0;
  double train_wall_seconds = 0.0;
  std::vector<AggregationRecord> aggregations;
  std::vector<std::string> warnings;
};

class Federation {
 public:
  // Builds clients from the client shards, trains and broadcasts the teacher
  // when alpha > 0.
  Federation(ExperimentConfig config, const PreparedData& data);

  RoundReport run_round(std::uint32_t round);

  const ExperimentConfig& config() const noexcept { return config_; }
  const WeightVector& global_weights() const noexcept { return *global_; }
  ModelState global_model() const;
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const Simulator& network() const noexcept { return sim_; }
  const TeacherSummary& teacher_summary() const noexcept { return teacher_summary_; }
  const ModelState* teacher() const noexcept { return teacher_.get(); }
  const TeacherInitComm& teacher_init_comm() const noexcept { return teacher_init_; }
  // Weights each client received in the last completed round.
  const std::vector<std::shared_ptr<const WeightVector>>& last_received() const noexcept {
    return received_;
  }

 private:
  void broadcast_teacher();
  std::vector<std::optional<ClientUpdate>> train_clients(std::uint32_t round, RoundReport& report);

  ExperimentConfig config_;
  std::vector<ClientState> clients_;
  std::shared_ptr<const ModelState> teacher_;
  TeacherSummary teacher_summary_;
  std::shared_ptr<const WeightVector> global_;
  Simulator sim_;
  TeacherInitComm teacher_init_;
  std::vector<std::shared_ptr<const WeightVector>> received_;
};

struct CommTotals {
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
  std::size_t cloud_bytes_up = 0;
  std::size_t cloud_messages_up = 0;
  std::size_t cloud_messages_down = 0;
  std::size_t messages = 0;
  double mean_c_to_s = 0.0;
  double mean_s_to_c = 0.0;
  double mean_agg_time = 0.0;  // wall
  std::size_t peak_cloud_buffer = 0;
  std::size_t peak_edge_buffer = 0;
};

struct ExperimentReport {
  std::string label;
  ExperimentConfig config;
  TeacherSummary teacher;
  TeacherInitComm teacher_init;
  std::size_t student_params = 0;
  std::size_t teacher_params = 0;
  std::size_t update_bytes = 0;
  std::uint64_t data_hash = 0;
  std::vector<RoundReport> rounds;
  std::vector<std::pair<std::uint32_t, double>> accuracy_history;
  std::optional<std::uint32_t> rounds_to_threshold;
  EvalMetrics final_metrics;
  CommTotals comm;
  InferenceTiming student_inference;
  std::optional<InferenceTiming> teacher_inference;
  std::vector<Message> trace;
  double wall_seconds = 0.0;
};

std::string scenario_label(TopologyMode mode, double alpha);

// Teacher init, then `rounds` rounds; evaluates every eval_every rounds and at the last.
// `on_round` sees each round report once it is complete (metrics included).
ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                const std::function<void(const RoundReport&)>& on_round = {});

// {Centralised, Hierarchical} x {alpha 0, alpha 0.5} on shared data and seed,
// in that row order.
std::vector<ExperimentReport> run_scenario_matrix(
    const ExperimentConfig& base, const PreparedData& data,
    const std::function<void(const ExperimentConfig&, const RoundReport&)>& on_round = {});

}  // namespace fedkd

#include "fedkd/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedkd/error.hpp"

namespace fedkd {
namespace {

constexpr std::uint64_t kStudentInitKey = 0x73747564;  // "stud"
constexpr std::uint64_t kTeacherInitKey = 0x74656163;  // "teac"
constexpr std::uint64_t kTeacherShuffleKey = 0x74736866;
constexpr std::uint64_t kTeacherValKey = 0x7476616C;
constexpr std::uint64_t kClientStreamBase = 0x636C6900000000ull;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.row(rows[i]).begin(), src.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix logits_for(const ModelState& model, const LabeledDataset& data) {
  Matrix out(data.rows(), model.arch().num_classes);
  constexpr std::size_t chunk = 512;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.rows(); start += chunk) {
    const std::size_t n = std::min(chunk, data.rows() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto cache = forward(model, data.batch(idx));
    std::copy(cache.logits.values.begin(), cache.logits.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(start * out.cols));
  }
  return out;
}

double accuracy_on(const ModelState& model, const LabeledDataset& data) {
  if (data.rows() == 0) return 0.0;
  return metrics_from_confusion(evaluate(model, data.all())).accuracy;
}

}  // namespace

FederationTopology FederationTopology::contiguous(std::size_t clients, std::size_t clusters,
                                                  TopologyMode mode) {
  FederationTopology t;
  t.num_clients = clients;
  t.num_clusters = clusters;
  t.mode = mode;
  if (clusters == 0) return t;
  const std::size_t base = clients / clusters;
  const std::size_t extra = clients % clusters;
  for (std::size_t c = 0; c < clusters; ++c) {
    const std::size_t size = base + (c < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) t.assignment.push_back(static_cast<ClusterId>(c));
  }
  return t;
}

std::vector<std::vector<ClientId>> FederationTopology::members() const {
  std::vector<std::vector<ClientId>> out(num_clusters);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < num_clusters) out[assignment[i]].push_back(static_cast<ClientId>(i));
  }
  return out;
}

std::vector<std::string> FederationTopology::problems() const {
  std::vector<std::string> p;
  if (num_clients == 0) p.push_back("clients must be >= 1");
  if (mode == TopologyMode::Hierarchical) {
    if (num_clusters == 0) p.push_back("clusters must be >= 1");
    if (num_clusters > num_clients) p.push_back("clusters must not exceed clients");
  }
  if (assignment.size() != num_clients) {
    p.push_back("cluster assignment must cover every client exactly once");
  } else if (mode == TopologyMode::Hierarchical) {
    for (const auto c : assignment) {
      if (c >= num_clusters) {
        p.push_back("cluster assignment references an unknown cluster");
        return p;
      }
    }
    std::vector<std::size_t> sizes(num_clusters, 0);
    for (const auto c : assignment) ++sizes[c];
    for (std::size_t c = 0; c < num_clusters; ++c) {
      if (sizes[c] == 0) p.push_back("cluster " + std::to_string(c) + " has no clients");
    }
  }
  return p;
}

std::vector<std::string> ExperimentConfig::problems() const {
  auto p = topology.problems();
  if (rounds < 1) p.push_back("rounds must be >= 1");
  if (local_epochs < 1) p.push_back("local_epochs must be >= 1");
  if (batch_size < 1) p.push_back("batch_size must be >= 1");
  if (!(distill.alpha >= 0.0 && distill.alpha <= 1.0)) p.push_back("alpha must lie in [0, 1]");
  if (!(distill.temperature > 0.0)) p.push_back("temperature must be > 0");
  if (!(learning_rate > 0.0)) p.push_back("learning_rate must be > 0");
  if (eval_every < 1) p.push_back("eval_every must be >= 1");
  if (input_length < 1) p.push_back("input_length must be >= 1");
  if (!(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0)) {
    p.push_back("accuracy_threshold must lie in [0, 1]");
  }
  if (public_shards < 1) p.push_back("public_shards must be >= 1");
  if (threads < 1) p.push_back("threads must be >= 1");
  if (!(teacher.validation_fraction >= 0.0 && teacher.validation_fraction < 1.0)) {
    p.push_back("teacher.validation_fraction must lie in [0, 1)");
  }
  for (const LinkModel* l : {&links.client_edge, &links.edge_cloud, &links.client_cloud}) {
    if (!(l->latency >= 0.0)) p.push_back("link " + to_string(l->tier) + " latency must be >= 0");
    if (!(l->bandwidth > 0.0)) p.push_back("link " + to_string(l->tier) + " bandwidth must be > 0");
  }
  try {
    ModelArch::student(input_length).validate();
  } catch (const ConfigError& e) {
    p.push_back(std::string("student arch: ") + e.what());
  }
  return p;
}

void ExperimentConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::ostringstream os;
  os << "invalid experiment config:";
  for (const auto& s : p) os << "\n  - " << s;
  throw ConfigError(os.str());
}

std::vector<const Shard*> PreparedData::client_shards() const {
  std::vector<const Shard*> out;
  for (const auto& s : shards) {
    if (s.role == ShardRole::Client) out.push_back(&s);
  }
  return out;
}

std::vector<const Shard*> PreparedData::public_shards() const {
  std::vector<const Shard*> out;
  for (const auto& s : shards) {
    if (s.role == ShardRole::Public) out.push_back(&s);
  }
  return out;
}

std::uint64_t shard_hash(std::span<const Shard> shards) {
  std::uint64_t h = 0x84222325CBF29CE4ull;
  for (const auto& s : shards) {
    h = splitmix64(h ^ s.shard_id);
    h = splitmix64(h ^ static_cast<std::uint64_t>(s.role));
    h = splitmix64(h ^ content_hash(s.data));
  }
  return h;
}

PreparedData prepare_data(const LabeledDataset& full, double test_fraction, std::size_t num_clients,
                          std::size_t public_shards, std::uint64_t seed) {
  const auto [train_idx, test_idx] = stratified_split(full.labels, test_fraction, seed);
  return prepare_data(full.select(train_idx), full.select(test_idx), num_clients, public_shards, seed);
}

PreparedData prepare_data(const LabeledDataset& train, LabeledDataset test, std::size_t num_clients,
                          std::size_t public_shards, std::uint64_t seed) {
  PreparedData out;
  out.shards = shard(train, num_clients + public_shards, seed, num_clients);
  out.test = std::move(test);
  out.shard_hash = shard_hash(out.shards);
  return out;
}

TeacherResult init_teacher(std::span<const Shard* const> public_shards,
                           const ExperimentConfig& config) {
  std::vector<const LabeledDataset*> parts;
  for (const auto* s : public_shards) {
    if (s->data.rows() > 0) parts.push_back(&s->data);
  }
  if (parts.empty()) throw ConfigError("init_teacher: no public data");
  LabeledDataset pool = concat(parts);

  std::vector<std::size_t> order(pool.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng val_rng(derive_seed(config.seed, kTeacherValKey));
  val_rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(config.teacher.validation_fraction * static_cast<double>(pool.rows()));
  if (n_val >= pool.rows()) n_val = 0;
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const LabeledDataset train = pool.select(train_idx);
  const LabeledDataset val = n_val > 0 ? pool.select(val_idx) : train;

  TeacherResult result{ModelState::initialized(ModelArch::teacher(pool.input_length),
                                               derive_seed(config.seed, kTeacherInitKey),
                                               config.learning_rate),
                       {}};
  result.summary.validation_rows = val.rows();
  if (config.teacher.max_epochs == 0) return result;

  Rng rng(derive_seed(config.seed, kTeacherShuffleKey));
  WeightVector best = result.model.weights();
  double best_acc = -1.0;
  std::size_t stall = 0;
  std::vector<std::size_t> idx(train.rows());
  for (std::size_t epoch = 0; epoch < config.teacher.max_epochs; ++epoch) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, idx.size() - start);
      const auto batch = train.batch(std::span<const std::size_t>(idx).subspan(start, n));
      const auto cache = forward(result.model, batch);
      const auto loss = hard_loss(cache.logits, batch.labels);
      adam_step(result.model, backward(result.model, cache, loss.logit_gradient));
    }
    result.summary.epochs_run = epoch + 1;
    const double acc = accuracy_on(result.model, val);
    if (acc > best_acc) {
      best_acc = acc;
      best = result.model.weights();
      stall = 0;
    } else if (++stall >= config.teacher.patience) {
      break;
    }
  }
  result.model.load_weights(std::move(best));
  result.summary.trained = true;
  result.summary.best_validation_accuracy = best_acc;
  return result;
}

std::optional<ClientUpdate> client_local_train(ClientState& client, const WeightVector& global_weights,
                                               const ExperimentConfig& config, std::uint32_t round,
                                               std::vector<std::string>* warnings,
                                               LocalTrainStats* stats) {
  const auto start = std::chrono::steady_clock::now();
  if (!conforms(global_weights, client.student.arch())) {
    throw ProtocolError("client " + std::to_string(client.client_id) +
                        ": global weights do not conform to the student arch");
  }
  const LabeledDataset& data = client.private_data;
  if (data.rows() == 0) {
    if (warnings) warnings->push_back("client " + std::to_string(client.client_id) + " skipped: empty private shard");
    return std::nullopt;
  }
  client.student.load_weights(global_weights);

  const bool distill = config.distill.alpha > 0.0;
  if (distill && !client.teacher_logits) {
    if (!client.teacher) {
      throw ConfigError("client " + std::to_string(client.client_id) + ": alpha > 0 but no teacher copy");
    }
    client.teacher_logits = logits_for(*client.teacher, data);
  }

  std::vector<std::size_t> idx(data.rows());
  LocalTrainStats local;
  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    client.rng.shuffle(std::span<std::size_t>(idx));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < idx.size(); s += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, idx.size() - s);
      const auto rows = std::span<const std::size_t>(idx).subspan(s, n);
      const auto batch = data.batch(rows);
      const auto cache = forward(client.student, batch);
      const Matrix teacher_rows = distill ? gather_rows(*client.teacher_logits, rows) : Matrix{};
      const auto loss = distill_loss(cache.logits, teacher_rows, batch.labels, config.distill);
      adam_step(client.student, backward(client.student, cache, loss.logit_gradient));
      epoch_loss += loss.combined;
      ++batches;
      ++local.steps;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
    if (epoch == 0) local.first_epoch_loss = epoch_loss;
    local.last_epoch_loss = epoch_loss;
  }
  if (stats) *stats = local;

  ClientUpdate update;
  update.client_id = client.client_id;
  update.round = round;
  update.weights = client.student.weights();
  update.sample_count = data.rows();
  update.train_seconds = seconds_since(start);
  return update;
}

Federation::Federation(ExperimentConfig config, const PreparedData& data)
    : config_(std::move(config)), sim_(config_.links) {
  config_.validate();
  const auto client_shards = data.client_shards();
  if (client_shards.size() != config_.topology.num_clients) {
    throw ConfigError("prepared data has " + std::to_string(client_shards.size()) +
                      " client shards for " + std::to_string(config_.topology.num_clients) + " clients");
  }
  for (const auto* s : client_shards) {
    if (s->data.input_length != config_.input_length) {
      throw ConfigError("shard feature length " + std::to_string(s->data.input_length) +
                        " differs from input_length " + std::to_string(config_.input_length));
    }
  }

  if (config_.distill.alpha > 0.0) {
    auto teacher = init_teacher(data.public_shards(), config_);
    teacher_summary_ = teacher.summary;
    teacher_ = std::make_shared<const ModelState>(std::move(teacher.model));
  }

  const ModelState initial = ModelState::initialized(ModelArch::student(config_.input_length),
                                                     derive_seed(config_.seed, kStudentInitKey),
                                                     config_.learning_rate);
  global_ = std::make_shared<const WeightVector>(initial.weights());
  for (std::size_t i = 0; i < config_.topology.num_clients; ++i) {
    clients_.push_back(ClientState{static_cast<ClientId>(i), config_.topology.assignment[i], initial,
                                   teacher_, client_shards[i]->data,
                                   Rng(derive_seed(config_.seed, kClientStreamBase + i)), std::nullopt});
  }
  received_.assign(clients_.size(), global_);
  if (teacher_) broadcast_teacher();
}

ModelState Federation::global_model() const {
  return ModelState(ModelArch::student(config_.input_length), *global_, config_.learning_rate);
}

void Federation::broadcast_teacher() {
  auto payload = std::make_shared<const WeightVector>(teacher_->weights());
  const std::size_t log_start = sim_.delivered().size();
  const double t0 = sim_.now();
  const bool hier = config_.topology.mode == TopologyMode::Hierarchical;
  const auto members = config_.topology.members();
  if (hier) {
    for (std::size_t e = 0; e < members.size(); ++e) {
      if (members[e].empty()) continue;
      sim_.transmit(make_message(0, MessageKind::TeacherInit, NodeId::cloud(),
                                 NodeId::edge(static_cast<std::uint32_t>(e)), payload, t0));
    }
  } else {
    for (const auto& c : clients_) {
      sim_.transmit(make_message(0, MessageKind::TeacherInit, NodeId::cloud(), NodeId::client(c.client_id),
                                 payload, t0));
    }
  }
  while (auto msg = sim_.deliver_next()) {
    if (msg->destination.role == NodeRole::Edge) {
      for (const auto c : members[msg->destination.index]) {
        sim_.transmit(make_message(0, MessageKind::TeacherInit, msg->destination, NodeId::client(c),
                                   msg->payload, sim_.now()));
      }
    }
  }
  const auto& log = sim_.delivered();
  teacher_init_.messages = log.size() - log_start;
  for (std::size_t i = log_start; i < log.size(); ++i) teacher_init_.bytes += log[i].payload_bytes;
  teacher_init_.span = sim_.now() - t0;
}

std::vector<std::optional<ClientUpdate>> Federation::train_clients(std::uint32_t round,
                                                                   RoundReport& report) {
  const std::size_t n = clients_.size();
  std::vector<std::optional<ClientUpdate>> updates(n);
  std::vector<std::vector<std::string>> warnings(n);
  std::vector<LocalTrainStats> stats(n);
  const WeightVector& global = *global_;
  auto work = [&](std::size_t i) {
    updates[i] = client_local_train(clients_[i], global, config_, round, &warnings[i], &stats[i]);
  };
  const std::size_t threads = std::min(config_.threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  double loss = 0.0;
  std::size_t trained = 0;
  for (std::size_t i = 0; i < n; ++i) {
    report.warnings.insert(report.warnings.end(), warnings[i].begin(), warnings[i].end());
    if (updates[i]) {
      loss += stats[i].last_epoch_loss;
      ++trained;
    }
  }
  if (trained > 0) report.mean_train_loss = loss / static_cast<double>(trained);
  return updates;
}

RoundReport Federation::run_round(std::uint32_t round) {
  RoundReport report;
  report.round = round;
  const auto train_start = std::chrono::steady_clock::now();
  auto updates = train_clients(round, report);
  report.train_wall_seconds = seconds_since(train_start);

  const bool hier = config_.topology.mode == TopologyMode::Hierarchical;
  const auto members = config_.topology.members();
  const std::size_t log_start = sim_.delivered().size();
  const double t0 = sim_.now();

  // Which senders each aggregator waits for.
  std::vector<std::size_t> edge_expected(members.size(), 0);
  std::size_t cloud_expected = 0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!updates[i]) continue;
    ++report.updates_sent;
    if (hier) {
      if (edge_expected[clients_[i].cluster_id]++ == 0) ++cloud_expected;
    } else {
      ++cloud_expected;
    }
  }
  if (report.updates_sent == 0) {
    throw ProtocolError("round " + std::to_string(round) + ": no client produced an update");
  }

  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!updates[i]) continue;
    const NodeId dst = hier ? NodeId::edge(clients_[i].cluster_id) : NodeId::cloud();
    auto payload = std::make_shared<const WeightVector>(updates[i]->weights);
    sim_.transmit(make_message(round, MessageKind::ClientUpdate, NodeId::client(clients_[i].client_id), dst,
                               std::move(payload), t0));
  }

  BufferTracker buffers;
  std::vector<std::vector<ClientUpdate>> edge_inbox(members.size());
  std::vector<ClientUpdate> cloud_client_inbox;
  std::vector<ClusterAggregate> cloud_cluster_inbox;
  std::vector<std::optional<ClusterAggregate>> pending_aggregates(members.size());
  std::size_t consumed = 0;
  std::shared_ptr<const WeightVector> new_global;
  std::vector<std::shared_ptr<const WeightVector>> received(clients_.size());

  auto broadcast = [&](const WeightVector& weights) {
    new_global = std::make_shared<const WeightVector>(weights);
    ++report.global_aggregations;
    if (hier) {
      for (std::size_t e = 0; e < members.size(); ++e) {
        if (members[e].empty()) continue;
        sim_.transmit(make_message(round, MessageKind::GlobalBroadcast, NodeId::cloud(),
                                   NodeId::edge(static_cast<std::uint32_t>(e)), new_global, sim_.now()));
      }
    } else {
      for (const auto& c : clients_) {
        sim_.transmit(make_message(round, MessageKind::GlobalBroadcast, NodeId::cloud(),
                                   NodeId::client(c.client_id), new_global, sim_.now()));
      }
    }
  };

  while (auto msg = sim_.deliver_next()) {
    switch (msg->kind) {
      case MessageKind::ClientUpdate: {
        buffers.hold(msg->destination, msg->payload_bytes);
        ClientUpdate& u = *updates[msg->source.index];
        if (msg->destination.role == NodeRole::Edge) {
          const auto e = msg->destination.index;
          edge_inbox[e].push_back(std::move(u));
          if (edge_inbox[e].size() < edge_expected[e]) break;
          const auto& inbox = edge_inbox[e];
          auto agg = timed_aggregation(round, msg->destination, inbox.size(), report.aggregations,
                                       [&](AggregationCost& cost) {
                                         return aggregate_cluster(e, inbox, &cost);
                                       });
          consumed += inbox.size();
          buffers.release(msg->destination, inbox.size() * msg->payload_bytes);
          auto payload = std::make_shared<const WeightVector>(agg.weights);
          pending_aggregates[e] = std::move(agg);
          sim_.transmit(make_message(round, MessageKind::ClusterAggregate, msg->destination, NodeId::cloud(),
                                     std::move(payload), sim_.now()));
        } else {
          cloud_client_inbox.push_back(std::move(u));
          if (cloud_client_inbox.size() < cloud_expected) break;
          auto global = timed_aggregation(round, NodeId::cloud(), cloud_client_inbox.size(),
                                          report.aggregations, [&](AggregationCost& cost) {
                                            return aggregate_flat(cloud_client_inbox, &cost);
                                          });
          consumed += cloud_client_inbox.size();
          buffers.release(NodeId::cloud(), cloud_client_inbox.size() * msg->payload_bytes);
          broadcast(global.weights);
        }
        break;
      }
      case MessageKind::ClusterAggregate: {
        buffers.hold(NodeId::cloud(), msg->payload_bytes);
        auto& pending = pending_aggregates[msg->source.index];
        if (!pending) throw AccountingError("cluster aggregate delivered twice");
        cloud_cluster_inbox.push_back(std::move(*pending));
        pending.reset();
        if (cloud_cluster_inbox.size() < cloud_expected) break;
        auto global = timed_aggregation(round, NodeId::cloud(), cloud_cluster_inbox.size(),
                                        report.aggregations, [&](AggregationCost& cost) {
                                          return aggregate_global(cloud_cluster_inbox, &cost);
                                        });
        buffers.release(NodeId::cloud(), cloud_cluster_inbox.size() * msg->payload_bytes);
        broadcast(global.weights);
        break;
      }
      case MessageKind::GlobalBroadcast:
        if (msg->destination.role == NodeRole::Edge) {
          for (const auto c : members[msg->destination.index]) {
            sim_.transmit(make_message(round, MessageKind::GlobalBroadcast, msg->destination,
                                       NodeId::client(c), msg->payload, sim_.now()));
          }
        } else {
          received[msg->destination.index] = msg->payload;
        }
        break;
      case MessageKind::TeacherInit:
        throw AccountingError("teacher init message delivered during a round");
    }
  }

  if (consumed != report.updates_sent) {
    throw AccountingError("round " + std::to_string(round) + ": " + std::to_string(report.updates_sent) +
                          " updates sent but " + std::to_string(consumed) + " aggregated");
  }
  if (!new_global) throw AccountingError("round " + std::to_string(round) + ": no global model produced");
  for (std::size_t i = 0; i < received.size(); ++i) {
    if (received[i] != new_global) {
      throw AccountingError("round " + std::to_string(round) + ": client " + std::to_string(i) +
                            " did not receive the global model");
    }
  }
  global_ = std::move(new_global);
  received_ = std::move(received);

  const auto& log = sim_.delivered();
  const auto events = std::span<const Message>(log).subspan(log_start);
  report.comm = comm_metrics(events, config_.topology.mode, report.aggregations, buffers);
  return report;
}

std::string scenario_label(TopologyMode mode, double alpha) {
  std::ostringstream os;
  os << (mode == TopologyMode::Hierarchical ? "hierarchical" : "centralised") << " alpha=" << alpha;
  return os.str();
}

ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                const std::function<void(const RoundReport&)>& on_round) {
  const auto start = std::chrono::steady_clock::now();
  Federation fed(config, data);
  ExperimentReport rep;
  rep.label = scenario_label(config.topology.mode, config.distill.alpha);
  rep.config = fed.config();
  rep.teacher = fed.teacher_summary();
  rep.teacher_init = fed.teacher_init_comm();
  rep.student_params = param_count(ModelArch::student(config.input_length)).total;
  rep.teacher_params = param_count(ModelArch::teacher(config.input_length)).total;
  rep.update_bytes = update_size_bytes(rep.student_params);
  rep.data_hash = data.shard_hash;

  const InputBatch test = data.test.all();
  for (std::uint32_t r = 1; r <= config.rounds; ++r) {
    RoundReport round = fed.run_round(r);
    if (r % config.eval_every == 0 || r == config.rounds) {
      if (test.size > 0) {
        round.metrics = metrics_from_confusion(evaluate(fed.global_model(), test), config.averaging);
        rep.accuracy_history.emplace_back(r, round.metrics->accuracy);
      } else {
        round.warnings.push_back("test split is empty; evaluation skipped");
      }
    }
    if (on_round) on_round(round);
    rep.rounds.push_back(std::move(round));
  }
  rep.rounds_to_threshold = rounds_to_threshold(rep.accuracy_history, config.accuracy_threshold);
  if (!rep.rounds.empty() && rep.rounds.back().metrics) rep.final_metrics = *rep.rounds.back().metrics;

  auto& t = rep.comm;
  double agg_sum = 0.0;
  std::size_t agg_events = 0;
  for (const auto& r : rep.rounds) {
    t.bytes_up += r.comm.total_bytes_up;
    t.bytes_down += r.comm.total_bytes_down;
    t.cloud_bytes_up += r.comm.cloud_bytes_up;
    t.cloud_messages_up += r.comm.cloud_messages_up;
    t.cloud_messages_down += r.comm.cloud_messages_down;
    t.messages += r.comm.messages;
    t.mean_c_to_s += r.comm.c_to_s_avg;
    t.mean_s_to_c += r.comm.s_to_c_avg;
    for (const auto& a : r.aggregations) {
      agg_sum += a.wall_seconds;
      ++agg_events;
    }
    for (const auto& [node, peak] : r.comm.peak_buffer_bytes) {
      auto& slot = node == "cloud" ? t.peak_cloud_buffer : t.peak_edge_buffer;
      slot = std::max(slot, peak);
    }
  }
  if (!rep.rounds.empty()) {
    t.mean_c_to_s /= static_cast<double>(rep.rounds.size());
    t.mean_s_to_c /= static_cast<double>(rep.rounds.size());
  }
  if (agg_events > 0) t.mean_agg_time = agg_sum / static_cast<double>(agg_events);

  if (test.size > 0) {
    std::vector<std::size_t> idx(std::min<std::size_t>(1024, test.size));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const InputBatch sample = data.test.batch(idx);
    rep.student_inference = inference_time(fed.global_model(), sample, 5);
    if (fed.teacher()) rep.teacher_inference = inference_time(*fed.teacher(), sample, 5);
  }
  rep.trace = fed.network().delivered();
  rep.wall_seconds = seconds_since(start);
  return rep;
}

std::vector<ExperimentReport> run_scenario_matrix(
    const ExperimentConfig& base, const PreparedData& data,
    const std::function<void(const ExperimentConfig&, const RoundReport&)>& on_round) {
  std::vector<ExperimentReport> out;
  for (const auto mode : {TopologyMode::Centralised, TopologyMode::Hierarchical}) {
    for (const double alpha : {0.0, 0.5}) {
      ExperimentConfig cfg = base;
      cfg.topology.mode = mode;
      cfg.distill.alpha = alpha;
      std::function<void(const RoundReport&)> hook;
      if (on_round) hook = [&](const RoundReport& r) { on_round(cfg, r); };
      out.push_back(run_experiment(cfg, data, hook));
    }
  }
  return out;
}

}  // namespace fedkd

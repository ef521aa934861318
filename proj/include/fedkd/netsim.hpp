#pragma once

// Simulated communication substrate. Every protocol message is routed over a
// latency + size/bandwidth link on a single simulated timeline; aggregation
// cost is the only wall-clock quantity.

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "fedkd/federation.hpp"
#include "fedkd/nn.hpp"

namespace fedkd {

enum class TopologyMode { Hierarchical, Centralised };

std::string to_string(TopologyMode mode);

enum class Tier { ClientToEdge, EdgeToCloud, ClientToCloud };

std::string to_string(Tier tier);

struct LinkModel {
  double latency = 0.0;     // seconds
  double bandwidth = 1e7;   // bytes / second
  Tier tier = Tier::ClientToEdge;

  void validate() const;
  double transfer_seconds(std::size_t bytes) const noexcept {
    return latency + static_cast<double>(bytes) / bandwidth;
  }
};

struct LinkConfig {
  LinkModel client_edge{0.005, 1e7, Tier::ClientToEdge};
  LinkModel edge_cloud{0.020, 1e7, Tier::EdgeToCloud};
  LinkModel client_cloud{0.050, 1e7, Tier::ClientToCloud};

  const LinkModel& for_tier(Tier tier) const noexcept;
  void validate() const;
};

enum class NodeRole { Client, Edge, Cloud };

struct NodeId {
  NodeRole role = NodeRole::Cloud;
  std::uint32_t index = 0;

  static NodeId client(std::uint32_t i) { return {NodeRole::Client, i}; }
  static NodeId edge(std::uint32_t i) { return {NodeRole::Edge, i}; }
  static NodeId cloud() { return {NodeRole::Cloud, 0}; }

  std::string to_string() const;  // "client3", "edge1", "cloud"
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

// Throws UsageError for pairs that share no link (e.g. client to client).
Tier tier_between(NodeId a, NodeId b);

enum class MessageKind { ClientUpdate, ClusterAggregate, GlobalBroadcast, TeacherInit };

std::string to_string(MessageKind kind);

struct Message {
  std::uint64_t id = 0;  // assigned by the simulator
  std::uint32_t round = 0;
  MessageKind kind = MessageKind::ClientUpdate;
  NodeId source;
  NodeId destination;
  std::size_t payload_bytes = 0;
  double send_time = 0.0;
  double delivery_time = 0.0;
  std::shared_ptr<const WeightVector> payload;

  double transfer_seconds() const noexcept { return delivery_time - send_time; }
};

// Builds a message whose payload_bytes is the blob size of `weights`.
Message make_message(std::uint32_t round, MessageKind kind, NodeId source, NodeId destination,
                     std::shared_ptr<const WeightVector> weights, double send_time);

class Simulator {
 public:
  explicit Simulator(LinkConfig links = {});

  const LinkConfig& links() const noexcept { return links_; }
  double now() const noexcept { return clock_; }

  // Queues `msg` on `link`: delivery = send_time + latency + bytes / bandwidth.
  // The link tier must match the endpoints and send_time may not precede now().
  const Message& transmit(Message msg, const LinkModel& link);
  // Picks the configured link for the endpoints.
  const Message& transmit(Message msg);

  // Pops the earliest delivery (ties by message id) and advances the clock.
  std::optional<Message> deliver_next();
  bool idle() const noexcept { return queue_.empty(); }

  const std::vector<Message>& delivered() const noexcept { return log_; }

 private:
  struct Later {
    bool operator()(const Message& a, const Message& b) const noexcept {
      if (a.delivery_time != b.delivery_time) return a.delivery_time > b.delivery_time;
      return a.id > b.id;
    }
  };

  LinkConfig links_;
  double clock_ = 0.0;
  std::uint64_t next_id_ = 1;
  std::priority_queue<Message, std::vector<Message>, Later> queue_;
  Message last_queued_;
  std::vector<Message> log_;
};

// CSV trace: round,msg_id,kind,src,dst,bytes,send_time,delivery_time
void write_trace_csv(std::ostream& os, std::span<const Message> events);

// Mean client-to-central-server time over a round's events. Hierarchical:
// client->edge transfer plus the edge->cloud transfer of that cluster's
// aggregate. Centralised: client->cloud transfer. Throws AccountingError for
// incomplete rounds.
double end_to_end_upstream_time(std::span<const Message> round_events, TopologyMode mode);
// Reverse direction over GlobalBroadcast messages.
double end_to_end_downstream_time(std::span<const Message> round_events, TopologyMode mode);

struct AggregationRecord {
  std::uint32_t round = 0;
  NodeId node;
  std::size_t inputs = 0;
  std::size_t floats_read = 0;
  double wall_seconds = 0.0;
};

// Runs `aggregate(cost)` and records its wall time and op count for `node`.
// Nothing is recorded for zero inputs.
template <typename F>
auto timed_aggregation(std::uint32_t round, NodeId node, std::size_t inputs,
                       std::vector<AggregationRecord>& records, F&& aggregate) {
  AggregationCost cost;
  const auto start = std::chrono::steady_clock::now();
  auto result = aggregate(cost);
  const auto stop = std::chrono::steady_clock::now();
  if (inputs > 0) {
    records.push_back({round, node, inputs, cost.floats_read,
                       std::chrono::duration<double>(stop - start).count()});
  }
  return result;
}

// Peak simultaneously buffered update bytes per node.
class BufferTracker {
 public:
  void hold(NodeId node, std::size_t bytes);
  void release(NodeId node, std::size_t bytes);
  std::size_t peak(NodeId node) const;
  std::size_t current(NodeId node) const;
  const std::map<NodeId, std::size_t>& peaks() const noexcept { return peak_; }
  void reset();

 private:
  std::map<NodeId, std::size_t> current_;
  std::map<NodeId, std::size_t> peak_;
};

struct CommMetrics {
  double c_to_s_avg = 0.0;                // simulated seconds
  double s_to_c_avg = 0.0;                // simulated seconds
  double agg_time = 0.0;                  // wall seconds, mean per aggregation event
  std::size_t total_bytes_up = 0;         // every upstream hop
  std::size_t total_bytes_down = 0;       // every downstream hop
  std::size_t cloud_bytes_up = 0;         // received by the central server
  std::size_t cloud_messages_up = 0;
  std::size_t cloud_messages_down = 0;
  std::size_t messages = 0;
  std::size_t cloud_floats_read = 0;      // op counter of the central aggregation
  double round_span = 0.0;                // simulated seconds from first send to last delivery
  std::map<std::string, std::size_t> peak_buffer_bytes;
  std::map<std::string, double> agg_wall_by_node;
};

CommMetrics comm_metrics(std::span<const Message> round_events, TopologyMode mode,
                         std::span<const AggregationRecord> aggregations,
                         const BufferTracker& buffers);

}  // namespace fedkd

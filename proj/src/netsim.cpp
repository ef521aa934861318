#include "fedkd/netsim.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>

#include "fedkd/error.hpp"

namespace fedkd {

std::string to_string(TopologyMode mode) {
  return mode == TopologyMode::Hierarchical ? "hierarchical" : "centralised";
}

std::string to_string(Tier tier) {
  switch (tier) {
    case Tier::ClientToEdge: return "client-edge";
    case Tier::EdgeToCloud: return "edge-cloud";
    case Tier::ClientToCloud: return "client-cloud";
  }
  return "?";
}

std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::ClientUpdate: return "ClientUpdate";
    case MessageKind::ClusterAggregate: return "ClusterAggregate";
    case MessageKind::GlobalBroadcast: return "GlobalBroadcast";
    case MessageKind::TeacherInit: return "TeacherInit";
  }
  return "?";
}

void LinkModel::validate() const {
  if (!(latency >= 0.0)) throw ConfigError("link " + to_string(tier) + ": latency must be >= 0");
  if (!(bandwidth > 0.0)) throw ConfigError("link " + to_string(tier) + ": bandwidth must be > 0");
}

const LinkModel& LinkConfig::for_tier(Tier tier) const noexcept {
  switch (tier) {
    case Tier::ClientToEdge: return client_edge;
    case Tier::EdgeToCloud: return edge_cloud;
    case Tier::ClientToCloud: return client_cloud;
  }
  return client_cloud;
}

void LinkConfig::validate() const {
  client_edge.validate();
  edge_cloud.validate();
  client_cloud.validate();
}

std::string NodeId::to_string() const {
  switch (role) {
    case NodeRole::Client: return "client" + std::to_string(index);
    case NodeRole::Edge: return "edge" + std::to_string(index);
    case NodeRole::Cloud: return "cloud";
  }
  return "?";
}

Tier tier_between(NodeId a, NodeId b) {
  auto is = [&](NodeRole x, NodeRole y) {
    return (a.role == x && b.role == y) || (a.role == y && b.role == x);
  };
  if (is(NodeRole::Client, NodeRole::Edge)) return Tier::ClientToEdge;
  if (is(NodeRole::Edge, NodeRole::Cloud)) return Tier::EdgeToCloud;
  if (is(NodeRole::Client, NodeRole::Cloud)) return Tier::ClientToCloud;
  throw UsageError("no link between " + a.to_string() + " and " + b.to_string());
}

Message make_message(std::uint32_t round, MessageKind kind, NodeId source, NodeId destination,
                     std::shared_ptr<const WeightVector> weights, double send_time) {
  Message m;
  m.round = round;
  m.kind = kind;
  m.source = source;
  m.destination = destination;
  m.payload_bytes = weights ? update_size_bytes(*weights) : update_size_bytes(std::size_t{0});
  m.send_time = send_time;
  m.payload = std::move(weights);
  return m;
}

Simulator::Simulator(LinkConfig links) : links_(links) { links_.validate(); }

const Message& Simulator::transmit(Message msg, const LinkModel& link) {
  if (tier_between(msg.source, msg.destination) != link.tier) {
    throw UsageError("transmit: link tier " + to_string(link.tier) + " does not connect " +
                     msg.source.to_string() + " and " + msg.destination.to_string());
  }
  if (msg.send_time < clock_) throw UsageError("transmit: send_time precedes the simulated clock");
  msg.id = next_id_++;
  msg.delivery_time = msg.send_time + link.transfer_seconds(msg.payload_bytes);
  queue_.push(msg);
  last_queued_ = std::move(msg);
  return last_queued_;
}

const Message& Simulator::transmit(Message msg) {
  const Tier tier = tier_between(msg.source, msg.destination);
  return transmit(std::move(msg), links_.for_tier(tier));
}

std::optional<Message> Simulator::deliver_next() {
  if (queue_.empty()) return std::nullopt;
  Message m = queue_.top();
  queue_.pop();
  clock_ = std::max(clock_, m.delivery_time);
  log_.push_back(m);
  log_.back().payload.reset();  // the log keeps accounting data only
  return m;
}

void write_trace_csv(std::ostream& os, std::span<const Message> events) {
  os << "round,msg_id,kind,src,dst,bytes,send_time,delivery_time\n";
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(9) << std::fixed;
  for (const auto& m : events) {
    os << m.round << ',' << m.id << ',' << to_string(m.kind) << ',' << m.source.to_string() << ','
       << m.destination.to_string() << ',' << m.payload_bytes << ',' << m.send_time << ','
       << m.delivery_time << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

namespace {

// Mean two-hop (hierarchical) or one-hop (centralised) transfer time for
// messages of `kind`. `upstream` selects the direction.
double path_time(std::span<const Message> events, TopologyMode mode, MessageKind client_hop_kind,
                 MessageKind edge_hop_kind, bool upstream) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& m : events) {
    if (m.kind != client_hop_kind) continue;
    const NodeId client = upstream ? m.source : m.destination;
    const NodeId other = upstream ? m.destination : m.source;
    if (client.role != NodeRole::Client) continue;
    if (mode == TopologyMode::Centralised) {
      if (other.role != NodeRole::Cloud) {
        throw AccountingError("centralised round routes a client message via " + other.to_string());
      }
      total += m.transfer_seconds();
      ++count;
      continue;
    }
    if (other.role != NodeRole::Edge) {
      throw AccountingError("hierarchical round routes a client message to " + other.to_string());
    }
    const Message* hop = nullptr;
    for (const auto& e : events) {
      if (e.kind != edge_hop_kind || e.round != m.round) continue;
      const NodeId edge_end = upstream ? e.source : e.destination;
      const NodeId cloud_end = upstream ? e.destination : e.source;
      if (edge_end == other && cloud_end.role == NodeRole::Cloud) {
        hop = &e;
        break;
      }
    }
    if (!hop) {
      throw AccountingError("round " + std::to_string(m.round) + ": no edge-cloud hop for " +
                            client.to_string() + " via " + other.to_string());
    }
    total += m.transfer_seconds() + hop->transfer_seconds();
    ++count;
  }
  if (count == 0) throw AccountingError("round has no client messages to account");
  return total / static_cast<double>(count);
}

}  // namespace

double end_to_end_upstream_time(std::span<const Message> round_events, TopologyMode mode) {
  return path_time(round_events, mode, MessageKind::ClientUpdate, MessageKind::ClusterAggregate, true);
}

double end_to_end_downstream_time(std::span<const Message> round_events, TopologyMode mode) {
  return path_time(round_events, mode, MessageKind::GlobalBroadcast, MessageKind::GlobalBroadcast,
                   false);
}

void BufferTracker::hold(NodeId node, std::size_t bytes) {
  auto& cur = current_[node];
  cur += bytes;
  auto& pk = peak_[node];
  pk = std::max(pk, cur);
}

void BufferTracker::release(NodeId node, std::size_t bytes) {
  auto& cur = current_[node];
  if (bytes > cur) throw AccountingError("buffer release exceeds held bytes at " + node.to_string());
  cur -= bytes;
}

std::size_t BufferTracker::peak(NodeId node) const {
  const auto it = peak_.find(node);
  return it == peak_.end() ? 0 : it->second;
}

std::size_t BufferTracker::current(NodeId node) const {
  const auto it = current_.find(node);
  return it == current_.end() ? 0 : it->second;
}

void BufferTracker::reset() {
  current_.clear();
  peak_.clear();
}

CommMetrics comm_metrics(std::span<const Message> round_events, TopologyMode mode,
                         std::span<const AggregationRecord> aggregations,
                         const BufferTracker& buffers) {
  CommMetrics cm;
  bool any_up = false;
  bool any_down = false;
  double first_send = std::numeric_limits<double>::infinity();
  double last_delivery = 0.0;
  for (const auto& m : round_events) {
    if (m.kind == MessageKind::TeacherInit) continue;
    ++cm.messages;
    first_send = std::min(first_send, m.send_time);
    last_delivery = std::max(last_delivery, m.delivery_time);
    if (m.kind == MessageKind::GlobalBroadcast) {
      any_down = true;
      cm.total_bytes_down += m.payload_bytes;
      if (m.source.role == NodeRole::Cloud) ++cm.cloud_messages_down;
    } else {
      any_up = true;
      cm.total_bytes_up += m.payload_bytes;
      if (m.destination.role == NodeRole::Cloud) {
        ++cm.cloud_messages_up;
        cm.cloud_bytes_up += m.payload_bytes;
      }
    }
  }
  if (any_up) cm.c_to_s_avg = end_to_end_upstream_time(round_events, mode);
  if (any_down) cm.s_to_c_avg = end_to_end_downstream_time(round_events, mode);
  if (cm.messages > 0) cm.round_span = last_delivery - first_send;

  double wall = 0.0;
  for (const auto& a : aggregations) {
    wall += a.wall_seconds;
    cm.agg_wall_by_node[a.node.to_string()] += a.wall_seconds;
    if (a.node.role == NodeRole::Cloud) cm.cloud_floats_read += a.floats_read;
  }
  if (!aggregations.empty()) cm.agg_time = wall / static_cast<double>(aggregations.size());
  for (const auto& [node, peak] : buffers.peaks()) cm.peak_buffer_bytes[node.to_string()] = peak;
  return cm;
}

}  // namespace fedkd

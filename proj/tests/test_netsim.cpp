#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "fedkd/error.hpp"
#include "fedkd/netsim.hpp"

using namespace fedkd;

namespace {

Message raw(MessageKind kind, NodeId src, NodeId dst, std::size_t bytes, double send, std::uint32_t round = 1) {
  Message m;
  m.round = round;
  m.kind = kind;
  m.source = src;
  m.destination = dst;
  m.payload_bytes = bytes;
  m.send_time = send;
  return m;
}

// Message-level round: N clients, K equal clusters, equal payloads. Aggregation
// takes no simulated time.
std::vector<Message> simulate_round(Simulator& sim, TopologyMode mode, std::uint32_t n, std::uint32_t k,
                                    std::size_t bytes, BufferTracker* buffers = nullptr) {
  const std::size_t start = sim.delivered().size();
  const std::uint32_t per = n / k;
  const double t0 = sim.now();
  for (std::uint32_t c = 0; c < n; ++c) {
    const NodeId dst = mode == TopologyMode::Hierarchical ? NodeId::edge(c / per) : NodeId::cloud();
    sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(c), dst, bytes, t0));
  }
  std::vector<std::uint32_t> edge_in(k, 0);
  std::uint32_t cloud_in = 0;
  const std::uint32_t cloud_expected = mode == TopologyMode::Hierarchical ? k : n;
  while (auto m = sim.deliver_next()) {
    if (buffers && m->kind != MessageKind::GlobalBroadcast) buffers->hold(m->destination, m->payload_bytes);
    if (m->kind == MessageKind::ClientUpdate && m->destination.role == NodeRole::Edge) {
      if (++edge_in[m->destination.index] == per) {
        if (buffers) buffers->release(m->destination, per * bytes);
        sim.transmit(raw(MessageKind::ClusterAggregate, m->destination, NodeId::cloud(), bytes, sim.now()));
      }
    } else if (m->destination.role == NodeRole::Cloud) {
      if (++cloud_in == cloud_expected) {
        if (buffers) buffers->release(NodeId::cloud(), cloud_expected * bytes);
        if (mode == TopologyMode::Hierarchical) {
          for (std::uint32_t e = 0; e < k; ++e) {
            sim.transmit(raw(MessageKind::GlobalBroadcast, NodeId::cloud(), NodeId::edge(e), bytes, sim.now()));
          }
        } else {
          for (std::uint32_t c = 0; c < n; ++c) {
            sim.transmit(raw(MessageKind::GlobalBroadcast, NodeId::cloud(), NodeId::client(c), bytes, sim.now()));
          }
        }
      }
    } else if (m->kind == MessageKind::GlobalBroadcast && m->destination.role == NodeRole::Edge) {
      for (std::uint32_t c = m->destination.index * per; c < (m->destination.index + 1) * per; ++c) {
        sim.transmit(raw(MessageKind::GlobalBroadcast, m->destination, NodeId::client(c), bytes, sim.now()));
      }
    }
  }
  return {sim.delivered().begin() + static_cast<std::ptrdiff_t>(start), sim.delivered().end()};
}

}  // namespace

TEST_CASE("transfer time formula") {
  const LinkModel link{0.01, 1e6, Tier::ClientToEdge};
  CHECK(link.transfer_seconds(1000000) == doctest::Approx(1.01));
  CHECK(link.transfer_seconds(0) == 0.01);
  const LinkModel five_ms{0.005, 1e6, Tier::ClientToEdge};
  CHECK(five_ms.transfer_seconds(57640) == doctest::Approx(0.06264).epsilon(1e-9));
}

TEST_CASE("simulator applies the formula to a queued message") {
  Simulator sim;
  const LinkModel link{0.005, 1e6, Tier::ClientToEdge};
  const auto& m = sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::edge(0), 57640, 0.0), link);
  CHECK(m.delivery_time == doctest::Approx(0.06264));
  const auto d = sim.deliver_next();
  REQUIRE(d);
  CHECK(sim.now() == doctest::Approx(0.06264));
  CHECK_FALSE(sim.deliver_next());
}

TEST_CASE("delivery order is by time then id") {
  Simulator sim;
  sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::cloud(), 1000, 0.0));
  sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(1), NodeId::edge(0), 1000, 0.0));
  sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(2), NodeId::edge(0), 1000, 0.0));
  std::vector<std::uint32_t> order;
  double last = 0.0;
  while (auto m = sim.deliver_next()) {
    CHECK(m->delivery_time >= last);
    last = m->delivery_time;
    order.push_back(m->source.index);
  }
  CHECK(order == std::vector<std::uint32_t>{1, 2, 0});
}

TEST_CASE("links must match endpoints and time cannot go backwards") {
  Simulator sim;
  const LinkModel edge_link{0.02, 1e7, Tier::EdgeToCloud};
  CHECK_THROWS(sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::edge(0), 10, 0.0), edge_link));
  CHECK_THROWS_AS(tier_between(NodeId::client(0), NodeId::client(1)), UsageError);
  sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::edge(0), 10, 0.0));
  (void)sim.deliver_next();
  CHECK_THROWS(sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::edge(0), 10, 0.0)));
  CHECK_THROWS(LinkModel{-1.0, 1e6, Tier::ClientToEdge}.validate());
  CHECK_THROWS(LinkModel{0.0, 0.0, Tier::ClientToEdge}.validate());
}

TEST_CASE("delivery never precedes send plus latency") {
  Simulator sim;
  for (auto mode : {TopologyMode::Hierarchical, TopologyMode::Centralised}) {
    for (const auto& m : simulate_round(sim, mode, 9, 3, 57512)) {
      CHECK(m.delivery_time >= m.send_time + sim.links().for_tier(tier_between(m.source, m.destination)).latency);
    }
  }
}

TEST_CASE("symmetric clients share one upstream time") {
  Simulator sim;
  const auto ev = simulate_round(sim, TopologyMode::Hierarchical, 9, 3, 57512);
  const LinkConfig l;
  const double single = l.client_edge.transfer_seconds(57512) + l.edge_cloud.transfer_seconds(57512);
  CHECK(end_to_end_upstream_time(ev, TopologyMode::Hierarchical) == doctest::Approx(single));
  CHECK(end_to_end_downstream_time(ev, TopologyMode::Hierarchical) == doctest::Approx(single));

  Simulator flat;
  const auto fev = simulate_round(flat, TopologyMode::Centralised, 9, 3, 57512);
  CHECK(end_to_end_upstream_time(fev, TopologyMode::Centralised) ==
        doctest::Approx(l.client_cloud.transfer_seconds(57512)));
}

TEST_CASE("default links make the hierarchical path faster") {
  Simulator h, c;
  const auto hev = simulate_round(h, TopologyMode::Hierarchical, 9, 3, 57512);
  const auto cev = simulate_round(c, TopologyMode::Centralised, 9, 3, 57512);
  CHECK(end_to_end_upstream_time(hev, TopologyMode::Hierarchical) <
        end_to_end_upstream_time(cev, TopologyMode::Centralised));
}

TEST_CASE("incomplete rounds are an accounting error") {
  Simulator sim;
  sim.transmit(raw(MessageKind::ClientUpdate, NodeId::client(0), NodeId::edge(0), 100, 0.0));
  (void)sim.deliver_next();
  CHECK_THROWS_AS(end_to_end_upstream_time(sim.delivered(), TopologyMode::Hierarchical), AccountingError);
}

TEST_CASE("cloud-link byte ratio is K over N") {
  Simulator h, c;
  BufferTracker hb, cb;
  const auto hev = simulate_round(h, TopologyMode::Hierarchical, 9, 3, 57512, &hb);
  const auto cev = simulate_round(c, TopologyMode::Centralised, 9, 3, 57512, &cb);
  const auto hm = comm_metrics(hev, TopologyMode::Hierarchical, {}, hb);
  const auto cm = comm_metrics(cev, TopologyMode::Centralised, {}, cb);
  CHECK(hm.cloud_messages_up == 3);
  CHECK(cm.cloud_messages_up == 9);
  CHECK(hm.cloud_bytes_up * 3 == cm.cloud_bytes_up);
  CHECK(cb.peak(NodeId::cloud()) == 9 * 57512);
  CHECK(hb.peak(NodeId::cloud()) == 3 * 57512);
  CHECK(hb.peak(NodeId::edge(0)) == 3 * 57512);
}

TEST_CASE("doubling bandwidth halves the size-dependent part") {
  LinkConfig slow;
  LinkConfig fast = slow;
  for (LinkModel* l : {&fast.client_edge, &fast.edge_cloud, &fast.client_cloud}) l->bandwidth *= 2;
  for (Tier t : {Tier::ClientToEdge, Tier::EdgeToCloud, Tier::ClientToCloud}) {
    const double a = slow.for_tier(t).transfer_seconds(57512) - slow.for_tier(t).latency;
    const double b = fast.for_tier(t).transfer_seconds(57512) - fast.for_tier(t).latency;
    CHECK(b == doctest::Approx(a / 2));
  }
}

TEST_CASE("bytes over rounds are additive and conserved") {
  Simulator sim;
  std::size_t first = 0;
  std::size_t total = 0;
  for (std::uint32_t r = 0; r < 4; ++r) {
    const auto ev = simulate_round(sim, TopologyMode::Hierarchical, 9, 3, 1000);
    const auto cm = comm_metrics(ev, TopologyMode::Hierarchical, {}, BufferTracker{});
    if (r == 0) first = cm.total_bytes_up + cm.total_bytes_down;
    total += cm.total_bytes_up + cm.total_bytes_down;
  }
  CHECK(total == 4 * first);
  std::size_t sent = 0;
  for (const auto& m : sim.delivered()) sent += m.payload_bytes;
  CHECK(sent == total);
}

TEST_CASE("aggregation timing records only non-empty events") {
  std::vector<AggregationRecord> rec;
  (void)timed_aggregation(1, NodeId::cloud(), 0, rec, [](AggregationCost&) { return 0; });
  CHECK(rec.empty());
  (void)timed_aggregation(1, NodeId::cloud(), 3, rec, [](AggregationCost& c) {
    c.floats_read = 3 * 14374;
    volatile double s = 0;
    for (int i = 0; i < 1000; ++i) s = s + i;
    return static_cast<double>(s);
  });
  REQUIRE(rec.size() == 1);
  CHECK(rec[0].wall_seconds > 0.0);
  CHECK(rec[0].floats_read == 3 * 14374);
}

TEST_CASE("buffer tracker rejects over-release") {
  BufferTracker b;
  b.hold(NodeId::edge(1), 10);
  b.hold(NodeId::edge(1), 5);
  b.release(NodeId::edge(1), 15);
  CHECK(b.peak(NodeId::edge(1)) == 15);
  CHECK(b.current(NodeId::edge(1)) == 0);
  CHECK_THROWS_AS(b.release(NodeId::edge(1), 1), AccountingError);
}

TEST_CASE("trace csv has one row per message") {
  Simulator sim;
  const auto ev = simulate_round(sim, TopologyMode::Centralised, 9, 3, 100);
  std::ostringstream os;
  write_trace_csv(os, ev);
  const std::string s = os.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(ev.size() + 1));
  CHECK(s.rfind("round,msg_id,kind,src,dst,bytes,send_time,delivery_time\n", 0) == 0);
}

#include "fedkd/federation.hpp"

#include <algorithm>
#include <string>

#include "fedkd/error.hpp"

namespace fedkd {
namespace {

template <typename Update, typename Key>
std::vector<const Update*> sorted_by(std::span<const Update> items, Key key) {
  std::vector<const Update*> order;
  order.reserve(items.size());
  for (const auto& u : items) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [&](const Update* a, const Update* b) { return key(*a) < key(*b); });
  return order;
}

template <typename Update>
void require_same_round(std::span<const Update> items, const char* what) {
  for (const auto& u : items) {
    if (u.round != items.front().round) {
      throw ProtocolError(std::string(what) + ": updates from mixed rounds (" +
                          std::to_string(items.front().round) + " vs " + std::to_string(u.round) + ")");
    }
  }
}

}  // namespace

WeightVector mean_weights(std::span<const WeightVector* const> inputs) {
  if (inputs.empty()) throw ProtocolError("mean of zero weight vectors");
  const WeightVector& first = *inputs.front();
  for (const auto* w : inputs) {
    if (!w->same_layout(first)) throw ProtocolError("aggregation over differing weight layouts");
  }
  WeightVector out = first.zeros_like();
  const double n = static_cast<double>(inputs.size());
  std::vector<double> acc;
  for (std::size_t t = 0; t < out.tensors.size(); ++t) {
    acc.assign(out.tensors[t].size(), 0.0);
    for (const auto* w : inputs) {
      const auto& src = w->tensors[t].values;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(src[i]);
    }
    auto& dst = out.tensors[t].values;
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] / n);
  }
  return out;
}

ClusterAggregate aggregate_cluster(ClusterId cluster_id, std::span<const ClientUpdate> updates,
                                   AggregationCost* cost) {
  if (updates.empty()) throw ProtocolError("edge aggregation with no client updates");
  require_same_round(updates, "edge aggregation");
  const auto order = sorted_by(updates, [](const ClientUpdate& u) { return u.client_id; });
  std::vector<const WeightVector*> inputs;
  for (const auto* u : order) inputs.push_back(&u->weights);
  ClusterAggregate agg;
  agg.cluster_id = cluster_id;
  agg.round = updates.front().round;
  agg.weights = mean_weights(inputs);
  agg.member_count = updates.size();
  if (cost) cost->floats_read = updates.size() * agg.weights.total_params();
  return agg;
}

GlobalModelUpdate aggregate_global(std::span<const ClusterAggregate> aggregates,
                                   AggregationCost* cost) {
  if (aggregates.empty()) throw ProtocolError("global aggregation with no cluster aggregates");
  require_same_round(aggregates, "global aggregation");
  const auto order = sorted_by(aggregates, [](const ClusterAggregate& a) { return a.cluster_id; });
  std::vector<const WeightVector*> inputs;
  for (const auto* a : order) inputs.push_back(&a->weights);
  GlobalModelUpdate out;
  out.round = aggregates.front().round;
  out.weights = mean_weights(inputs);
  if (cost) cost->floats_read = aggregates.size() * out.weights.total_params();
  return out;
}

GlobalModelUpdate aggregate_flat(std::span<const ClientUpdate> updates, AggregationCost* cost) {
  if (updates.empty()) throw ProtocolError("flat aggregation with no client updates");
  require_same_round(updates, "flat aggregation");
  const auto order = sorted_by(updates, [](const ClientUpdate& u) { return u.client_id; });
  std::vector<const WeightVector*> inputs;
  for (const auto* u : order) inputs.push_back(&u->weights);
  GlobalModelUpdate out;
  out.round = updates.front().round;
  out.weights = mean_weights(inputs);
  if (cost) cost->floats_read = updates.size() * out.weights.total_params();
  return out;
}

}  // namespace fedkd

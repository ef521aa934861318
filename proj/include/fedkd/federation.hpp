#pragma once

// Two-tier FedAvg: edge servers average their members' weights, the central
// server averages the cluster means. Both tiers are unweighted means.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedkd/nn.hpp"

namespace fedkd {

using ClientId = std::uint32_t;
using ClusterId = std::uint32_t;

struct ClientUpdate {
  ClientId client_id = 0;
  std::uint32_t round = 0;
  WeightVector weights;
  std::size_t sample_count = 0;  // diagnostics only, the mean is unweighted
  double train_seconds = 0.0;    // wall clock
};

struct ClusterAggregate {
  ClusterId cluster_id = 0;
  std::uint32_t round = 0;
  WeightVector weights;
  std::size_t member_count = 0;
};

struct GlobalModelUpdate {
  std::uint32_t round = 0;
  WeightVector weights;
};

// Number of float32 values read by an aggregation; used as the op counter.
struct AggregationCost {
  std::size_t floats_read = 0;
};

// Unweighted element-wise mean. Inputs are summed in float64 in a fixed order
// (the order of `inputs`), so callers sort first for reproducibility.
WeightVector mean_weights(std::span<const WeightVector* const> inputs);

// Edge-tier FedAvg over a cluster's client updates, summed in client_id order.
ClusterAggregate aggregate_cluster(ClusterId cluster_id, std::span<const ClientUpdate> updates,
                                   AggregationCost* cost = nullptr);

// Central-tier FedAvg over cluster aggregates, summed in cluster_id order.
GlobalModelUpdate aggregate_global(std::span<const ClusterAggregate> aggregates,
                                   AggregationCost* cost = nullptr);

// Centralised mode: one flat FedAvg over every client update.
GlobalModelUpdate aggregate_flat(std::span<const ClientUpdate> updates,
                                 AggregationCost* cost = nullptr);

}  // namespace fedkd

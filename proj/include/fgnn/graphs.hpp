#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fgnn/ingest.hpp"
#include "fgnn/rng.hpp"

namespace fgnn {

struct Edge {
  ItemIndex src = 0;
  ItemIndex dst = 0;
  std::int64_t weight = 0;

  bool operator==(const Edge&) const = default;
};

/// Weighted directed graph of one session. Edge weight counts how often the
/// pair appears consecutively; every node carries a self-loop (weight 1 if
/// the item never repeats back to back).
struct SessionGraph {
  std::vector<ItemIndex> nodes;  // distinct items, first-appearance order
  std::vector<Edge> edges;       // sorted by (src, dst)
};

SessionGraph build_session_graph(const Session& session);

/// Union of training session graphs with summed weights. Immutable once
/// built.
class GlobalGraph {
 public:
  struct Neighbor {
    ItemIndex item;
    std::int64_t weight;  // sum of both directions
  };

  GlobalGraph() = default;
  /// `edges` need not be sorted; duplicate (src, dst) pairs are summed.
  /// Nodes are the endpoints of `edges`, each of which gets a self-loop of
  /// weight 1 if it has none. Zero-weight edges only register endpoints.
  GlobalGraph(std::size_t num_items, std::vector<Edge> edges);

  std::size_t num_items() const { return num_items_; }
  const std::vector<ItemIndex>& nodes() const { return nodes_; }
  bool contains(ItemIndex item) const;
  const std::vector<Edge>& edges() const { return edges_; }
  // 0 when absent.
  std::int64_t weight(ItemIndex src, ItemIndex dst) const;

  std::span<const Edge> out_edges(ItemIndex item) const;
  std::span<const Neighbor> neighbors(ItemIndex item) const;  // in and out, self excluded

 private:
  std::size_t num_items_ = 0;
  std::vector<ItemIndex> nodes_;
  std::vector<std::uint8_t> present_;
  std::vector<Edge> edges_;  // sorted by (src, dst)
  std::vector<std::size_t> out_offset_;
  std::vector<Neighbor> neighbors_;
  std::vector<std::size_t> neighbor_offset_;
};

/// Self-loop weight of a node is max(1, summed back-to-back repeats).
GlobalGraph build_global_graph(std::span<const Session> sessions, std::size_t num_items);

/// JSON: {"num_nodes": m, "edges": [[src, dst, weight], ...]} sorted by
/// (src, dst).
void save_global_graph(const GlobalGraph& graph, const std::filesystem::path& path);
GlobalGraph load_global_graph(const std::filesystem::path& path);

/// Session nodes plus neighbors sampled up to `hop` steps out in the global
/// graph. Local node ids index `nodes`; the session's own items come first.
struct BcsGraph {
  struct LocalEdge {
    int src = 0;
    int dst = 0;
    std::int64_t weight = 0;
    bool operator==(const LocalEdge&) const = default;
  };

  std::vector<ItemIndex> nodes;
  std::vector<std::uint8_t> core_mask;
  std::vector<LocalEdge> edges;  // sorted by (src, dst)
  int hop = 0;

  std::size_t core_size() const;
};

/// Draws up to `sample_cap` of `candidates` without replacement, each draw
/// proportional to weight among those left. Returns all candidates, in
/// order, when the cap does not bind.
std::vector<ItemIndex> weighted_sample(std::span<const GlobalGraph::Neighbor> candidates,
                                       std::size_t sample_cap, Rng& rng);

/// Expands the session hop by hop. Each frontier node draws neighbors from
/// its own stream keyed by (rng_seed, node, hop), so the node set at n hops
/// is contained in the node set at n + 1 hops for a fixed seed and cap.
/// Every global edge between included nodes is kept with its global weight.
BcsGraph sample_bcs(const GlobalGraph& global, const Session& session, int n_hops,
                    std::size_t sample_cap, std::uint64_t rng_seed);

}  // namespace fgnn

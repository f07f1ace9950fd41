#include "fgnn/graphs.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "fgnn/error.hpp"

namespace fgnn {
namespace {

bool edge_less(const Edge& a, const Edge& b) {
  return a.src != b.src ? a.src < b.src : a.dst < b.dst;
}

// Sorts and merges duplicate (src, dst) pairs by summing weights.
std::vector<Edge> coalesce(std::vector<Edge> edges) {
  std::sort(edges.begin(), edges.end(), edge_less);
  std::vector<Edge> out;
  for (const Edge& e : edges) {
    if (!out.empty() && out.back().src == e.src && out.back().dst == e.dst) {
      out.back().weight += e.weight;
    } else {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<Edge> consecutive_pairs(const Session& session) {
  std::vector<Edge> pairs;
  for (std::size_t k = 0; k + 1 < session.items.size(); ++k) {
    pairs.push_back({session.items[k], session.items[k + 1], 1});
  }
  return pairs;
}

}  // namespace

SessionGraph build_session_graph(const Session& session) {
  if (session.items.empty()) throw ContractError("build_session_graph: empty session");
  SessionGraph g;
  for (ItemIndex item : session.items) {
    if (std::find(g.nodes.begin(), g.nodes.end(), item) == g.nodes.end()) g.nodes.push_back(item);
  }
  auto edges = consecutive_pairs(session);
  for (ItemIndex v : g.nodes) {
    const bool has_loop =
        std::any_of(edges.begin(), edges.end(), [v](const Edge& e) { return e.src == v && e.dst == v; });
    if (!has_loop) edges.push_back({v, v, 1});
  }
  g.edges = coalesce(std::move(edges));
  return g;
}

GlobalGraph::GlobalGraph(std::size_t num_items, std::vector<Edge> edges)
    : num_items_(num_items), present_(num_items, 0) {
  for (const Edge& e : edges) {
    if (e.src < 0 || e.dst < 0 || static_cast<std::size_t>(e.src) >= num_items ||
        static_cast<std::size_t>(e.dst) >= num_items) {
      throw VocabError("global graph: edge endpoint outside [0, " + std::to_string(num_items) + ")");
    }
    if (e.weight < 0) throw ContractError("global graph: negative edge weight");
    present_[e.src] = present_[e.dst] = 1;
  }
  std::erase_if(edges, [](const Edge& e) { return e.weight == 0; });
  edges = coalesce(std::move(edges));
  std::vector<std::uint8_t> looped(num_items, 0);
  for (const Edge& e : edges) {
    if (e.src == e.dst) looped[e.src] = 1;
  }
  for (std::size_t v = 0; v < num_items; ++v) {
    if (present_[v]) {
      nodes_.push_back(static_cast<ItemIndex>(v));
      if (!looped[v]) edges.push_back({static_cast<ItemIndex>(v), static_cast<ItemIndex>(v), 1});
    }
  }
  edges_ = coalesce(std::move(edges));

  out_offset_.assign(num_items + 1, 0);
  for (const Edge& e : edges_) ++out_offset_[e.src + 1];
  for (std::size_t v = 0; v < num_items; ++v) out_offset_[v + 1] += out_offset_[v];

  // Undirected neighbor lists with both directions' weights summed.
  std::vector<std::vector<Neighbor>> adj(num_items);
  for (const Edge& e : edges_) {
    if (e.src == e.dst) continue;
    adj[e.src].push_back({e.dst, e.weight});
    adj[e.dst].push_back({e.src, e.weight});
  }
  neighbor_offset_.assign(num_items + 1, 0);
  for (std::size_t v = 0; v < num_items; ++v) {
    auto& list = adj[v];
    std::sort(list.begin(), list.end(),
              [](const Neighbor& a, const Neighbor& b) { return a.item < b.item; });
    std::size_t before = neighbors_.size();
    for (const Neighbor& n : list) {
      if (neighbors_.size() > before && neighbors_.back().item == n.item) {
        neighbors_.back().weight += n.weight;
      } else {
        neighbors_.push_back(n);
      }
    }
    neighbor_offset_[v + 1] = neighbors_.size();
  }
}

bool GlobalGraph::contains(ItemIndex item) const {
  return item >= 0 && static_cast<std::size_t>(item) < num_items_ && present_[item];
}

std::int64_t GlobalGraph::weight(ItemIndex src, ItemIndex dst) const {
  if (!contains(src)) return 0;
  const auto out = out_edges(src);
  const auto it = std::lower_bound(out.begin(), out.end(), dst,
                                   [](const Edge& e, ItemIndex d) { return e.dst < d; });
  return it != out.end() && it->dst == dst ? it->weight : 0;
}

std::span<const Edge> GlobalGraph::out_edges(ItemIndex item) const {
  if (item < 0 || static_cast<std::size_t>(item) >= num_items_) return {};
  return std::span<const Edge>(edges_).subspan(out_offset_[item],
                                               out_offset_[item + 1] - out_offset_[item]);
}

std::span<const GlobalGraph::Neighbor> GlobalGraph::neighbors(ItemIndex item) const {
  if (item < 0 || static_cast<std::size_t>(item) >= num_items_) return {};
  return std::span<const Neighbor>(neighbors_).subspan(
      neighbor_offset_[item], neighbor_offset_[item + 1] - neighbor_offset_[item]);
}

GlobalGraph build_global_graph(std::span<const Session> sessions, std::size_t num_items) {
  std::vector<Edge> edges;
  for (const Session& s : sessions) {
    for (ItemIndex i : s.items) {
      if (i < 0 || static_cast<std::size_t>(i) >= num_items) {
        throw VocabError("build_global_graph: item " + std::to_string(i) + " outside vocabulary");
      }
    }
    auto pairs = consecutive_pairs(s);
    edges.insert(edges.end(), pairs.begin(), pairs.end());
    // Single-item sessions have no pairs; register the node through its loop.
    if (s.items.size() == 1) edges.push_back({s.items[0], s.items[0], 0});
  }
  return GlobalGraph(num_items, std::move(edges));
}

void save_global_graph(const GlobalGraph& graph, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["num_nodes"] = graph.num_items();
  auto edges = nlohmann::json::array();
  for (const Edge& e : graph.edges()) edges.push_back({e.src, e.dst, e.weight});
  j["edges"] = std::move(edges);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

GlobalGraph load_global_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    std::vector<Edge> edges;
    edges.reserve(j.at("edges").size());
    for (const auto& e : j.at("edges")) {
      edges.push_back({e.at(0).get<ItemIndex>(), e.at(1).get<ItemIndex>(), e.at(2).get<std::int64_t>()});
    }
    return GlobalGraph(j.at("num_nodes").get<std::size_t>(), std::move(edges));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(path.string() + ": " + e.what(), 1);
  }
}

std::size_t BcsGraph::core_size() const {
  return static_cast<std::size_t>(std::count(core_mask.begin(), core_mask.end(), 1));
}

std::vector<ItemIndex> weighted_sample(std::span<const GlobalGraph::Neighbor> candidates,
                                       std::size_t sample_cap, Rng& rng) {
  std::vector<ItemIndex> picked;
  if (candidates.size() <= sample_cap) {
    for (const auto& c : candidates) picked.push_back(c.item);
    return picked;
  }
  std::vector<GlobalGraph::Neighbor> pool(candidates.begin(), candidates.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (picked.size() < sample_cap) {
    double total = 0.0;
    for (const auto& c : pool) total += static_cast<double>(c.weight);
    const double target = unit(rng) * total;
    double acc = 0.0;
    std::size_t chosen = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      acc += static_cast<double>(pool[i].weight);
      if (target < acc) {
        chosen = i;
        break;
      }
    }
    picked.push_back(pool[chosen].item);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

BcsGraph sample_bcs(const GlobalGraph& global, const Session& session, int n_hops,
                    std::size_t sample_cap, std::uint64_t rng_seed) {
  if (n_hops < 0) throw ContractError("sample_bcs: n_hops must be >= 0");
  if (sample_cap < 1) throw ContractError("sample_bcs: sample_cap must be >= 1");
  if (session.items.empty()) throw ContractError("sample_bcs: empty session");

  BcsGraph g;
  g.hop = n_hops;
  std::unordered_map<ItemIndex, int> local;
  const auto include = [&](ItemIndex item, bool core) {
    auto [it, inserted] = local.try_emplace(item, static_cast<int>(g.nodes.size()));
    if (inserted) {
      g.nodes.push_back(item);
      g.core_mask.push_back(core ? 1 : 0);
    }
    return inserted;
  };
  for (ItemIndex item : session.items) {
    if (!global.contains(item)) {
      throw MissingNodeError("sample_bcs: session item " + std::to_string(item) +
                             " is not in the global graph");
    }
    include(item, true);
  }

  std::vector<ItemIndex> frontier = g.nodes;
  for (int hop = 1; hop <= n_hops && !frontier.empty(); ++hop) {
    std::vector<ItemIndex> next;
    for (ItemIndex u : frontier) {
      Rng rng(derive_seed(rng_seed, {static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(hop)}));
      for (ItemIndex v : weighted_sample(global.neighbors(u), sample_cap, rng)) {
        if (include(v, false)) next.push_back(v);
      }
    }
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const Edge& e : global.out_edges(g.nodes[i])) {
      const auto it = local.find(e.dst);
      if (it != local.end()) g.edges.push_back({static_cast<int>(i), it->second, e.weight});
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const BcsGraph::LocalEdge& a, const BcsGraph::LocalEdge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  return g;
}

}  // namespace fgnn

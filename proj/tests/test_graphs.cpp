#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "fgnn/error.hpp"
#include "fgnn/graphs.hpp"
#include "support.hpp"

using namespace fgnn;
using fgnn::test::session_of;

namespace {

std::vector<Session> random_sessions(std::mt19937_64& rng, int count, int num_items) {
  std::uniform_int_distribution<int> item(0, num_items - 1), len(1, 7);
  std::vector<Session> out;
  for (int s = 0; s < count; ++s) {
    std::vector<ItemIndex> items;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) items.push_back(item(rng));
    out.push_back(session_of(items));
  }
  return out;
}

std::set<ItemIndex> node_set(const BcsGraph& g) { return {g.nodes.begin(), g.nodes.end()}; }

}  // namespace

TEST_CASE("session graph counts consecutive pairs and self-loops every node") {
  const SessionGraph g = build_session_graph(session_of({1, 2, 1, 2, 3, 3}));
  CHECK(g.nodes == std::vector<ItemIndex>{1, 2, 3});
  const std::vector<Edge> expected{{1, 1, 1}, {1, 2, 2}, {2, 1, 1}, {2, 2, 1}, {2, 3, 1}, {3, 3, 1}};
  CHECK(g.edges == expected);
  CHECK(build_session_graph(session_of({5})).edges == std::vector<Edge>{{5, 5, 1}});
  CHECK_THROWS_AS(build_session_graph(session_of({})), ContractError);
}

TEST_CASE("repeated back-to-back clicks raise the self-loop weight") {
  const SessionGraph g = build_session_graph(session_of({4, 4, 4, 6}));
  CHECK(g.edges == std::vector<Edge>{{4, 4, 2}, {4, 6, 1}, {6, 6, 1}});
}

TEST_CASE("global graph sums pair counts across sessions") {
  const std::vector<Session> sessions{session_of({0, 1, 2}), session_of({0, 1}), session_of({2, 2, 2}),
                                      session_of({3})};
  const GlobalGraph g = build_global_graph(sessions, 5);
  CHECK(g.weight(0, 1) == 2);
  CHECK(g.weight(1, 2) == 1);
  CHECK(g.weight(2, 2) == 2);  // two repeats beat the default loop
  CHECK(g.weight(0, 0) == 1);
  CHECK(g.weight(2, 0) == 0);
  CHECK(g.contains(3));
  CHECK(g.weight(3, 3) == 1);
  CHECK_FALSE(g.contains(4));
  CHECK(g.nodes() == std::vector<ItemIndex>{0, 1, 2, 3});
  CHECK(g.out_edges(0).size() == 2);

  const auto nb = g.neighbors(1);
  REQUIRE(nb.size() == 2);
  CHECK(nb[0].item == 0);
  CHECK(nb[0].weight == 2);
  CHECK(nb[1].item == 2);
}

TEST_CASE("neighbors merge both directions and exclude self") {
  const GlobalGraph g(3, {{0, 1, 3}, {1, 0, 2}, {1, 2, 1}, {1, 1, 4}});
  const auto nb = g.neighbors(1);
  REQUIRE(nb.size() == 2);
  CHECK(nb[0].item == 0);
  CHECK(nb[0].weight == 5);
  CHECK(nb[1].weight == 1);
  CHECK_THROWS_AS(GlobalGraph(2, {{0, 2, 1}}), VocabError);
}

TEST_CASE("single-session global graph equals the session graph") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_sessions(rng, 1, 6).front();
    const GlobalGraph g = build_global_graph(std::vector<Session>{s}, 6);
    const SessionGraph sg = build_session_graph(s);
    CHECK(g.edges() == sg.edges);
    std::vector<ItemIndex> sorted_nodes = sg.nodes;
    std::sort(sorted_nodes.begin(), sorted_nodes.end());
    CHECK(g.nodes() == sorted_nodes);
  }
}

TEST_CASE("global graph save and load round-trip") {
  std::mt19937_64 rng(2);
  const GlobalGraph g = build_global_graph(random_sessions(rng, 30, 12), 12);
  const auto path = std::filesystem::temp_directory_path() / "fgnn_graph_roundtrip.json";
  save_global_graph(g, path);
  const GlobalGraph back = load_global_graph(path);
  CHECK(back.num_items() == 12);
  CHECK(back.edges() == g.edges());
  CHECK(back.nodes() == g.nodes());
  std::filesystem::remove(path);
}

TEST_CASE("weighted sampling without replacement: frequency of the heavy candidate") {
  const std::vector<GlobalGraph::Neighbor> candidates{{10, 3}, {20, 1}};
  Rng rng(99);
  int heavy = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto picked = weighted_sample(candidates, 1, rng);
    REQUIRE(picked.size() == 1);
    heavy += picked[0] == 10;
  }
  CHECK(heavy / 10000.0 == doctest::Approx(0.75).epsilon(0.02 / 0.75));
}

TEST_CASE("weighted sampling returns everything when the cap does not bind") {
  const std::vector<GlobalGraph::Neighbor> candidates{{1, 1}, {2, 9}, {3, 4}};
  Rng rng(1);
  CHECK(weighted_sample(candidates, 3, rng) == std::vector<ItemIndex>{1, 2, 3});
  const auto two = weighted_sample(candidates, 2, rng);
  CHECK(two.size() == 2);
  CHECK(two[0] != two[1]);
}

TEST_CASE("second draw is renormalized over the remaining candidates") {
  // Weights {2, 1, 1}: P(second = item 2 | first = item 1) = 1/2, and the
  // unconditional P(item 1 among two draws) = 1/2 + 1/4 * 2/3 * 2 = 5/6.
  const std::vector<GlobalGraph::Neighbor> candidates{{1, 2}, {2, 1}, {3, 1}};
  Rng rng(5);
  int contains_heavy = 0;
  const int trials = 30000;
  for (int i = 0; i < trials; ++i) {
    const auto p = weighted_sample(candidates, 2, rng);
    contains_heavy += std::find(p.begin(), p.end(), 1) != p.end();
  }
  CHECK(contains_heavy / static_cast<double>(trials) == doctest::Approx(5.0 / 6.0).epsilon(0.015));
}

TEST_CASE("BCS-0 is the session's distinct items with their global edges") {
  const std::vector<Session> sessions{session_of({0, 1, 2}), session_of({2, 0}), session_of({1, 3})};
  const GlobalGraph g = build_global_graph(sessions, 4);
  const BcsGraph b = sample_bcs(g, session_of({2, 0, 2}), 0, 5, 1);
  CHECK(b.nodes == std::vector<ItemIndex>{2, 0});
  CHECK(b.core_size() == 2);
  // Global edges among {2, 0}: both self-loops and 2 -> 0.
  const std::vector<BcsGraph::LocalEdge> expected{{0, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  CHECK(b.edges == expected);
}

TEST_CASE("BCS node sets are nested in n and every node has an in-edge") {
  std::mt19937_64 rng(8);
  const auto sessions = random_sessions(rng, 60, 40);
  const GlobalGraph g = build_global_graph(sessions, 40);
  for (int trial = 0; trial < 40; ++trial) {
    const Session& s = sessions[trial];
    std::set<ItemIndex> previous;
    for (int n = 0; n <= 3; ++n) {
      const BcsGraph b = sample_bcs(g, s, n, 2, 1000 + trial);
      const auto nodes = node_set(b);
      CHECK(std::includes(nodes.begin(), nodes.end(), previous.begin(), previous.end()));
      previous = nodes;
      for (std::size_t i = 0; i < b.nodes.size(); ++i) {
        CHECK(b.core_mask[i] == (i < b.core_size() ? 1 : 0));
        const bool has_in = std::any_of(b.edges.begin(), b.edges.end(),
                                        [&](const auto& e) { return e.dst == static_cast<int>(i); });
        CHECK(has_in);
      }
      for (const auto& e : b.edges) CHECK(e.weight == g.weight(b.nodes[e.src], b.nodes[e.dst]));
    }
  }
}

TEST_CASE("BCS is deterministic per seed and rejects unknown items") {
  std::mt19937_64 rng(9);
  const auto sessions = random_sessions(rng, 50, 30);
  const GlobalGraph g = build_global_graph(sessions, 31);
  const BcsGraph a = sample_bcs(g, sessions[0], 2, 2, 77);
  const BcsGraph b = sample_bcs(g, sessions[0], 2, 2, 77);
  CHECK(a.nodes == b.nodes);
  CHECK(a.edges == b.edges);
  CHECK_THROWS_AS(sample_bcs(g, session_of({30}), 1, 2, 0), MissingNodeError);
}

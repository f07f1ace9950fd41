#include "fgnn/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fgnn/error.hpp"
#include "fgnn/eval.hpp"
#include "fgnn/gradcheck.hpp"
#include "fgnn/ops.hpp"
#include "fgnn/train.hpp"

namespace fgnn {
namespace {

std::vector<Session> random_sessions(Rng& rng, int count, int num_items, int max_len) {
  std::uniform_int_distribution<int> item(0, num_items - 1);
  std::uniform_int_distribution<int> len(2, max_len);
  std::vector<Session> out(static_cast<std::size_t>(count));
  for (Session& s : out) {
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s.items.push_back(item(rng));
  }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.dim = 4;
  c.layers = 2;
  c.heads = 2;
  c.readout_steps = 2;
  return c;
}

std::string format(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

SelfTestResult check_gradients(std::uint64_t seed) {
  Rng rng(seed);
  const auto sessions = random_sessions(rng, 6, 8, 5);
  const GlobalGraph global = build_global_graph(sessions, 8);
  const ModelConfig config = small_config();
  const ModelParams params = init_params(config, 8, 0.5, seed);
  std::vector<BcsGraph> graphs{sample_bcs(global, sessions[0], 1, 2, seed),
                               sample_bcs(global, sessions[1], 1, 2, seed + 1)};
  const GraphBatchView view = GraphBatchView::from_graphs(graphs);
  const std::vector<int> labels{sessions[0].items.back(), sessions[1].items.front()};
  std::vector<Tensor> leaves;
  for (const auto& [name, t] : params.named()) leaves.push_back(t);
  const auto result = grad_check(
      [&](Tape& tape) { return loss(tape, forward_logits(tape, view, params, config), labels); }, leaves);
  return {"gradient check", result.max_relative_error < 1e-4,
          "max relative error " + format(result.max_relative_error) + " over " +
              std::to_string(result.coordinates) + " coordinates"};
}

SelfTestResult check_attention(std::uint64_t seed) {
  Rng rng(seed);
  const ModelConfig config = small_config();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto sessions = random_sessions(rng, 5, 12, 6);
    const GlobalGraph global = build_global_graph(sessions, 12);
    const BcsGraph g = sample_bcs(global, sessions[0], 2, 3, seed + trial);
    const GraphBatchView view = GraphBatchView::from_graph(g);
    const ModelParams params = init_params(config, 12, 1.0, seed + trial);
    std::vector<LayerTrace> trace;
    Tape tape;
    encode(tape, view, params, config, &trace);
    for (const LayerTrace& layer : trace) {
      for (const Matrix& alpha : layer.attention) {
        std::vector<double> sums(view.num_nodes(), 0.0);
        for (std::size_t e = 0; e < view.num_edges(); ++e) sums[view.edge_dst[e]] += alpha(e, 0);
        for (double s : sums) worst = std::max(worst, std::abs(s - 1.0));
      }
    }
  }
  return {"attention normalization", worst <= 1e-12, "max |sum - 1| " + format(worst)};
}

SelfTestResult check_mask(std::uint64_t seed) {
  Rng rng(seed);
  const ModelConfig config = small_config();
  const ModelParams params = init_params(config, 4, 0.5, seed);
  std::normal_distribution<double> normal;
  Matrix x(5, config.dim);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const std::vector<int> graph_of_node(5, 0);
  const std::vector<std::uint8_t> core{1, 1, 0, 0, 0};
  const auto embed_with = [&](const Matrix& features, ReadoutMode mode) {
    Tape tape;
    return readout(tape, Tensor::constant(features), graph_of_node, 1, core, params.readout,
                   config.readout_steps, mode)
        .value();
  };
  Matrix perturbed = x;
  perturbed.bottomRows(3).array() += 3.0;
  const double mask_diff =
      (embed_with(x, ReadoutMode::kMask) - embed_with(perturbed, ReadoutMode::kMask)).cwiseAbs().maxCoeff();
  const double plain_diff =
      (embed_with(x, ReadoutMode::kPlain) - embed_with(perturbed, ReadoutMode::kPlain)).cwiseAbs().maxCoeff();
  return {"mask readout exactness", mask_diff == 0.0 && plain_diff > 0.0,
          "mask change " + format(mask_diff) + ", plain change " + format(plain_diff)};
}

SelfTestResult check_bcs(std::uint64_t seed) {
  Rng rng(seed);
  bool ok = true;
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const auto sessions = random_sessions(rng, 20, 30, 6);
    const GlobalGraph global = build_global_graph(sessions, 30);
    const Session& s = sessions[trial % sessions.size()];
    std::vector<ItemIndex> distinct = s.items;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    BcsGraph prev = sample_bcs(global, s, 0, 3, seed + trial);
    std::vector<ItemIndex> zero = prev.nodes;
    std::sort(zero.begin(), zero.end());
    ok = zero == distinct;
    for (int n = 1; n <= 3 && ok; ++n) {
      const BcsGraph next = sample_bcs(global, s, n, 3, seed + trial);
      std::vector<ItemIndex> a = prev.nodes, b = next.nodes;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      ok = std::includes(b.begin(), b.end(), a.begin(), a.end());
      prev = next;
    }
  }
  return {"BCS nesting", ok, ok ? "node sets nested for n = 0..3" : "nesting violated"};
}

SelfTestResult check_metrics(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  bool ok = true;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    RowVector scores(30);
    for (Index i = 0; i < scores.size(); ++i) scores(i) = std::round(normal(rng) * 2.0);
    const RankedList ranked = rank_items(scores);
    const int label = trial % 30;
    const auto rank = static_cast<int>(rank_of(scores, label));
    ok = ranked.items[rank - 1] == label;
    for (int k : {1, 5, 10, 20, 30}) {
      const double mrr = mrr_at_k(ranked, label, k);
      const int hit = recall_at_k(ranked, label, k);
      ok = ok && hit == (rank <= k ? 1 : 0) && mrr == (rank <= k ? 1.0 / rank : 0.0) && mrr <= hit;
    }
  }
  const RankedList fixed{{7, 3, 1, 4, 9}};
  ok = ok && mrr_at_k(fixed, 4, 20) == 0.25 && mrr_at_k(fixed, 8, 20) == 0.0;
  return {"metric definitions", ok, ok ? "rank, recall and MRR agree" : "metric mismatch"};
}

}  // namespace

std::vector<SelfTestResult> run_selftest(std::uint64_t seed) {
  using Check = SelfTestResult (*)(std::uint64_t);
  const Check checks[] = {check_gradients, check_attention, check_mask, check_bcs, check_metrics};
  const char* names[] = {"gradient check", "attention normalization", "mask readout exactness",
                         "BCS nesting", "metric definitions"};
  std::vector<SelfTestResult> out;
  for (std::size_t i = 0; i < std::size(checks); ++i) {
    try {
      out.push_back(checks[i](seed));
    } catch (const Error& e) {
      out.push_back({names[i], false, e.what()});
    }
  }
  return out;
}

}  // namespace fgnn

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgnn/config.hpp"
#include "fgnn/graphs.hpp"
#include "fgnn/ingest.hpp"
#include "fgnn/model.hpp"

namespace fgnn {

/// Items by descending score, ties by ascending index.
struct RankedList {
  std::vector<ItemIndex> items;
};

template <typename Derived>
RankedList rank_items(const Eigen::DenseBase<Derived>& scores) {
  RankedList out;
  out.items.resize(static_cast<std::size_t>(scores.size()));
  std::iota(out.items.begin(), out.items.end(), 0);
  std::stable_sort(out.items.begin(), out.items.end(),
                   [&](ItemIndex a, ItemIndex b) { return scores(a) > scores(b); });
  return out;
}

/// 1-based position of `label` in rank_items(scores), without sorting.
template <typename Derived>
std::size_t rank_of(const Eigen::DenseBase<Derived>& scores, ItemIndex label) {
  const auto target = scores(label);
  std::size_t ahead = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const auto s = scores(i);
    if (s > target || (s == target && i < label)) ++ahead;
  }
  return ahead + 1;
}

/// 1 if `label` is among the first k entries, else 0.
int recall_at_k(const RankedList& ranked, ItemIndex label, int k);
/// 1 / rank of `label` when it is within the first k entries, else 0.
double mrr_at_k(const RankedList& ranked, ItemIndex label, int k);

struct MetricAtK {
  int k = 0;
  double recall = 0.0;
  double mrr = 0.0;
};

struct BucketReport {
  std::size_t count = 0;
  std::vector<MetricAtK> metrics;
};

struct EvalReport {
  std::vector<int> ks;
  std::size_t count = 0;
  std::vector<MetricAtK> metrics;
  // Input length <= 5 versus longer.
  BucketReport short_sessions;
  BucketReport long_sessions;

  nlohmann::ordered_json to_json() const;
  /// R@K and MRR@K columns in percent.
  std::string to_table() const;
};

inline constexpr std::size_t kShortSessionMaxLength = 5;

/// Scores every item for each example of a batch: one row per example.
using BatchScorer = std::function<Matrix(std::span<const Example* const>)>;

/// Aggregates R@K and MRR@K over `examples`. The result does not depend on
/// the order of `examples` as long as the scorer treats each example
/// independently.
EvalReport evaluate(const BatchScorer& scorer, std::span<const Example> examples,
                    std::vector<int> ks, std::size_t batch_size = 100);

/// Seed of the evaluation-time BCS graph of an example; depends only on the
/// example's content.
std::uint64_t eval_sample_seed(std::uint64_t seed, const Example& example);

/// FGNN logits with evaluation-time neighbor sampling.
BatchScorer model_scorer(const ModelParams& params, const RunConfig& config,
                         const GlobalGraph& global);

enum class BaselineKind { kPop, kSPop, kItemKnn };

BaselineKind parse_baseline_kind(const std::string& name);

/// Training statistics shared by the baselines.
struct TrainStats {
  std::size_t num_items = 0;
  std::vector<std::int64_t> popularity;           // click counts
  std::vector<std::vector<int>> item_sessions;    // sessions containing each item, ascending
  std::vector<std::vector<ItemIndex>> session_items;  // distinct items per session
  double knn_regularization = 20.0;

  static TrainStats compute(std::span<const Session> sessions, std::size_t num_items,
                            double knn_regularization = 20.0);
};

/// pop: global click count. spop: clicks within the session first, global
/// count second. itemknn: co-occurrence cosine to the last known session item,
/// |S_i & S_j| / (sqrt(|S_i| |S_j|) + lambda), with the item itself last.
RowVector baseline_scores(BaselineKind kind, const TrainStats& stats,
                          std::span<const ItemIndex> session);
RankedList baseline_predict(BaselineKind kind, const TrainStats& stats,
                            std::span<const ItemIndex> session);
BatchScorer baseline_scorer(BaselineKind kind, const TrainStats& stats);

/// Pearson correlation of two dense vectors; NaN if either has zero variance.
template <typename A, typename B>
double pearson(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const auto n = static_cast<double>(a.size());
  const double sa = a.sum(), sb = b.sum();
  const double saa = a.squaredNorm(), sbb = b.squaredNorm(), sab = a.dot(b);
  const double var = (n * saa - sa * sa) * (n * sbb - sb * sb);
  if (!(var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (n * sab - sa * sb) / std::sqrt(var);
}

struct CorrelationReport {
  static constexpr double kBinWidth = 0.05;
  std::vector<std::size_t> histogram;  // 40 bins over [-1, 1], r = 1 in the last
  double mean = 0.0;
  std::size_t pairs = 0;
  std::size_t zero_variance_pairs = 0;
  bool sampled = false;

  nlohmann::ordered_json to_json() const;
};

/// Pearson correlation between within-session item-count vectors (over the
/// whole vocabulary) for pairs of sessions sharing an item. Enumerates every
/// such pair when an upper bound on their number is within `max_pairs`,
/// otherwise samples `max_pairs` pairs through shared items.
CorrelationReport session_correlation(std::span<const Session> sessions, std::size_t num_items,
                                      std::size_t max_pairs = 1000000, std::uint64_t seed = 0);

}  // namespace fgnn

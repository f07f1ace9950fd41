#include "fgnn/eval.hpp"

#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "fgnn/error.hpp"
#include "fgnn/rng.hpp"
#include "fgnn/train.hpp"

namespace fgnn {

int recall_at_k(const RankedList& ranked, ItemIndex label, int k) {
  const auto end = ranked.items.begin() +
                   static_cast<std::ptrdiff_t>(std::min<std::size_t>(ranked.items.size(), std::max(k, 0)));
  return std::find(ranked.items.begin(), end, label) != end ? 1 : 0;
}

double mrr_at_k(const RankedList& ranked, ItemIndex label, int k) {
  const std::size_t limit = std::min<std::size_t>(ranked.items.size(), std::max(k, 0));
  for (std::size_t i = 0; i < limit; ++i) {
    if (ranked.items[i] == label) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

namespace {

// Per-rank hit counts up to the largest K; every metric is derived from these
// integers in a fixed order, so the result is independent of example order.
struct RankTally {
  std::size_t count = 0;
  std::vector<std::size_t> at_rank;  // at_rank[r - 1]

  explicit RankTally(int max_k) : at_rank(static_cast<std::size_t>(max_k), 0) {}

  void add(std::size_t rank) {
    ++count;
    if (rank <= at_rank.size()) ++at_rank[rank - 1];
  }

  std::vector<MetricAtK> metrics(const std::vector<int>& ks) const {
    std::vector<MetricAtK> out;
    for (int k : ks) {
      std::size_t hits = 0;
      double reciprocal = 0.0;
      for (int r = 1; r <= k; ++r) {
        hits += at_rank[r - 1];
        reciprocal += static_cast<double>(at_rank[r - 1]) / r;
      }
      const double n = count ? static_cast<double>(count) : 1.0;
      out.push_back({k, static_cast<double>(hits) / n, reciprocal / n});
    }
    return out;
  }
};

nlohmann::ordered_json metrics_json(const std::vector<MetricAtK>& metrics) {
  auto out = nlohmann::ordered_json::array();
  for (const MetricAtK& m : metrics) out.push_back({{"k", m.k}, {"recall", m.recall}, {"mrr", m.mrr}});
  return out;
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
  return {{"ks", ks},
          {"count", count},
          {"metrics", metrics_json(metrics)},
          {"buckets",
           {{"short", {{"max_length", kShortSessionMaxLength},
                       {"count", short_sessions.count},
                       {"metrics", metrics_json(short_sessions.metrics)}}},
            {"long", {{"count", long_sessions.count}, {"metrics", metrics_json(long_sessions.metrics)}}}}}};
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char buf[64];
  os << "subset        count";
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, "  %8s  %8s", ("R@" + std::to_string(k)).c_str(),
                  ("MRR@" + std::to_string(k)).c_str());
    os << buf;
  }
  os << '\n';
  const auto row = [&](const char* name, std::size_t n, const std::vector<MetricAtK>& ms) {
    std::snprintf(buf, sizeof buf, "%-8s %10zu", name, n);
    os << buf;
    for (const MetricAtK& m : ms) {
      std::snprintf(buf, sizeof buf, "  %8.2f  %8.2f", 100.0 * m.recall, 100.0 * m.mrr);
      os << buf;
    }
    os << '\n';
  };
  row("all", count, metrics);
  row("short", short_sessions.count, short_sessions.metrics);
  row("long", long_sessions.count, long_sessions.metrics);
  return os.str();
}

EvalReport evaluate(const BatchScorer& scorer, std::span<const Example> examples,
                    std::vector<int> ks, std::size_t batch_size) {
  if (ks.empty()) throw ValidationError("evaluate: no cutoffs given");
  for (int k : ks) {
    if (k < 1) throw ValidationError("evaluate: cutoffs must be >= 1");
  }
  if (batch_size == 0) batch_size = 1;
  const int max_k = *std::max_element(ks.begin(), ks.end());
  RankTally all(max_k), short_tally(max_k), long_tally(max_k);

  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(examples.size(), begin + batch_size);
    std::vector<const Example*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&examples[i]);
    const Matrix scores = scorer(batch);
    if (scores.rows() != static_cast<Index>(batch.size())) {
      throw ShapeError("evaluate: scorer returned " + std::to_string(scores.rows()) + " rows for " +
                       std::to_string(batch.size()) + " examples");
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Example& e = *batch[i];
      if (e.label < 0 || e.label >= scores.cols()) {
        throw VocabError("evaluate: label " + std::to_string(e.label) + " outside the scored items");
      }
      const std::size_t rank = rank_of(scores.row(static_cast<Index>(i)), e.label);
      all.add(rank);
      (e.input.size() <= kShortSessionMaxLength ? short_tally : long_tally).add(rank);
    }
  }

  EvalReport report;
  report.ks = ks;
  report.count = all.count;
  report.metrics = all.metrics(ks);
  report.short_sessions = {short_tally.count, short_tally.metrics(ks)};
  report.long_sessions = {long_tally.count, long_tally.metrics(ks)};
  return report;
}

std::uint64_t eval_sample_seed(std::uint64_t seed, const Example& example) {
  std::uint64_t h = splitmix64(seed ^ 0x4556414cULL);
  for (ItemIndex i : example.input) h = splitmix64(h ^ static_cast<std::uint64_t>(i));
  return h;
}

BatchScorer model_scorer(const ModelParams& params, const RunConfig& config,
                         const GlobalGraph& global) {
  return [&params, config, &global](std::span<const Example* const> batch) {
    const GraphBatchView view = make_batch_view(
        global, batch, config.sampling, config.model.edge_weight,
        [&](std::size_t pos) { return eval_sample_seed(config.seed, *batch[pos]); });
    Tape tape;
    return forward_logits(tape, view, params, config.model).value();
  };
}

BaselineKind parse_baseline_kind(const std::string& name) {
  if (name == "pop") return BaselineKind::kPop;
  if (name == "spop") return BaselineKind::kSPop;
  if (name == "itemknn") return BaselineKind::kItemKnn;
  throw ValidationError("unknown baseline '" + name + "' (pop|spop|itemknn)");
}

TrainStats TrainStats::compute(std::span<const Session> sessions, std::size_t num_items,
                               double knn_regularization) {
  TrainStats stats;
  stats.num_items = num_items;
  stats.knn_regularization = knn_regularization;
  stats.popularity.assign(num_items, 0);
  stats.item_sessions.resize(num_items);
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    std::vector<ItemIndex> distinct;
    for (ItemIndex i : sessions[s].items) {
      if (i < 0 || static_cast<std::size_t>(i) >= num_items) {
        throw VocabError("baseline statistics: item " + std::to_string(i) + " outside vocabulary");
      }
      ++stats.popularity[i];
      if (std::find(distinct.begin(), distinct.end(), i) == distinct.end()) distinct.push_back(i);
    }
    for (ItemIndex i : distinct) stats.item_sessions[i].push_back(static_cast<int>(s));
    stats.session_items.push_back(std::move(distinct));
  }
  return stats;
}

RowVector baseline_scores(BaselineKind kind, const TrainStats& stats,
                          std::span<const ItemIndex> session) {
  const auto m = static_cast<Index>(stats.num_items);
  const auto known = [&](ItemIndex i) { return i >= 0 && i < m; };
  RowVector scores(m);
  for (Index j = 0; j < m; ++j) scores(j) = static_cast<double>(stats.popularity[j]);
  switch (kind) {
    case BaselineKind::kPop:
      break;
    case BaselineKind::kSPop: {
      const double top = scores.size() ? scores.maxCoeff() + 1.0 : 1.0;
      for (ItemIndex i : session) {
        if (known(i)) scores(i) += top;
      }
      break;
    }
    case BaselineKind::kItemKnn: {
      scores.setZero();
      auto last = std::find_if(session.rbegin(), session.rend(), known);
      if (last == session.rend()) break;
      const ItemIndex anchor = *last;
      std::unordered_map<ItemIndex, std::int64_t> co;
      for (int s : stats.item_sessions[anchor]) {
        for (ItemIndex j : stats.session_items[s]) ++co[j];
      }
      const double anchor_support = static_cast<double>(stats.item_sessions[anchor].size());
      for (const auto& [j, shared] : co) {
        const double support = static_cast<double>(stats.item_sessions[j].size());
        scores(j) = static_cast<double>(shared) /
                    (std::sqrt(anchor_support * support) + stats.knn_regularization);
      }
      scores(anchor) = -1.0;
      break;
    }
  }
  return scores;
}

RankedList baseline_predict(BaselineKind kind, const TrainStats& stats,
                            std::span<const ItemIndex> session) {
  return rank_items(baseline_scores(kind, stats, session));
}

BatchScorer baseline_scorer(BaselineKind kind, const TrainStats& stats) {
  return [kind, &stats](std::span<const Example* const> batch) {
    Matrix out(static_cast<Index>(batch.size()), static_cast<Index>(stats.num_items));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.row(static_cast<Index>(i)) = baseline_scores(kind, stats, batch[i]->input);
    }
    return out;
  };
}

nlohmann::ordered_json CorrelationReport::to_json() const {
  auto bins = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < histogram.size(); ++b) {
    bins.push_back({{"lower", -1.0 + kBinWidth * static_cast<double>(b)},
                    {"upper", -1.0 + kBinWidth * static_cast<double>(b + 1)},
                    {"count", histogram[b]}});
  }
  return {{"estimate", true},
          {"sampled", sampled},
          {"pairs", pairs},
          {"zero_variance_pairs", zero_variance_pairs},
          {"mean", mean},
          {"bin_width", kBinWidth},
          {"histogram", bins}};
}

namespace {

using SparseCounts = std::vector<std::pair<ItemIndex, std::int64_t>>;  // sorted by item

SparseCounts count_items(const Session& s) {
  std::map<ItemIndex, std::int64_t> counts;
  for (ItemIndex i : s.items) ++counts[i];
  return {counts.begin(), counts.end()};
}

// Pearson over the full vocabulary of two sparse count vectors, in exact
// integer arithmetic up to the final division. nullopt on zero variance.
std::optional<double> sparse_pearson(const SparseCounts& a, const SparseCounts& b, std::int64_t m) {
  std::int64_t sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (const auto& [i, c] : a) {
    sa += c;
    saa += c * c;
  }
  for (const auto& [i, c] : b) {
    sb += c;
    sbb += c * c;
  }
  for (std::size_t x = 0, y = 0; x < a.size() && y < b.size();) {
    if (a[x].first < b[y].first) {
      ++x;
    } else if (b[y].first < a[x].first) {
      ++y;
    } else {
      sab += a[x++].second * b[y++].second;
    }
  }
  const auto var_a = static_cast<long double>(m) * saa - static_cast<long double>(sa) * sa;
  const auto var_b = static_cast<long double>(m) * sbb - static_cast<long double>(sb) * sb;
  if (var_a <= 0 || var_b <= 0) return std::nullopt;
  const auto cov = static_cast<long double>(m) * sab - static_cast<long double>(sa) * sb;
  return static_cast<double>(cov / std::sqrt(var_a * var_b));
}

}  // namespace

CorrelationReport session_correlation(std::span<const Session> sessions, std::size_t num_items,
                                      std::size_t max_pairs, std::uint64_t seed) {
  if (sessions.size() < 2) throw ContractError("session_correlation: needs at least two sessions");
  std::vector<SparseCounts> counts;
  counts.reserve(sessions.size());
  std::vector<std::vector<int>> holders(num_items);
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    counts.push_back(count_items(sessions[s]));
    for (const auto& [item, c] : counts.back()) {
      if (item < 0 || static_cast<std::size_t>(item) >= num_items) {
        throw VocabError("session_correlation: item " + std::to_string(item) + " outside vocabulary");
      }
      holders[item].push_back(static_cast<int>(s));
    }
  }

  CorrelationReport report;
  report.histogram.assign(40, 0);
  const auto m = static_cast<std::int64_t>(num_items);
  double total = 0.0;
  const auto record = [&](int a, int b) {
    const auto r = sparse_pearson(counts[a], counts[b], m);
    if (!r) {
      ++report.zero_variance_pairs;
      return;
    }
    const auto bin = std::clamp(static_cast<int>(std::floor((*r + 1.0) / CorrelationReport::kBinWidth)), 0, 39);
    ++report.histogram[bin];
    total += *r;
    ++report.pairs;
  };

  long double bound = 0;
  for (const auto& h : holders) bound += 0.5L * h.size() * (h.size() - (h.empty() ? 0 : 1));

  if (bound <= static_cast<long double>(max_pairs)) {
    for (std::size_t a = 0; a < sessions.size(); ++a) {
      std::vector<int> partners;
      for (const auto& [item, c] : counts[a]) {
        for (int b : holders[item]) {
          if (b > static_cast<int>(a)) partners.push_back(b);
        }
      }
      std::sort(partners.begin(), partners.end());
      partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
      for (int b : partners) record(static_cast<int>(a), b);
    }
  } else {
    report.sampled = true;
    std::vector<double> weight(num_items);
    for (std::size_t i = 0; i < num_items; ++i) {
      const double n = static_cast<double>(holders[i].size());
      weight[i] = 0.5 * n * (n - 1.0);
    }
    Rng rng(seed);
    std::discrete_distribution<std::size_t> pick_item(weight.begin(), weight.end());
    for (std::size_t p = 0; p < max_pairs; ++p) {
      const auto& h = holders[pick_item(rng)];
      std::uniform_int_distribution<std::size_t> pick(0, h.size() - 1);
      const std::size_t x = pick(rng);
      std::size_t y = pick(rng);
      while (y == x) y = pick(rng);
      record(h[x], h[y]);
    }
  }
  report.mean = report.pairs ? total / static_cast<double>(report.pairs) : 0.0;
  return report;
}

}  // namespace fgnn

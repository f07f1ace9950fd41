#include "fgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "fgnn/error.hpp"
#include "fgnn/ops.hpp"

namespace fgnn {

void ModelConfig::validate() const {
  if (dim < 1) throw ValidationError("model: dim must be >= 1");
  if (layers < 1) throw ValidationError("model: layers must be >= 1");
  if (heads < 1) throw ValidationError("model: heads must be >= 1");
  if (readout_steps < 1) throw ValidationError("model: readout_steps must be >= 1");
  if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) {
    throw ValidationError("model: leaky_slope must be finite and >= 0");
  }
  if (heads > dim && layers > 1 && head_combine == HeadCombine::kConcatThenMean) {
    throw ValidationError("model: more heads than feature columns to split");
  }
}

bool ModelConfig::averages_heads(int layer) const {
  return head_combine == HeadCombine::kMeanEveryLayer || layer == layers - 1;
}

std::vector<int> ModelConfig::head_widths(int layer) const {
  if (averages_heads(layer)) return std::vector<int>(heads, dim);
  std::vector<int> widths(heads, dim / heads);
  for (int k = 0; k < dim % heads; ++k) ++widths[k];
  return widths;
}

ModelParams ModelParams::zeros(const ModelConfig& config, std::size_t num_items) {
  config.validate();
  ModelParams p;
  const Index d = config.dim;
  p.embedding = Tensor::parameter(Matrix::Zero(static_cast<Index>(num_items), d));
  for (int l = 0; l < config.layers; ++l) {
    LayerParams layer;
    for (int width : config.head_widths(l)) {
      layer.heads.push_back({Tensor::parameter(Matrix::Zero(width, d)),
                             Tensor::parameter(Matrix::Zero(1, 2 * width + 1))});
    }
    p.layers.push_back(std::move(layer));
  }
  p.readout = make_gru_params(2 * d, d);
  p.output_map = Tensor::parameter(Matrix::Zero(d, 2 * d));
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t k = 0; k < layers[l].heads.size(); ++k) {
      const std::string prefix = "layer" + std::to_string(l) + ".head" + std::to_string(k) + ".";
      out.emplace_back(prefix + "node_map", layers[l].heads[k].node_map);
      out.emplace_back(prefix + "attention", layers[l].heads[k].attention);
    }
  }
  out.emplace_back("readout.w_input", readout.w_input);
  out.emplace_back("readout.w_hidden", readout.w_hidden);
  out.emplace_back("readout.b_input", readout.b_input);
  out.emplace_back("readout.b_hidden", readout.b_hidden);
  out.emplace_back("output_map", output_map);
  return out;
}

void ModelParams::zero_grad() const {
  for (auto& [name, t] : named()) t.zero_grad();
}

GraphBatchView GraphBatchView::from_graphs(std::span<const BcsGraph> graphs,
                                           EdgeWeightTransform transform) {
  GraphBatchView view;
  view.num_graphs = static_cast<int>(graphs.size());
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const BcsGraph& graph = graphs[g];
    const int offset = static_cast<int>(view.items.size());
    view.items.insert(view.items.end(), graph.nodes.begin(), graph.nodes.end());
    view.core_mask.insert(view.core_mask.end(), graph.core_mask.begin(), graph.core_mask.end());
    view.graph_of_node.insert(view.graph_of_node.end(), graph.nodes.size(), static_cast<int>(g));

    std::vector<BcsGraph::LocalEdge> by_target = graph.edges;
    std::stable_sort(by_target.begin(), by_target.end(),
                     [](const auto& a, const auto& b) { return a.dst < b.dst; });
    for (const auto& e : by_target) {
      view.edge_src.push_back(offset + e.src);
      view.edge_dst.push_back(offset + e.dst);
      const double w = static_cast<double>(e.weight);
      view.edge_weight.push_back(transform == EdgeWeightTransform::kLog1p ? std::log1p(w) : w);
    }
  }
  return view;
}

GraphBatchView GraphBatchView::from_graph(const BcsGraph& graph, EdgeWeightTransform transform) {
  return from_graphs(std::span<const BcsGraph>(&graph, 1), transform);
}

void GraphBatchView::validate() const {
  const std::size_t n = num_nodes();
  if (graph_of_node.size() != n || core_mask.size() != n) {
    throw StructuralError("graph view: per-node arrays disagree in length");
  }
  if (edge_dst.size() != edge_src.size() || edge_weight.size() != edge_src.size()) {
    throw StructuralError("graph view: per-edge arrays disagree in length");
  }
  std::vector<std::uint8_t> has_in(n, 0);
  for (std::size_t e = 0; e < num_edges(); ++e) {
    if (edge_src[e] < 0 || edge_dst[e] < 0 || static_cast<std::size_t>(edge_src[e]) >= n ||
        static_cast<std::size_t>(edge_dst[e]) >= n) {
      throw StructuralError("graph view: edge endpoint out of range");
    }
    has_in[edge_dst[e]] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!has_in[i]) {
      throw StructuralError("graph view: node " + std::to_string(i) + " has no in-neighbors");
    }
  }
}

Tensor embed(Tape& tape, std::span<const ItemIndex> nodes, const ModelParams& params) {
  const Index m = params.embedding.rows();
  for (ItemIndex v : nodes) {
    if (v < 0 || v >= m) {
      throw VocabError("embed: item " + std::to_string(v) + " outside [0, " + std::to_string(m) + ")");
    }
  }
  static_assert(std::is_same_v<ItemIndex, int>);
  return ops::gather_rows(tape, params.embedding, nodes);
}

Tensor wgat_layer(Tape& tape, const GraphBatchView& view, const Tensor& x,
                  const LayerParams& layer, bool average_heads, double leaky_slope,
                  LayerTrace* trace) {
  const Index n = static_cast<Index>(view.num_nodes());
  if (x.rows() != n) {
    throw ShapeError("wgat_layer: " + std::to_string(n) + " nodes vs features " + x.shape().to_string());
  }
  if (layer.heads.empty()) throw ShapeError("wgat_layer: layer without heads");

  Matrix weights(static_cast<Index>(view.num_edges()), 1);
  for (std::size_t e = 0; e < view.num_edges(); ++e) weights(static_cast<Index>(e), 0) = view.edge_weight[e];
  const Tensor edge_weight = Tensor::constant(std::move(weights));

  std::vector<Tensor> outputs;
  for (const HeadParams& head : layer.heads) {
    const Index width = head.node_map.rows();
    if (head.node_map.cols() != x.cols()) {
      throw ShapeError("wgat_layer: node map " + head.node_map.shape().to_string() +
                       " vs features " + x.shape().to_string());
    }
    if (head.attention.rows() != 1 || head.attention.cols() != 2 * width + 1) {
      throw ShapeError("wgat_layer: attention map " + head.attention.shape().to_string() +
                       " for head width " + std::to_string(width));
    }
    const Tensor h = ops::matmul_nt(tape, x, head.node_map);
    const Tensor target_score = ops::matmul_nt(tape, h, ops::slice_cols(tape, head.attention, 0, width));
    const Tensor neighbor_score =
        ops::matmul_nt(tape, h, ops::slice_cols(tape, head.attention, width, width));
    const Tensor weight_score =
        ops::matmul(tape, edge_weight, ops::slice_cols(tape, head.attention, 2 * width, 1));

    Tensor logits = ops::add(tape, ops::gather_rows(tape, target_score, view.edge_dst),
                             ops::gather_rows(tape, neighbor_score, view.edge_src));
    logits = ops::leaky_relu(tape, ops::add(tape, logits, weight_score), leaky_slope);
    const Tensor alpha = ops::segment_softmax(tape, logits, view.edge_dst, n);
    if (trace) trace->attention.push_back(alpha.value());

    const Tensor messages = ops::mul_col(tape, ops::gather_rows(tape, h, view.edge_src), alpha);
    const Tensor aggregated = ops::segment_sum(tape, messages, view.edge_dst, n);
    outputs.push_back(average_heads ? aggregated : ops::relu(tape, aggregated));
  }

  if (!average_heads) return outputs.size() == 1 ? outputs.front() : ops::concat_cols(tape, outputs);
  Tensor total = outputs.front();
  for (std::size_t k = 1; k < outputs.size(); ++k) {
    if (outputs[k].shape() != total.shape()) {
      throw ShapeError("wgat_layer: averaged heads differ in width");
    }
    total = ops::add(tape, total, outputs[k]);
  }
  return ops::relu(tape, ops::scale(tape, total, 1.0 / static_cast<double>(outputs.size())));
}

Tensor encode(Tape& tape, const GraphBatchView& view, const ModelParams& params,
              const ModelConfig& config, std::vector<LayerTrace>* trace) {
  view.validate();
  if (static_cast<int>(params.layers.size()) != config.layers) {
    throw ShapeError("encode: parameters hold " + std::to_string(params.layers.size()) +
                     " layers, config asks for " + std::to_string(config.layers));
  }
  Tensor x = embed(tape, view.items, params);
  for (int l = 0; l < config.layers; ++l) {
    LayerTrace* layer_trace = nullptr;
    if (trace) layer_trace = &trace->emplace_back();
    x = wgat_layer(tape, view, x, params.layers[l], config.averages_heads(l), config.leaky_slope,
                   layer_trace);
  }
  return x;
}

Tensor readout(Tape& tape, const Tensor& x, std::span<const int> graph_of_node, int num_graphs,
               std::span<const std::uint8_t> core_mask, const GruParams& gru, int steps,
               ReadoutMode mode) {
  const Index d = gru.hidden_size();
  if (x.cols() != d) {
    throw ShapeError("readout: node features " + x.shape().to_string() + " vs GRU hidden size " +
                     std::to_string(d));
  }
  if (static_cast<Index>(graph_of_node.size()) != x.rows()) {
    throw ShapeError("readout: graph ids for " + std::to_string(graph_of_node.size()) +
                     " nodes vs features " + x.shape().to_string());
  }
  if (steps < 1) throw ContractError("readout: steps must be >= 1");
  std::span<const std::uint8_t> eligible;
  if (mode == ReadoutMode::kMask) {
    if (core_mask.size() != graph_of_node.size()) {
      throw ContractError("readout: mask mode needs a core mask for every node");
    }
    eligible = core_mask;
  }

  Tensor q_star = Tensor::constant(Matrix::Zero(num_graphs, 2 * d));
  Tensor hidden = Tensor::constant(Matrix::Zero(num_graphs, d));
  for (int t = 0; t < steps; ++t) {
    hidden = gru_cell(tape, q_star, hidden, gru);
    const Tensor query = ops::gather_rows(tape, hidden, graph_of_node);
    const Tensor logits = ops::sum_axis(tape, ops::mul(tape, x, query), 1);
    const Tensor attention = ops::segment_softmax(tape, logits, graph_of_node, num_graphs, eligible);
    const Tensor read = ops::segment_sum(tape, ops::mul_col(tape, x, attention), graph_of_node, num_graphs);
    q_star = ops::concat_cols(tape, {hidden, read});
  }
  return q_star;
}

Tensor score(Tape& tape, const Tensor& q_star, const ModelParams& params) {
  const Tensor projected = ops::matmul_nt(tape, q_star, params.output_map);
  return ops::matmul_nt(tape, projected, params.embedding);
}

Tensor loss(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  return ops::log_softmax_nll(tape, logits, labels);
}

Tensor forward_logits(Tape& tape, const GraphBatchView& view, const ModelParams& params,
                      const ModelConfig& config) {
  if (view.num_nodes() == 0) throw ContractError("forward: empty graph");
  const Tensor x = encode(tape, view, params, config);
  const Tensor q_star = readout(tape, x, view.graph_of_node, view.num_graphs, view.core_mask,
                                params.readout, config.readout_steps, config.readout_mode);
  return score(tape, q_star, params);
}

Tensor forward(Tape& tape, const GraphBatchView& view, const ModelParams& params,
               const ModelConfig& config) {
  return ops::softmax_rows(tape, forward_logits(tape, view, params, config));
}

}  // namespace fgnn

#include "fgnn/train.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fgnn/archive.hpp"
#include "fgnn/error.hpp"

namespace fgnn {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kSampleStream = 0x42435353ULL;

Matrix gaussian(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Fills each of the three stacked gate blocks of a GRU weight with an
// orthogonal matrix.
void orthogonal_gates(Tensor& weight, Rng& rng) {
  const Index h = weight.rows() / 3;
  for (int gate = 0; gate < 3; ++gate) {
    weight.mutable_value().middleRows(gate * h, h) = orthogonal_matrix(h, weight.cols(), rng);
  }
}

}  // namespace

Matrix orthogonal_matrix(Index rows, Index cols, Rng& rng) {
  if (rows < cols) return orthogonal_matrix(cols, rows, rng).transpose();
  const Eigen::MatrixXd draw = gaussian(rows, cols, 1.0, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(draw);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index c = 0; c < cols; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  return q;
}

ModelParams init_params(const ModelConfig& config, std::size_t num_items, double init_std,
                        std::uint64_t seed) {
  ModelParams params = ModelParams::zeros(config, num_items);
  Rng rng(seed);
  for (auto& [name, tensor] : params.named()) {
    tensor.mutable_value() = gaussian(tensor.rows(), tensor.cols(), init_std, rng);
  }
  orthogonal_gates(params.readout.w_input, rng);
  orthogonal_gates(params.readout.w_hidden, rng);
  return params;
}

void adam_step(const ModelParams& params, AdamState& state, double lr, const TrainConfig& config) {
  const auto named = params.named();
  for (const auto& [name, tensor] : named) {
    if (!tensor.grad().allFinite()) {
      throw NumericError("adam_step: non-finite gradient in " + name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (auto [name, tensor] : named) {
    AdamSlot& slot = state.slots[name];
    if (slot.first_moment.size() == 0) {
      slot.first_moment = Matrix::Zero(tensor.rows(), tensor.cols());
      slot.second_moment = Matrix::Zero(tensor.rows(), tensor.cols());
    }
    const Matrix grad = tensor.grad() + config.l2 * tensor.value();
    slot.first_moment = config.beta1 * slot.first_moment + (1.0 - config.beta1) * grad;
    slot.second_moment =
        config.beta2 * slot.second_moment + (1.0 - config.beta2) * grad.cwiseAbs2();
    tensor.mutable_value().array() -=
        lr * (slot.first_moment.array() / correction1) /
        ((slot.second_moment.array() / correction2).sqrt() + config.adam_epsilon);
  }
}

double lr_schedule(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw ContractError("lr_schedule: negative epoch");
  if (config.schedule == LrSchedule::kStep) {
    return config.lr * std::pow(config.decay_factor, epoch / config.decay_every);
  }
  const double span = std::max(1, config.epochs - 1);
  const double progress = std::min(1.0, epoch / span);
  return config.lr * (1.0 - (1.0 - config.decay_factor) * progress);
}

std::uint64_t train_sample_seed(std::uint64_t seed, int epoch, std::size_t index) {
  return derive_seed(seed, {kSampleStream, static_cast<std::uint64_t>(epoch), index});
}

GraphBatchView make_batch_view(const GlobalGraph& global, std::span<const Example* const> batch,
                               const SamplingConfig& sampling, EdgeWeightTransform transform,
                               const std::function<std::uint64_t(std::size_t)>& seed_of) {
  std::vector<BcsGraph> graphs;
  graphs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Session session;
    session.items = batch[i]->input;
    graphs.push_back(sample_bcs(global, session, sampling.n_hops,
                                static_cast<std::size_t>(sampling.sample_cap), seed_of(i)));
  }
  return GraphBatchView::from_graphs(graphs, transform);
}

double batch_loss(const GlobalGraph& global, std::span<const Example* const> batch,
                  const ModelParams& params, const RunConfig& config,
                  const std::function<std::uint64_t(std::size_t)>& seed_of) {
  const GraphBatchView view =
      make_batch_view(global, batch, config.sampling, config.model.edge_weight, seed_of);
  std::vector<int> labels;
  for (const Example* e : batch) labels.push_back(e->label);
  Tape tape;
  return loss(tape, forward_logits(tape, view, params, config.model), labels).item();
}

EpochMetrics train_epoch(std::span<const Example> examples, const GlobalGraph& global,
                         ModelParams& params, AdamState& adam, const RunConfig& config, int epoch) {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.lr = lr_schedule(config.train, epoch);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t batch_size = static_cast<std::size_t>(config.train.batch_size);
  double total_loss = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    std::vector<const Example*> batch;
    std::vector<int> labels;
    for (std::size_t k = begin; k < end; ++k) {
      batch.push_back(&examples[order[k]]);
      labels.push_back(examples[order[k]].label);
    }
    const GraphBatchView view = make_batch_view(
        global, batch, config.sampling, config.model.edge_weight,
        [&](std::size_t pos) { return train_sample_seed(config.seed, epoch, order[begin + pos]); });

    params.zero_grad();
    Tape tape;
    const Tensor batch_loss_value = loss(tape, forward_logits(tape, view, params, config.model), labels);
    const double value = batch_loss_value.item();
    if (!std::isfinite(value)) {
      throw NumericError("train_epoch: non-finite loss in batch " +
                         std::to_string(metrics.batches) + " of epoch " + std::to_string(epoch));
    }
    tape.backward(batch_loss_value);
    adam_step(params, adam, metrics.lr, config.train);
    total_loss += value;
    ++metrics.batches;
  }
  metrics.mean_loss = examples.empty() ? 0.0 : total_loss / static_cast<double>(examples.size());
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
  Archive archive;
  for (const auto& [name, tensor] : checkpoint.params.named()) {
    archive.tensors.emplace_back(name, tensor.value());
  }
  for (const auto& [name, tensor] : checkpoint.params.named()) {
    const auto it = checkpoint.adam.slots.find(name);
    if (it == checkpoint.adam.slots.end()) continue;
    archive.tensors.emplace_back("adam.m." + name, it->second.first_moment);
    archive.tensors.emplace_back("adam.v." + name, it->second.second_moment);
  }
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::istringstream lines(checkpoint.config.to_text());
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    config[line.substr(0, eq)] = line.substr(eq + 3);
  }
  archive.metadata = {{"config", config},
                      {"num_items", checkpoint.params.num_items()},
                      {"adam_step", checkpoint.adam.step},
                      {"epochs_done", checkpoint.epochs_done}};
  save_archive(dir, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const Archive archive = load_archive(dir);
  Checkpoint ckpt;
  try {
    for (const auto& [key, value] : archive.metadata.at("config").items()) {
      ckpt.config.set(key, value.get<std::string>());
    }
    ckpt.config.validate();
    ckpt.params = ModelParams::zeros(ckpt.config.model, archive.metadata.at("num_items").get<std::size_t>());
    ckpt.adam.step = archive.metadata.at("adam_step").get<std::int64_t>();
    ckpt.epochs_done = archive.metadata.at("epochs_done").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError("checkpoint metadata: " + std::string(e.what()), 1);
  }
  for (auto [name, tensor] : ckpt.params.named()) {
    const Matrix& stored = archive.at(name);
    if (stored.rows() != tensor.rows() || stored.cols() != tensor.cols()) {
      throw ShapeError("checkpoint: " + name + " stored as " + Shape{stored.rows(), stored.cols()}.to_string() +
                       ", config expects " + tensor.shape().to_string());
    }
    tensor.mutable_value() = stored;
    const Matrix* m = archive.find("adam.m." + name);
    const Matrix* v = archive.find("adam.v." + name);
    if (m && v) ckpt.adam.slots[name] = {*m, *v};
  }
  return ckpt;
}

}  // namespace fgnn

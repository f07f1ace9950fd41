#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgnn/config.hpp"
#include "fgnn/graphs.hpp"
#include "fgnn/model.hpp"
#include "fgnn/rng.hpp"

namespace fgnn {

/// Matrix with orthonormal rows (rows <= cols) or columns (rows >= cols),
/// from the QR factorization of a Gaussian draw with R's diagonal made
/// positive.
Matrix orthogonal_matrix(Index rows, Index cols, Rng& rng);

/// Gaussian N(0, init_std^2) for every tensor except the readout GRU weight
/// matrices, whose per-gate blocks are orthogonal. Deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::size_t num_items, double init_std,
                        std::uint64_t seed);

struct AdamSlot {
  Matrix first_moment;
  Matrix second_moment;
};

struct AdamState {
  std::int64_t step = 0;
  std::unordered_map<std::string, AdamSlot> slots;
};

/// One bias-corrected Adam update over every named parameter, using the
/// gradients currently stored in the tensors. L2 enters as `l2 * param`
/// added to the gradient. Throws NumericError naming the first tensor with a
/// non-finite gradient, before anything is modified.
void adam_step(const ModelParams& params, AdamState& state, double lr, const TrainConfig& config);

/// Learning rate for a 0-based epoch. Step schedule: lr * decay^floor(epoch /
/// decay_every). Linear schedule: falls linearly from lr to lr * decay over
/// the configured number of epochs.
double lr_schedule(const TrainConfig& config, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  std::size_t batches = 0;
};

/// Builds the disjoint union of BCS graphs for a batch of examples. Sampling
/// seeds come from `seed_of(example position)`.
GraphBatchView make_batch_view(const GlobalGraph& global, std::span<const Example* const> batch,
                               const SamplingConfig& sampling, EdgeWeightTransform transform,
                               const std::function<std::uint64_t(std::size_t)>& seed_of);

/// Summed cross entropy of a batch (no gradient step).
double batch_loss(const GlobalGraph& global, std::span<const Example* const> batch,
                  const ModelParams& params, const RunConfig& config,
                  const std::function<std::uint64_t(std::size_t)>& seed_of);

/// One pass over `examples` in shuffled mini-batches: sample BCS graphs,
/// forward, summed cross entropy, backward, Adam. Shuffling and neighbor
/// sampling are seeded from (config.seed, epoch). Throws NumericError with
/// the batch id on a non-finite loss.
EpochMetrics train_epoch(std::span<const Example> examples, const GlobalGraph& global,
                         ModelParams& params, AdamState& adam, const RunConfig& config, int epoch);

/// Seed used for the BCS graph of example `index` during `epoch`.
std::uint64_t train_sample_seed(std::uint64_t seed, int epoch, std::size_t index);

struct Checkpoint {
  RunConfig config;
  ModelParams params;
  AdamState adam;
  int epochs_done = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fgnn

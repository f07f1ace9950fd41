#pragma once

#include <cstdint>
#include <string>

#include "fgnn/model.hpp"

namespace fgnn {

enum class LrSchedule { kStep, kLinear };

struct TrainConfig {
  double lr = 1e-3;
  double decay_factor = 0.1;
  int decay_every = 3;
  LrSchedule schedule = LrSchedule::kStep;
  int batch_size = 100;
  double l2 = 1e-5;
  int epochs = 10;
  double init_std = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct SamplingConfig {
  int n_hops = 1;
  int sample_cap = 5;

  void validate() const;
};

/// Every knob of a run. Serialized as flat `key = value` lines; `#` starts a
/// comment.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SamplingConfig sampling;
  std::uint64_t seed = 42;

  /// Throws ValidationError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace fgnn

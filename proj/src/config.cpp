#include "fgnn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fgnn/error.hpp"

namespace fgnn {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ValidationError("config: bad value '" + value + "' for " + key);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ValidationError("config: non-finite value for " + key);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ValidationError("train: lr must be >= 0");
  if (!(decay_factor > 0.0)) throw ValidationError("train: decay_factor must be > 0");
  if (decay_every < 1) throw ValidationError("train: decay_every must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(l2 >= 0.0)) throw ValidationError("train: l2 must be >= 0");
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (!(init_std > 0.0)) throw ValidationError("train: init_std must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ValidationError("train: adam_epsilon must be > 0");
}

void SamplingConfig::validate() const {
  if (n_hops < 0) throw ValidationError("sampling: n_hops must be >= 0");
  if (sample_cap < 1) throw ValidationError("sampling: sample_cap must be >= 1");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dim") {
    model.dim = parse_value<int>(key, value);
  } else if (key == "layers") {
    model.layers = parse_value<int>(key, value);
  } else if (key == "heads") {
    model.heads = parse_value<int>(key, value);
  } else if (key == "readout_steps") {
    model.readout_steps = parse_value<int>(key, value);
  } else if (key == "leaky_slope") {
    model.leaky_slope = parse_value<double>(key, value);
  } else if (key == "readout_mode") {
    if (value == "plain") {
      model.readout_mode = ReadoutMode::kPlain;
    } else if (value == "mask") {
      model.readout_mode = ReadoutMode::kMask;
    } else {
      throw ValidationError("config: readout_mode must be plain or mask");
    }
  } else if (key == "head_combine") {
    if (value == "concat_then_mean") {
      model.head_combine = HeadCombine::kConcatThenMean;
    } else if (value == "mean_every_layer") {
      model.head_combine = HeadCombine::kMeanEveryLayer;
    } else {
      throw ValidationError("config: head_combine must be concat_then_mean or mean_every_layer");
    }
  } else if (key == "edge_weight") {
    if (value == "raw") {
      model.edge_weight = EdgeWeightTransform::kRaw;
    } else if (value == "log1p") {
      model.edge_weight = EdgeWeightTransform::kLog1p;
    } else {
      throw ValidationError("config: edge_weight must be raw or log1p");
    }
  } else if (key == "lr") {
    train.lr = parse_value<double>(key, value);
  } else if (key == "decay_factor") {
    train.decay_factor = parse_value<double>(key, value);
  } else if (key == "decay_every") {
    train.decay_every = parse_value<int>(key, value);
  } else if (key == "lr_schedule") {
    if (value == "step") {
      train.schedule = LrSchedule::kStep;
    } else if (value == "linear") {
      train.schedule = LrSchedule::kLinear;
    } else {
      throw ValidationError("config: lr_schedule must be step or linear");
    }
  } else if (key == "batch_size") {
    train.batch_size = parse_value<int>(key, value);
  } else if (key == "l2") {
    train.l2 = parse_value<double>(key, value);
  } else if (key == "epochs") {
    train.epochs = parse_value<int>(key, value);
  } else if (key == "init_std") {
    train.init_std = parse_value<double>(key, value);
  } else if (key == "beta1") {
    train.beta1 = parse_value<double>(key, value);
  } else if (key == "beta2") {
    train.beta2 = parse_value<double>(key, value);
  } else if (key == "adam_epsilon") {
    train.adam_epsilon = parse_value<double>(key, value);
  } else if (key == "n_hops") {
    sampling.n_hops = parse_value<int>(key, value);
  } else if (key == "sample_cap") {
    sampling.sample_cap = parse_value<int>(key, value);
  } else if (key == "seed") {
    seed = parse_value<std::uint64_t>(key, value);
  } else {
    throw ValidationError("config: unknown key '" + key + "'");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  sampling.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "dim = " << model.dim << '\n'
     << "layers = " << model.layers << '\n'
     << "heads = " << model.heads << '\n'
     << "readout_steps = " << model.readout_steps << '\n'
     << "leaky_slope = " << format_double(model.leaky_slope) << '\n'
     << "readout_mode = " << (model.readout_mode == ReadoutMode::kMask ? "mask" : "plain") << '\n'
     << "head_combine = "
     << (model.head_combine == HeadCombine::kConcatThenMean ? "concat_then_mean" : "mean_every_layer")
     << '\n'
     << "edge_weight = " << (model.edge_weight == EdgeWeightTransform::kRaw ? "raw" : "log1p") << '\n'
     << "lr = " << format_double(train.lr) << '\n'
     << "decay_factor = " << format_double(train.decay_factor) << '\n'
     << "decay_every = " << train.decay_every << '\n'
     << "lr_schedule = " << (train.schedule == LrSchedule::kStep ? "step" : "linear") << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "l2 = " << format_double(train.l2) << '\n'
     << "epochs = " << train.epochs << '\n'
     << "init_std = " << format_double(train.init_std) << '\n'
     << "beta1 = " << format_double(train.beta1) << '\n'
     << "beta2 = " << format_double(train.beta2) << '\n'
     << "adam_epsilon = " << format_double(train.adam_epsilon) << '\n'
     << "n_hops = " << sampling.n_hops << '\n'
     << "sample_cap = " << sampling.sample_cap << '\n'
     << "seed = " << seed << '\n';
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace fgnn

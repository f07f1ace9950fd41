#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fgnn/tensor.hpp"

namespace fgnn {

/// Named-tensor archive: `tensors.bin` holds raw little-endian doubles in
/// row-major order, `manifest.json` lists each tensor's name, shape and byte
/// offset next to caller-supplied metadata.
struct Archive {
  std::vector<std::pair<std::string, Matrix>> tensors;
  nlohmann::json metadata;

  const Matrix* find(const std::string& name) const;
  const Matrix& at(const std::string& name) const;
};

void save_archive(const std::filesystem::path& dir, const Archive& archive);
Archive load_archive(const std::filesystem::path& dir);

}  // namespace fgnn

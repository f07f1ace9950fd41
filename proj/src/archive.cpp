#include "fgnn/archive.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "fgnn/error.hpp"

namespace fgnn {
namespace {

constexpr const char* kFormat = "fgnn-tensor-archive";
constexpr int kVersion = 1;

void put_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const Matrix* Archive::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

const Matrix& Archive::at(const std::string& name) const {
  if (const Matrix* m = find(name)) return *m;
  throw MalformedInputError("archive: missing tensor '" + name + "'", 1);
}

void save_archive(const std::filesystem::path& dir, const Archive& archive) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "tensors.bin").string());

  nlohmann::ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["metadata"] = archive.metadata;
  auto entries = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : archive.tensors) {
    entries.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    for (Index i = 0; i < m.size(); ++i) put_le(bin, m.data()[i]);
    offset += static_cast<std::uint64_t>(m.size()) * 8;
  }
  manifest["tensors"] = std::move(entries);
  if (!bin) throw IoError("write failure on " + (dir / "tensors.bin").string());
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(1) << '\n';
}

Archive load_archive(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot open " + (dir / "manifest.json").string());
  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / "tensors.bin").string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                         std::istreambuf_iterator<char>());
  Archive archive;
  try {
    nlohmann::json manifest;
    mf >> manifest;
    if (manifest.at("format") != kFormat || manifest.at("version") != kVersion) {
      throw MalformedInputError("archive: unsupported format", 1);
    }
    archive.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
      const auto rows = entry.at("shape").at(0).get<Index>();
      const auto cols = entry.at("shape").at(1).get<Index>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::uint64_t>(rows * cols) * 8 > bytes.size()) {
        throw MalformedInputError("archive: tensor '" + entry.at("name").get<std::string>() +
                                      "' runs past the end of tensors.bin",
                                  1);
      }
      Matrix m(rows, cols);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = get_le(bytes.data() + offset + 8 * i);
      archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError("archive manifest: " + std::string(e.what()), 1);
  }
  return archive;
}

}  // namespace fgnn

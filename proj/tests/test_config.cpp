#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fgnn/archive.hpp"
#include "fgnn/config.hpp"
#include "fgnn/error.hpp"

using namespace fgnn;

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.model.dim == 100);
  CHECK(c.model.heads == 8);
  CHECK(c.model.layers == 3);
  CHECK(c.model.readout_mode == ReadoutMode::kMask);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.batch_size == 100);
  CHECK(c.train.l2 == 1e-5);
  CHECK(c.train.epochs == 10);
  CHECK(c.sampling.n_hops == 1);
  CHECK(c.sampling.sample_cap == 5);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("key = value text with comments and blank lines") {
  const RunConfig c = RunConfig::parse(
      "# model\n"
      "dim = 32\n"
      "\n"
      "readout_mode = plain   # no mask\n"
      "lr=0.01\n"
      "lr_schedule = linear\n"
      "seed = 18446744073709551615\n");
  CHECK(c.model.dim == 32);
  CHECK(c.model.readout_mode == ReadoutMode::kPlain);
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.schedule == LrSchedule::kLinear);
  CHECK(c.seed == 18446744073709551615ULL);
}

TEST_CASE("text form round-trips every field") {
  RunConfig c;
  c.model.leaky_slope = 0.1234567890123;
  c.model.head_combine = HeadCombine::kMeanEveryLayer;
  c.model.edge_weight = EdgeWeightTransform::kLog1p;
  c.train.adam_epsilon = 3e-9;
  c.sampling.n_hops = 2;
  c.seed = 77;
  const RunConfig back = RunConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.model.leaky_slope == c.model.leaky_slope);
}

TEST_CASE("unknown keys, bad values and invalid settings are rejected") {
  CHECK_THROWS_AS(RunConfig::parse("dimension = 4\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("dim = four\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("dim = 4.5\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("lr = inf\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("readout_mode = maybe\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("just a line\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("batch_size = 0\n").validate(), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("sample_cap = 0\n").validate(), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("beta2 = 1\n").validate(), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("l2 = -1\n").validate(), ValidationError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/fgnn.conf"), IoError);
}

TEST_CASE("tensor archive round-trip and corruption checks") {
  const auto dir = std::filesystem::temp_directory_path() / "fgnn_archive_test";
  std::filesystem::remove_all(dir);
  Archive a;
  Matrix m(2, 3);
  m << 1.5, -2.0, 3.25, 1e-300, -0.0, 7.0;
  a.tensors.emplace_back("first", m);
  a.tensors.emplace_back("second", Matrix::Constant(1, 1, 42.0));
  a.metadata = {{"note", "x"}};
  save_archive(dir, a);
  const Archive b = load_archive(dir);
  CHECK(b.at("first") == m);
  CHECK(b.at("second")(0, 0) == 42.0);
  CHECK(b.metadata["note"] == "x");
  CHECK(b.find("third") == nullptr);
  CHECK_THROWS_AS(b.at("third"), MalformedInputError);

  std::filesystem::resize_file(dir / "tensors.bin", 8);
  CHECK_THROWS_AS(load_archive(dir), MalformedInputError);
  std::ofstream(dir / "manifest.json") << "{not json";
  CHECK_THROWS_AS(load_archive(dir), MalformedInputError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_archive(dir), IoError);
}

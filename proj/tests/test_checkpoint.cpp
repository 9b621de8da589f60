#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "evdl/checkpoint.hpp"
#include "evdl/classifier.hpp"
#include "evdl/errors.hpp"

using namespace evdl;

namespace {

Dataset tiny_dataset() {
  auto s = default_synthetic_spec(3, 3.0, 0.1, RngSeed{4});
  s.n_per_class = 40;
  return synthesize_dataset(s);
}

ModelCheckpoint trained_model() {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  LossConfig lc;
  lc.loss_kind = LossKind::ExpectedCrossEntropy;
  lc.risk_mode = RiskMode::DirectRegularizer;
  return train(tiny_dataset(), NetworkSpec{3, {5, 4}}, tc, lc, RiskMatrix(1.0, 4.0)).model;
}

void check_same(const ModelCheckpoint& a, const ModelCheckpoint& b) {
  CHECK(a.format_version == b.format_version);
  CHECK(a.head == b.head);
  CHECK(a.dropout_rate == b.dropout_rate);
  CHECK(a.network == b.network);
  CHECK(a.optimizer == b.optimizer);
  CHECK(a.epoch_t == b.epoch_t);
  CHECK(a.loss_config == b.loss_config);
  CHECK(a.risk_matrix == b.risk_matrix);
  CHECK(a.feature_schema_id == b.feature_schema_id);
}

std::uint32_t read_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

}  // namespace

TEST_CASE("round-trip is bit exact including optimizer state") {
  const auto model = trained_model();
  REQUIRE(model.optimizer.has_value());
  REQUIRE(model.epoch_t == 3);
  const auto back = deserialize_checkpoint(serialize_checkpoint(model));
  check_same(model, back);
  const auto ds = tiny_dataset();
  for (const auto& ex : ds.examples) {
    const auto x = forward(model, ex.features);
    const auto y = forward(back, ex.features);
    CHECK(std::memcmp(&x.logits, &y.logits, sizeof(Logits)) == 0);
  }
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(model));
}

TEST_CASE("training resumes identically from a reloaded checkpoint") {
  const auto model = trained_model();
  const auto back = deserialize_checkpoint(serialize_checkpoint(model));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = RngSeed{9};
  const auto a = continue_training(model, tiny_dataset(), tc).model;
  const auto b = continue_training(back, tiny_dataset(), tc).model;
  CHECK(a.network == b.network);
  CHECK(a.epoch_t == 5);
}

TEST_CASE("layout starts with magic and version") {
  const auto bytes = serialize_checkpoint(zero_model(NetworkSpec{2, {3}}, "s"));
  CHECK(bytes.substr(0, 4) == "EVDL");
  CHECK(read_u32(bytes, 4) == ModelCheckpoint::kFormatVersion);
  const auto header_len = read_u32(bytes, 8);
  // 2*3 + 3 + 3*2 + 2 parameters, eight bytes each
  CHECK(bytes.size() == 12 + header_len + 17 * 8 + 4);
}

TEST_CASE("baseline heads and dropout survive the round-trip") {
  auto model = initialize_model(NetworkSpec{2, {3}}, HeadKind::SoftmaxCrossEntropy, RngSeed{1}, "s", {}, {}, 0.25);
  auto back = deserialize_checkpoint(serialize_checkpoint(model));
  CHECK(back.head == HeadKind::SoftmaxCrossEntropy);
  CHECK(back.dropout_rate == 0.25);
  CHECK_FALSE(back.optimizer.has_value());
  model.head = HeadKind::SoftmaxBrier;
  CHECK(deserialize_checkpoint(serialize_checkpoint(model)).head == HeadKind::SoftmaxBrier);
}

TEST_CASE("unsupported version is rejected") {
  auto bytes = serialize_checkpoint(zero_model(NetworkSpec{2, {3}}, "s"));
  bytes[4] = static_cast<char>(0xE7);
  bytes[5] = 0x03;  // 999
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes), doctest::Contains("999"), FormatError);
}

TEST_CASE("bad magic, truncation and corruption are rejected") {
  const auto bytes = serialize_checkpoint(trained_model());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{11}, std::size_t{40}, bytes.size() - 1, bytes.size() - 9}) {
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, cut)), FormatError);
  }
  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x01;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(flipped), doctest::Contains("CRC"), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), FormatError);
}

TEST_CASE("save is atomic and load reports missing files") {
  const auto dir = std::filesystem::temp_directory_path() / "evdl-checkpoint-test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.evdl";
  const auto model = trained_model();
  save_checkpoint(model, path);
  CHECK(std::filesystem::exists(path));
  CHECK_FALSE(std::filesystem::exists(dir / "model.evdl.tmp"));
  check_same(load_checkpoint(path), model);

  // Overwriting replaces the whole file.
  save_checkpoint(zero_model(NetworkSpec{2, {3}}, "s"), path);
  CHECK(load_checkpoint(path).spec() == NetworkSpec{2, {3}});

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.evdl"), IoError);
  CHECK_THROWS_AS(save_checkpoint(model, dir / "no-such-dir" / "m.evdl"), IoError);
  std::filesystem::remove_all(dir);
}

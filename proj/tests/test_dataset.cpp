#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "evdl/dataset.hpp"
#include "evdl/errors.hpp"
#include "evdl/results_csv.hpp"

using namespace evdl;

namespace {

const std::filesystem::path kFixtures = EVDL_FIXTURE_DIR;

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("evdl-dataset-" + name);
  std::filesystem::remove(p);
  return p;
}

std::string load_error(const std::string& fixture) {
  try {
    load_dataset(kFixtures / fixture);
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

Dataset balanced(std::size_t per_class) {
  Dataset ds{"features-d1", 1, {}};
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    LabeledExample ex;
    ex.id = "b" + std::to_string(i);
    ex.features = {static_cast<double>(i)};
    ex.resolved_label = i % 2 == 0 ? Label::Public : Label::Private;
    ds.examples.push_back(ex);
  }
  return ds;
}

}  // namespace

TEST_CASE("label resolution: private if any annotator says so") {
  CHECK(resolve_label({{"a", Label::Public}, {"b", Label::Private}}) == Label::Private);
  CHECK(resolve_label({{"a", Label::Public}, {"b", Label::Public}}) == Label::Public);
  CHECK_THROWS_AS(resolve_label({}), DomainError);
}

TEST_CASE("label resolution is order independent and idempotent") {
  std::vector<Annotation> anns = {{"a", Label::Public}, {"b", Label::Public}, {"c", Label::Private}, {"d", Label::Public}};
  const Label first = resolve_label(anns);
  std::sort(anns.begin(), anns.end(), [](const auto& x, const auto& y) { return x.annotator_id < y.annotator_id; });
  do {
    CHECK(resolve_label(anns) == first);
  } while (std::next_permutation(anns.begin(), anns.end(),
                                 [](const auto& x, const auto& y) { return x.annotator_id < y.annotator_id; }));
  auto doubled = anns;
  doubled.insert(doubled.end(), anns.begin(), anns.end());
  CHECK(resolve_label(doubled) == first);
}

TEST_CASE("fixture file applies the label convention") {
  const auto ds = load_dataset(kFixtures / "annotated.jsonl");
  REQUIRE(ds.size() == 6);
  CHECK(ds.feature_dim == 3);
  CHECK(ds.schema_id == "features-d3");
  CHECK(ds.examples[0].resolved_label == Label::Private);
  CHECK(ds.examples[1].resolved_label == Label::Public);
  CHECK(ds.examples[2].resolved_label == Label::Private);
  CHECK(ds.examples[3].resolved_label == Label::Private);
  CHECK(ds.examples[3].annotations.empty());
  CHECK(ds.examples[4].resolved_label == Label::Public);
  // annotations override a stale explicit label
  CHECK(ds.examples[5].resolved_label == Label::Private);
  CHECK(ds.examples[4].features[1] == 1e-3);
  CHECK(ds.class_counts() == std::array<std::size_t, 2>{2, 4});
  CHECK(load_dataset(kFixtures / "annotated.jsonl", std::string("custom")).schema_id == "custom");
}

TEST_CASE("loader rejects malformed fixtures and names the record") {
  const auto dim = load_error("wrong_dim.jsonl");
  CHECK(dim.find("r3") != std::string::npos);
  CHECK(dim.find(":3:") != std::string::npos);
  CHECK(load_error("duplicate_id.jsonl").find("duplicate") != std::string::npos);
  CHECK(load_error("malformed.jsonl").find(":2:") != std::string::npos);
  CHECK_FALSE(load_error("bad_label.jsonl").empty());
  CHECK_THROWS_AS(load_dataset(kFixtures / "does_not_exist.jsonl"), IoError);
}

TEST_CASE("save and load round-trip") {
  const auto ds = load_dataset(kFixtures / "annotated.jsonl");
  const auto path = temp_file("roundtrip.jsonl");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  CHECK(back.examples == ds.examples);
  CHECK(parse_record(format_record(ds.examples[0])) == ds.examples[0]);
}

TEST_CASE("append_record grows the file one line at a time") {
  const auto path = temp_file("append.jsonl");
  LabeledExample ex;
  ex.id = "u1";
  ex.features = {0.1, 0.2};
  ex.annotations = {{"user", Label::Private}};
  ex.resolved_label = Label::Private;
  append_record(ex, path);
  ex.id = "u2";
  append_record(ex, path);
  const auto ds = load_dataset(path);
  CHECK(ds.size() == 2);
  CHECK(ds.examples[1].id == "u2");
}

TEST_CASE("stratified split") {
  const auto ds = balanced(50);
  const auto [a, b] = split_dataset(ds, 0.5, RngSeed{1});
  CHECK(a.size() == 50);
  CHECK(b.size() == 50);
  for (const auto& side : {a, b}) {
    CHECK(side.class_counts()[0] >= 24);
    CHECK(side.class_counts()[0] <= 26);
  }
  std::set<std::string> ids;
  for (const auto& ex : a.examples) ids.insert(ex.id);
  for (const auto& ex : b.examples) CHECK_FALSE(ids.contains(ex.id));
  const auto [a2, b2] = split_dataset(ds, 0.5, RngSeed{1});
  CHECK(a2.examples == a.examples);
  CHECK_THROWS_AS(split_dataset(ds, 1.0, RngSeed{1}), DomainError);
  CHECK_THROWS_AS(split_dataset(ds, 0.0, RngSeed{1}), DomainError);
}

TEST_CASE("split preserves class ratios within one item for many seeds") {
  auto s = default_synthetic_spec(2, 3.0, 0.17, RngSeed{8});
  s.n_per_class = 37;
  const auto ds = synthesize_dataset(s);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [tr, te] = split_dataset(ds, 0.7, RngSeed{seed});
    for (int c = 0; c < 2; ++c) {
      const double want = 0.7 * 37;
      CHECK(std::abs(static_cast<double>(tr.class_counts()[c]) - want) <= 1.0);
    }
    CHECK(tr.size() + te.size() == ds.size());
  }
}

TEST_CASE("subsample") {
  const auto ds = balanced(40);
  CHECK(subsample(ds, 1.0, RngSeed{3}).examples == ds.examples);
  const auto half = subsample(ds, 0.5, RngSeed{3});
  CHECK(half.class_counts()[0] == 20);
  CHECK(half.class_counts()[1] == 20);
  CHECK(subsample(ds, 0.5, RngSeed{3}).examples == half.examples);
  CHECK_THROWS_AS(subsample(ds, 0.0, RngSeed{3}), DomainError);
  CHECK_THROWS_AS(subsample(ds, 0.001, RngSeed{3}), DomainError);
}

TEST_CASE("synthetic generation") {
  auto s = default_synthetic_spec(4, 3.0, 0.0, RngSeed{42});
  s.n_per_class = 500;
  const auto ds = synthesize_dataset(s);
  CHECK(ds.size() == 1000);
  CHECK(ds.class_counts()[0] == 500);
  CHECK(ds.class_counts()[1] == 500);
  CHECK(ds.examples == synthesize_dataset(s).examples);
  ds.validate();

  // Empirical class means within 3 spread / sqrt(n) of the spec means.
  for (int c = 0; c < 2; ++c) {
    std::vector<double> mean(4, 0.0);
    for (const auto& ex : ds.examples) {
      if (to_int(ex.resolved_label) != c) continue;
      for (int d = 0; d < 4; ++d) mean[d] += ex.features[d] / 500.0;
    }
    for (int d = 0; d < 4; ++d) CHECK(std::abs(mean[d] - s.class_means[c][d]) < 3.0 / std::sqrt(500.0));
  }

  s.class_spread = 0.0;
  CHECK_THROWS_AS(synthesize_dataset(s), DomainError);
}

TEST_CASE("overlap places a fraction of each class in the other cluster") {
  auto s = default_synthetic_spec(2, 12.0, 0.2, RngSeed{42});
  s.n_per_class = 100;
  const auto ds = synthesize_dataset(s);
  std::size_t swapped = 0;
  for (const auto& ex : ds.examples) {
    const double proj = ex.features[0] + ex.features[1];
    const bool near_private = proj > 0.0;
    swapped += near_private != (ex.resolved_label == Label::Private);
  }
  CHECK(swapped == 40);
}

TEST_CASE("results CSV round-trip") {
  std::vector<SweepRow> rows(3);
  rows[0].value = 0.0;
  rows[0].coverage = 0.0;
  rows[1].value = 0.5;
  rows[1].coverage = 0.57;
  MetricsReport m;
  m.accuracy = 0.97;
  m.f1 = 1.0 / 3.0;
  m.private_class.recall = 0.123456789012345;
  rows[1].metrics = m;
  rows[2].value = 1.0;
  rows[2].coverage = 1.0;
  rows[2].metrics = MetricsReport{};
  const auto path = temp_file("results.csv");
  export_results(rows, path);
  const auto back = read_results(path);
  REQUIRE(back.size() == 3);
  CHECK_FALSE(back[0].metrics.has_value());
  CHECK(back[1].coverage == doctest::Approx(0.57).epsilon(1e-12));
  CHECK(back[1].metrics->f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(back[1].metrics->private_class.recall == doctest::Approx(0.123456789012345).epsilon(1e-12));

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "theta_or_rate,coverage,accuracy,f1_overall,precision_overall,recall_overall,f1_private,precision_private,"
        "recall_private,f1_public,precision_public,recall_public");

  const auto empty = temp_file("empty.csv");
  export_results(std::vector<SweepRow>{}, empty);
  CHECK(read_results(empty).empty());
  CHECK_THROWS_AS(export_results(rows, "/nonexistent-dir/x.csv"), IoError);
}

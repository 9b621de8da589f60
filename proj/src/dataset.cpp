#include "evdl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unistd.h>

#include <json.hpp>

#include "evdl/errors.hpp"

namespace evdl {

using nlohmann::json;

Label resolve_label(const std::vector<Annotation>& annotations) {
  if (annotations.empty()) throw DomainError("cannot resolve a label from zero annotations");
  const bool any_private = std::any_of(annotations.begin(), annotations.end(),
                                       [](const Annotation& a) { return a.label == Label::Private; });
  return any_private ? Label::Private : Label::Public;
}

std::array<std::size_t, 2> Dataset::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& ex : examples) ++counts[to_int(ex.resolved_label)];
  return counts;
}

void Dataset::validate() const {
  if (feature_dim < 1) throw FormatError("dataset feature_dim must be >= 1");
  std::set<std::string> ids;
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.features.size()) != feature_dim) {
      throw FormatError("record '" + ex.id + "' has " + std::to_string(ex.features.size()) +
                        " features, dataset has " + std::to_string(feature_dim));
    }
    for (double v : ex.features) {
      if (!std::isfinite(v)) throw FormatError("record '" + ex.id + "' has a non-finite feature");
    }
    if (!ex.annotations.empty() && resolve_label(ex.annotations) != ex.resolved_label) {
      throw FormatError("record '" + ex.id + "' label disagrees with its annotations");
    }
    if (!ids.insert(ex.id).second) throw FormatError("duplicate record id '" + ex.id + "'");
  }
}

namespace {

int parse_label_value(const json& v) {
  if (!v.is_number_integer()) throw FormatError("label must be 0 or 1");
  const auto i = v.get<long long>();
  if (i != 0 && i != 1) throw FormatError("label must be 0 or 1");
  return static_cast<int>(i);
}

}  // namespace

LabeledExample parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("record must be a JSON object");

  LabeledExample ex;
  if (!j.contains("id") || !j["id"].is_string()) throw FormatError("missing string field 'id'");
  ex.id = j["id"].get<std::string>();
  if (!j.contains("features") || !j["features"].is_array()) {
    throw FormatError("record '" + ex.id + "': missing array field 'features'");
  }
  for (const auto& v : j["features"]) {
    if (!v.is_number()) throw FormatError("record '" + ex.id + "': non-numeric feature");
    ex.features.push_back(v.get<double>());
  }

  if (j.contains("annotations")) {
    if (!j["annotations"].is_array() || j["annotations"].empty()) {
      throw FormatError("record '" + ex.id + "': 'annotations' must be a non-empty array");
    }
    for (const auto& a : j["annotations"]) {
      if (!a.is_object() || !a.contains("annotator_id") || !a["annotator_id"].is_string() ||
          !a.contains("label")) {
        throw FormatError("record '" + ex.id + "': malformed annotation");
      }
      ex.annotations.push_back(
          {a["annotator_id"].get<std::string>(), label_from_int(parse_label_value(a["label"]))});
    }
    ex.resolved_label = resolve_label(ex.annotations);
  } else if (j.contains("label")) {
    ex.resolved_label = label_from_int(parse_label_value(j["label"]));
  } else {
    throw FormatError("record '" + ex.id + "': needs 'label' or 'annotations'");
  }
  return ex;
}

std::string format_record(const LabeledExample& ex) {
  json j;
  j["id"] = ex.id;
  j["features"] = ex.features;
  if (ex.annotations.empty()) {
    j["label"] = to_int(ex.resolved_label);
  } else {
    json arr = json::array();
    for (const auto& a : ex.annotations) {
      arr.push_back({{"annotator_id", a.annotator_id}, {"label", to_int(a.label)}});
    }
    j["annotations"] = std::move(arr);
  }
  return j.dump();
}

std::string default_schema_id(int feature_dim) { return "features-d" + std::to_string(feature_dim); }

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::string> schema_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  Dataset ds;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    LabeledExample ex;
    try {
      ex = parse_record(line);
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    } catch (const DomainError& e) {
      throw FormatError(where + e.what());
    }
    if (ds.feature_dim == 0) ds.feature_dim = static_cast<int>(ex.features.size());
    if (static_cast<int>(ex.features.size()) != ds.feature_dim) {
      throw FormatError(where + "record '" + ex.id + "' has " + std::to_string(ex.features.size()) +
                        " features, expected " + std::to_string(ds.feature_dim));
    }
    for (double v : ex.features) {
      if (!std::isfinite(v)) throw FormatError(where + "record '" + ex.id + "' non-finite feature");
    }
    if (!ids.insert(ex.id).second) throw FormatError(where + "duplicate record id '" + ex.id + "'");
    ds.examples.push_back(std::move(ex));
  }
  if (ds.feature_dim == 0) throw FormatError("dataset '" + path.string() + "' has no records");
  ds.schema_id = schema_id.value_or(default_schema_id(ds.feature_dim));
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset '" + path.string() + "'");
  for (const auto& ex : ds.examples) out << format_record(ex) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing dataset '" + path.string() + "'");
}

void append_record(const LabeledExample& ex, const std::filesystem::path& path) {
  const std::string line = format_record(ex) + "\n";
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (f == nullptr) throw IoError("cannot append to '" + path.string() + "'");
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                  std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw IoError("failed appending to '" + path.string() + "'");
}

namespace {

std::array<std::vector<std::size_t>, 2> indices_by_class(const Dataset& ds) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    by_class[to_int(ds.examples[i].resolved_label)].push_back(i);
  }
  return by_class;
}

// Marks round(fraction * n_c) shuffled indices per class.
std::vector<bool> stratified_selection(const Dataset& ds, double fraction, RngSeed seed) {
  Rng rng(seed);
  std::vector<bool> selected(ds.size(), false);
  for (auto& idx : indices_by_class(ds)) {
    rng.shuffle(idx);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < take && k < idx.size(); ++k) selected[idx[k]] = true;
  }
  return selected;
}

Dataset empty_like(const Dataset& ds) {
  Dataset out;
  out.schema_id = ds.schema_id;
  out.feature_dim = ds.feature_dim;
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, RngSeed seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw DomainError("train_fraction must lie in (0, 1]");
  }
  const std::vector<bool> selected = stratified_selection(ds, train_fraction, seed);
  Dataset train = empty_like(ds);
  Dataset test = empty_like(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (selected[i] ? train : test).examples.push_back(ds.examples[i]);
  }
  if (train.empty() || test.empty()) {
    throw DomainError("split fraction " + std::to_string(train_fraction) + " leaves one side empty");
  }
  return {std::move(train), std::move(test)};
}

Dataset subsample(const Dataset& ds, double fraction, RngSeed seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("fraction must lie in (0, 1]");
  const std::vector<bool> selected = stratified_selection(ds, fraction, seed);
  Dataset out = empty_like(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (selected[i]) out.examples.push_back(ds.examples[i]);
  }
  if (out.empty()) throw DomainError("subsample fraction leaves the dataset empty");
  return out;
}

SyntheticSpec default_synthetic_spec(std::size_t feature_dim, double separation,
                                     double overlap_fraction, RngSeed seed) {
  SyntheticSpec spec;
  spec.feature_dim = feature_dim;
  spec.overlap_fraction = overlap_fraction;
  spec.seed = seed;
  const double offset = 0.5 * separation / std::sqrt(static_cast<double>(feature_dim));
  spec.class_means[0].assign(feature_dim, -offset);
  spec.class_means[1].assign(feature_dim, offset);
  return spec;
}

Dataset synthesize_dataset(const SyntheticSpec& spec) {
  if (spec.n_per_class == 0) throw DomainError("synthetic n_per_class must be >= 1");
  if (spec.feature_dim == 0) throw DomainError("synthetic feature_dim must be >= 1");
  if (!(spec.class_spread > 0.0) || !std::isfinite(spec.class_spread)) {
    throw DomainError("synthetic class_spread must be positive");
  }
  if (!(spec.overlap_fraction >= 0.0 && spec.overlap_fraction < 1.0)) {
    throw DomainError("synthetic overlap_fraction must lie in [0, 1)");
  }
  for (const auto& m : spec.class_means) {
    if (m.size() != spec.feature_dim) throw DomainError("class mean length must equal feature_dim");
  }

  Rng rng(spec.seed);
  std::vector<LabeledExample> examples;
  examples.reserve(2 * spec.n_per_class);
  const auto n_swapped =
      static_cast<std::size_t>(std::llround(spec.overlap_fraction * static_cast<double>(spec.n_per_class)));
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      const int cluster = i < spec.n_per_class - n_swapped ? c : 1 - c;
      LabeledExample ex;
      ex.resolved_label = label_from_int(c);
      ex.features.resize(spec.feature_dim);
      for (std::size_t k = 0; k < spec.feature_dim; ++k) {
        ex.features[k] = spec.class_means[cluster][k] + spec.class_spread * rng.normal();
      }
      examples.push_back(std::move(ex));
    }
  }
  rng.shuffle(examples);

  Dataset ds;
  ds.feature_dim = static_cast<int>(spec.feature_dim);
  ds.schema_id = spec.schema_id.empty() ? default_schema_id(ds.feature_dim) : spec.schema_id;
  const int width = static_cast<int>(std::to_string(examples.size()).size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::string num = std::to_string(i);
    examples[i].id = spec.id_prefix + std::string(width - num.size(), '0') + num;
  }
  ds.examples = std::move(examples);
  return ds;
}

}  // namespace evdl

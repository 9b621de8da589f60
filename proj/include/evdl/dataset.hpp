#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evdl/losses.hpp"
#include "evdl/special_functions.hpp"

namespace evdl {

struct Annotation {
  std::string annotator_id;
  Label label = Label::Public;

  bool operator==(const Annotation&) const = default;
};

/// Private if at least one annotator says private; public only when all agree.
/// Throws on an empty list.
Label resolve_label(const std::vector<Annotation>& annotations);

struct LabeledExample {
  std::string id;
  std::vector<double> features;
  std::vector<Annotation> annotations;
  Label resolved_label = Label::Public;

  bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
  std::string schema_id;
  int feature_dim = 0;
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::array<std::size_t, 2> class_counts() const;

  /// Checks feature dimensions, finiteness, unique ids and label resolution.
  void validate() const;
};

/// One JSON object per line: {"id", "features", "label"} or
/// {"id", "features", "annotations": [{"annotator_id", "label"}]}.
/// The schema id defaults to default_schema_id(feature_dim) when not given.
/// "features-d<dim>": datasets with the same feature layout share it.
std::string default_schema_id(int feature_dim);

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::string> schema_id = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Serializes one record in the dataset line format (no trailing newline).
std::string format_record(const LabeledExample& ex);
LabeledExample parse_record(const std::string& line);

/// Appends a record and flushes it to stable storage before returning.
void append_record(const LabeledExample& ex, const std::filesystem::path& path);

/// Class-stratified, seed-deterministic split. Each side keeps input order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, RngSeed seed);

/// Class-stratified subsample of round(fraction * n_c) items per class.
Dataset subsample(const Dataset& ds, double fraction, RngSeed seed);

struct SyntheticSpec {
  std::size_t n_per_class = 500;
  std::size_t feature_dim = 8;
  /// Cluster centre for public (index 0) and private (index 1) items.
  std::array<std::vector<double>, 2> class_means;
  double class_spread = 1.0;
  /// Fraction of each class drawn from the other class's cluster.
  double overlap_fraction = 0.17;
  RngSeed seed{42};
  /// Empty selects default_schema_id(feature_dim).
  std::string schema_id;
  std::string id_prefix = "s";
};

/// Symmetric default: means at -/+ separation/2 along the all-ones direction
/// scaled to unit length, spread 1.
SyntheticSpec default_synthetic_spec(std::size_t feature_dim = 8, double separation = 3.0,
                                     double overlap_fraction = 0.17, RngSeed seed = {42});

Dataset synthesize_dataset(const SyntheticSpec& spec);

}  // namespace evdl

#include "evdl/decision.hpp"

#include <cstdint>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "evdl/errors.hpp"

namespace evdl {

std::string to_string(Action a) {
  switch (a) {
    case Action::Share:
      return "share";
    case Action::NotShare:
      return "not_share";
    case Action::Delegate:
      return "delegate";
  }
  return "delegate";
}

void PersonaConfig::validate() const {
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("theta must lie in [0, 1]");
}

Label predicted_label(double p_bar) { return p_bar > 0.5 ? Label::Private : Label::Public; }

Action decide(double p_bar, double uncertainty, const PersonaConfig& persona) {
  if (uncertainty > persona.theta) return Action::Delegate;
  return predicted_label(p_bar) == Label::Private ? Action::NotShare : Action::Share;
}

Prediction make_prediction(std::string item_id, double p_bar, double uncertainty,
                           const PersonaConfig& persona) {
  Prediction p;
  p.item_id = std::move(item_id);
  p.p_bar = p_bar;
  p.uncertainty_u = uncertainty;
  p.entropy = normalized_entropy(p_bar);
  p.predicted_label = predicted_label(p_bar);
  p.action = decide(p_bar, uncertainty, persona);
  return p;
}

std::vector<Prediction> predict_dataset(const ModelCheckpoint& model, const Dataset& ds,
                                        const PersonaConfig& persona) {
  std::vector<Prediction> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    const auto o = forward(model, ex.features);
    out.push_back(make_prediction(ex.id, o.p_bar, o.uncertainty, persona));
  }
  return out;
}

std::vector<Label> gold_labels(const Dataset& ds) {
  std::vector<Label> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) out.push_back(ex.resolved_label);
  return out;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// (n1/d1 + n2/d2) / 2 as a single rounded division while the integers stay
// exactly representable, so macro averages are correctly rounded.
double mean_of_ratios(std::size_t n1, std::size_t d1, std::size_t n2, std::size_t d2) {
  if (d1 == 0 || d2 == 0) return 0.5 * (ratio(n1, d1) + ratio(n2, d2));
  constexpr unsigned __int128 kExact = std::uint64_t{1} << 53;
  const unsigned __int128 num = static_cast<unsigned __int128>(n1) * d2 + static_cast<unsigned __int128>(n2) * d1;
  const unsigned __int128 den = 2 * static_cast<unsigned __int128>(d1) * d2;
  if (num >= kExact || den >= kExact) return 0.5 * (ratio(n1, d1) + ratio(n2, d2));
  return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  m.support = tp + fn;
  return m;
}

void check_aligned(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DomainError("predictions (" + std::to_string(a) + ") and gold labels (" +
                      std::to_string(b) + ") differ in length");
  }
}

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionCounts& c) {
  MetricsReport r;
  r.confusion = c;
  r.accuracy = ratio(c.true_private + c.true_public, c.total());
  r.private_class = class_metrics(c.true_private, c.false_private, c.false_public);
  r.public_class = class_metrics(c.true_public, c.false_public, c.false_private);
  const std::size_t tp = c.true_private, fp = c.false_private, fn = c.false_public, tn = c.true_public;
  r.precision = mean_of_ratios(tp, tp + fp, tn, tn + fn);
  r.recall = mean_of_ratios(tp, tp + fn, tn, tn + fp);
  r.f1 = mean_of_ratios(2 * tp, 2 * tp + fp + fn, 2 * tn, 2 * tn + fp + fn);
  return r;
}

MetricsReport compute_metrics(std::span<const Prediction> predictions, std::span<const Label> gold) {
  check_aligned(predictions.size(), gold.size());
  if (predictions.empty()) throw DomainError("compute_metrics: no predictions");
  ConfusionCounts c;
  std::size_t acted = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool said_private = predictions[i].predicted_label == Label::Private;
    const bool is_private = gold[i] == Label::Private;
    if (said_private && is_private) ++c.true_private;
    if (said_private && !is_private) ++c.false_private;
    if (!said_private && is_private) ++c.false_public;
    if (!said_private && !is_private) ++c.true_public;
    if (predictions[i].action != Action::Delegate) ++acted;
  }
  MetricsReport r = metrics_from_confusion(c);
  r.coverage = ratio(acted, predictions.size());
  return r;
}

std::string to_string(UncertaintyChannel c) {
  return c == UncertaintyChannel::Uncertainty ? "u" : "entropy";
}

UncertaintyChannel channel_from_string(const std::string& s) {
  if (s == "u") return UncertaintyChannel::Uncertainty;
  if (s == "entropy") return UncertaintyChannel::Entropy;
  throw DomainError("unknown uncertainty channel '" + s + "' (expected u|entropy)");
}

double channel_value(const Prediction& p, UncertaintyChannel c) {
  return c == UncertaintyChannel::Uncertainty ? p.uncertainty_u : p.entropy;
}

namespace {

std::optional<MetricsReport> subset_metrics(std::span<const Prediction> predictions,
                                            std::span<const Label> gold,
                                            const std::vector<std::size_t>& keep) {
  if (keep.empty()) return std::nullopt;
  std::vector<Prediction> p;
  std::vector<Label> g;
  p.reserve(keep.size());
  g.reserve(keep.size());
  for (std::size_t i : keep) {
    p.push_back(predictions[i]);
    g.push_back(gold[i]);
  }
  MetricsReport r = compute_metrics(p, g);
  r.coverage = ratio(keep.size(), predictions.size());
  return r;
}

// Indices ordered from most to least uncertain, ties by item_id ascending.
std::vector<std::size_t> most_uncertain_first(std::span<const Prediction> predictions,
                                              UncertaintyChannel channel) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ua = channel_value(predictions[a], channel);
    const double ub = channel_value(predictions[b], channel);
    if (ua != ub) return ua > ub;
    return predictions[a].item_id < predictions[b].item_id;
  });
  return order;
}

}  // namespace

std::vector<SweepRow> sweep_thresholds(std::span<const Prediction> predictions,
                                       std::span<const Label> gold, std::span<const double> thetas,
                                       UncertaintyChannel channel) {
  check_aligned(predictions.size(), gold.size());
  std::vector<SweepRow> rows;
  for (double theta : thetas) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("sweep thresholds must lie in [0, 1]");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      // A threshold of 1 considers every item, including u exactly 1.
      const double v = channel_value(predictions[i], channel);
      if (v < theta || theta == 1.0) keep.push_back(i);
    }
    rows.push_back({theta, ratio(keep.size(), predictions.size()), subset_metrics(predictions, gold, keep)});
  }
  return rows;
}

std::vector<SweepRow> sweep_delegation_rates(std::span<const Prediction> predictions,
                                             std::span<const Label> gold,
                                             std::span<const double> rates,
                                             UncertaintyChannel channel) {
  check_aligned(predictions.size(), gold.size());
  const std::vector<std::size_t> order = most_uncertain_first(predictions, channel);
  const double n = static_cast<double>(predictions.size());
  std::vector<SweepRow> rows;
  for (double rate : rates) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("delegation rates must lie in [0, 1)");
    // The small slack keeps r * N products like 0.1 * 30 from rounding up an extra item.
    const auto drop = static_cast<std::size_t>(std::ceil(rate * n - 1e-9));
    std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(std::min(drop, order.size())),
                                  order.end());
    std::sort(keep.begin(), keep.end());
    rows.push_back({rate, ratio(keep.size(), predictions.size()), subset_metrics(predictions, gold, keep)});
  }
  return rows;
}

std::optional<MetricsReport> metrics_at_coverage(std::span<const Prediction> predictions,
                                                 std::span<const Label> gold, double coverage,
                                                 UncertaintyChannel channel) {
  check_aligned(predictions.size(), gold.size());
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw DomainError("coverage must lie in [0, 1]");
  const std::vector<std::size_t> order = most_uncertain_first(predictions, channel);
  const auto keep_n = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(order.size())));
  std::vector<std::size_t> keep(order.end() - static_cast<std::ptrdiff_t>(keep_n), order.end());
  std::sort(keep.begin(), keep.end());
  return subset_metrics(predictions, gold, keep);
}

UncertaintyHistogram uncertainty_histogram(std::span<const Prediction> predictions,
                                           std::span<const Label> gold, std::size_t bins) {
  check_aligned(predictions.size(), gold.size());
  if (bins < 2) throw DomainError("histogram needs at least 2 bins");
  UncertaintyHistogram h;
  h.bins = bins;
  std::array<std::array<std::vector<std::size_t>, 2>, 2> counts;  // [class][successful]
  std::array<std::array<double, 2>, 2> sums{};
  for (auto& per_class : counts) {
    for (auto& c : per_class) c.assign(bins, 0);
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double u = std::clamp(predictions[i].uncertainty_u, 0.0, 1.0);
    const auto bin = std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
    const int cls = to_int(gold[i]);
    const int ok = predictions[i].predicted_label == gold[i] ? 1 : 0;
    ++counts[cls][ok][bin];
    sums[cls][ok] += u;
  }
  auto finish = [&](int cls, int ok) {
    HistogramGroup g;
    for (std::size_t c : counts[cls][ok]) g.count += c;
    if (g.count == 0) return g;
    g.mean_uncertainty = sums[cls][ok] / static_cast<double>(g.count);
    for (std::size_t c : counts[cls][ok]) {
      g.percentages.push_back(100.0 * static_cast<double>(c) / static_cast<double>(g.count));
    }
    return g;
  };
  h.public_class = {finish(0, 0), finish(0, 1)};
  h.private_class = {finish(1, 0), finish(1, 1)};
  return h;
}

double randomization_test(std::span<const int> errors_a, std::span<const int> errors_b,
                          std::size_t iterations, RngSeed seed) {
  if (errors_a.size() != errors_b.size()) throw DomainError("paired error lists differ in length");
  if (iterations < 1000) throw DomainError("randomization test needs at least 1000 iterations");
  std::vector<long> diffs(errors_a.size());
  long observed = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if ((errors_a[i] != 0 && errors_a[i] != 1) || (errors_b[i] != 0 && errors_b[i] != 1)) {
      throw DomainError("error indicators must be 0 or 1");
    }
    diffs[i] = errors_a[i] - errors_b[i];
    observed += diffs[i];
  }
  // Integer sums of the differences compare exactly; the mean scales both sides equally.
  const long observed_abs = std::labs(observed);
  Rng rng(seed);
  std::size_t extreme = 0;
  for (std::size_t it = 0; it < iterations; ++it) {
    long permuted = 0;
    for (long d : diffs) {
      if (d == 0) continue;
      permuted += (rng.uniform() < 0.5) ? d : -d;
    }
    if (std::labs(permuted) >= observed_abs) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(iterations + 1);
}

std::vector<int> error_indicators(std::span<const Prediction> predictions, std::span<const Label> gold) {
  check_aligned(predictions.size(), gold.size());
  std::vector<int> out(predictions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = predictions[i].predicted_label != gold[i] ? 1 : 0;
  return out;
}

}  // namespace evdl

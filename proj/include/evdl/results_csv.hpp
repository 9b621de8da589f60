#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "evdl/decision.hpp"

namespace evdl {

inline constexpr std::array<std::string_view, 12> kSweepCsvColumns = {
    "theta_or_rate",   "coverage",         "accuracy",       "f1_overall",
    "precision_overall", "recall_overall", "f1_private",     "precision_private",
    "recall_private",  "f1_public",        "precision_public", "recall_public"};

/// Header plus one line per row. Undefined metrics are written as "nan".
std::string format_results_csv(std::span<const SweepRow> rows);

void export_results(std::span<const SweepRow> rows, const std::filesystem::path& path);

/// Reads a file written by export_results; throws FormatError on schema drift.
/// Rows whose metric columns are "nan" come back with empty metrics.
std::vector<SweepRow> read_results(const std::filesystem::path& path);

}  // namespace evdl

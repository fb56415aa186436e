#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlcw/experiments.hpp"

namespace xlcw {

// 100 * (setup - zs) / zs rounded half away from zero; nullopt (undefined) when zs <= 0.
std::optional<int> percent_diff(double setup_f1, double zs_f1);
// "(-11)", "(1.1K)" for magnitudes of a thousand or more, "(n/a)" when undefined.
std::string format_percent_diff(std::optional<int> diff);
// Thousands shorthand used for large percentages: 1097.8 -> "1.1K".
std::string format_thousands(double value);
// F1 on the x100 scale, one decimal, zero-padded to two integer digits ("04.6").
std::string format_f1(double f1_x100);

struct GridCell {
  std::optional<double> f1_x100;
  std::optional<int> pct_diff;
  bool pct_undefined = false;
  bool significant = false;
  bool baseline = false;
  bool best = false;
  bool second = false;
};

struct ResultGrid {
  std::string title;
  std::vector<std::string> rows;  // source languages
  std::vector<std::string> cols;  // target languages
  std::vector<std::vector<GridCell>> cells;
  std::string corner = "src \\ trg";

  GridCell& at(const std::string& row, const std::string& col);
  const GridCell& at(const std::string& row, const std::string& col) const;
};

ResultGrid empty_grid(std::string title, std::vector<std::string> rows,
                      std::vector<std::string> cols);

// Best and second-best per column over all present cells, diagonal included. Cells are
// compared at display precision (one decimal); ties go to the earlier row.
void mark_best(ResultGrid& grid);

// Cells come from results of `setup` (row = source, column = target); the diagonal holds the
// baseline results. Percent differences are against the matching cell of `zs_reference`
// and only for setups other than ZS. `few_shot_k` selects one k for FS grids. Off-diagonal
// cells and their ZS references are taken from results tagged with `variant`.
ResultGrid render_grid(std::span<const RunResult> results, Setup setup,
                       std::span<const RunResult> zs_reference,
                       std::vector<std::string> languages = {},
                       std::optional<std::size_t> few_shot_k = std::nullopt,
                       const std::string& variant = {});

struct GridKey {
  Setup setup = Setup::ZS;
  std::string variant;
  std::optional<std::size_t> k;
};

// One grid per (setup, variant, k) present among the non-baseline results; MULTI_ZS excluded.
std::vector<GridKey> grid_keys(std::span<const RunResult> results);

std::string grid_to_markdown(const ResultGrid& grid);
nlohmann::json grid_to_json(const ResultGrid& grid);

struct SweepPoint {
  std::string source;
  double x = 0.0;
  double mean_f1 = 0.0;

  bool operator==(const SweepPoint&) const = default;
};

struct SweepSeries {
  std::string name;
  std::string x_label;  // "k" or "num_languages"
  bool log_scale = false;
  std::vector<SweepPoint> points;
};

// Sorts by (source, x).
SweepSeries render_sweep(SweepSeries series);
// Header "source,k_or_num_languages,mean_f1".
std::string sweep_to_csv(const SweepSeries& series);
nlohmann::json sweep_metadata(const SweepSeries& series);

// FS results grouped by "source->target", x = k, log-scale x.
SweepSeries few_shot_sweep(std::span<const RunResult> results);
// MULTI_ZS (and single-source ZS) results per target, x = number of source languages.
SweepSeries multilingual_sweep(std::span<const RunResult> results);

// Rows: the monolingual baseline, then the best result of each transfer setup per target
// (columns). `*` marks a significant difference from the baseline.
ResultGrid render_comparison_table(std::span<const RunResult> results,
                                   std::vector<std::string> targets = {});

// Markdown report covering every setup present in `results`.
std::string render_report(std::span<const RunResult> results);

}  // namespace xlcw

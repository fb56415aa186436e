#include "xlcw/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"

namespace xlcw {
namespace {

// Strips binary noise such as 400.00000000000006 before half-away rounding.
double snap(double x) { return std::round(x * 1e9) / 1e9; }

double display(double f1_x100) { return std::round(f1_x100 * 10.0) / 10.0; }

std::string cell_text(const GridCell& cell) {
  if (!cell.f1_x100) return "—";
  std::string text = format_f1(*cell.f1_x100);
  if (cell.best) text = "**" + text + "**";
  if (cell.second) text = "<u>" + text + "</u>";
  if (cell.significant) text += "\\*";
  if (cell.pct_diff || cell.pct_undefined) text += " " + format_percent_diff(cell.pct_diff);
  return text;
}

const RunResult* find_result(std::span<const RunResult> results, Setup setup,
                             const std::string& source, const std::string& target,
                             std::optional<std::size_t> k, const std::string& variant) {
  for (const auto& r : results) {
    if (r.setup != setup || r.source != source || r.target_language != target) continue;
    if (r.variant != variant) continue;
    if (k && r.few_shot_k != k) continue;
    if (r.baseline && setup == Setup::ZS && source != target) continue;
    return &r;
  }
  return nullptr;
}

const RunResult* find_baseline(std::span<const RunResult> results, const std::string& language) {
  for (const auto& r : results) {
    if (r.baseline && r.target_language == language && r.source == language) return &r;
  }
  return nullptr;
}

bool significant_vs_baseline(const RunResult& r, std::span<const RunResult> pool) {
  for (const auto& c : r.comparisons) {
    for (const auto& other : pool) {
      if (other.manifest_id == c.other_manifest_id && other.baseline) {
        if (c.significant) return true;
      }
    }
  }
  return false;
}

}  // namespace

std::vector<GridKey> grid_keys(std::span<const RunResult> results) {
  std::set<std::tuple<Setup, std::string, std::optional<std::size_t>>> seen;
  for (const auto& r : results) {
    if (r.baseline || r.setup == Setup::MULTI_ZS) continue;
    seen.insert({r.setup, r.variant, r.setup == Setup::FS ? r.few_shot_k : std::nullopt});
  }
  std::vector<GridKey> keys;
  for (const auto& [setup, variant, k] : seen) keys.push_back({setup, variant, k});
  return keys;
}

std::optional<int> percent_diff(double setup_f1, double zs_f1) {
  if (!(zs_f1 > 0.0) || !std::isfinite(setup_f1) || !std::isfinite(zs_f1)) return std::nullopt;
  return static_cast<int>(std::round(snap(100.0 * (setup_f1 - zs_f1) / zs_f1)));
}

std::string format_thousands(double value) { return fmt::format("{:.1f}K", value / 1000.0); }

std::string format_percent_diff(std::optional<int> diff) {
  if (!diff) return "(n/a)";
  if (std::abs(*diff) >= 1000) return "(" + format_thousands(*diff) + ")";
  return fmt::format("({})", *diff);
}

std::string format_f1(double f1_x100) { return fmt::format("{:04.1f}", display(f1_x100)); }

GridCell& ResultGrid::at(const std::string& row, const std::string& col) {
  return const_cast<GridCell&>(std::as_const(*this).at(row, col));
}

const GridCell& ResultGrid::at(const std::string& row, const std::string& col) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(cols.begin(), cols.end(), col);
  if (r == rows.end() || c == cols.end()) {
    throw PreconditionError(fmt::format("grid has no cell ({}, {})", row, col));
  }
  return cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - cols.begin())];
}

ResultGrid empty_grid(std::string title, std::vector<std::string> rows,
                      std::vector<std::string> cols) {
  ResultGrid grid{std::move(title), std::move(rows), std::move(cols), {}, "src \\ trg"};
  grid.cells.assign(grid.rows.size(), std::vector<GridCell>(grid.cols.size()));
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    for (std::size_t j = 0; j < grid.cols.size(); ++j) {
      grid.cells[i][j].baseline = grid.rows[i] == grid.cols[j];
    }
  }
  return grid;
}

void mark_best(ResultGrid& grid) {
  for (std::size_t j = 0; j < grid.cols.size(); ++j) {
    std::optional<std::size_t> best, second;
    for (std::size_t i = 0; i < grid.rows.size(); ++i) {
      auto& cell = grid.cells[i][j];
      cell.best = cell.second = false;
      if (!cell.f1_x100) continue;
      const double v = display(*cell.f1_x100);
      if (!best || v > display(*grid.cells[*best][j].f1_x100)) {
        second = best;
        best = i;
      } else if (!second || v > display(*grid.cells[*second][j].f1_x100)) {
        second = i;
      }
    }
    if (best) grid.cells[*best][j].best = true;
    if (second) grid.cells[*second][j].second = true;
  }
}

ResultGrid render_grid(std::span<const RunResult> results, Setup setup,
                       std::span<const RunResult> zs_reference, std::vector<std::string> languages,
                       std::optional<std::size_t> few_shot_k, const std::string& variant) {
  if (languages.empty()) {
    std::set<std::string> seen;
    for (const auto& r : results) {
      if (r.setup == setup || r.baseline) {
        seen.insert(r.target_language);
        if (r.n_sources == 1) seen.insert(r.source);
      }
    }
    languages.assign(seen.begin(), seen.end());
  }
  std::string title(to_string(setup));
  if (few_shot_k) title += fmt::format(" (k={})", *few_shot_k);
  if (!variant.empty()) title += fmt::format(" [{}]", variant);
  ResultGrid grid = empty_grid(title, languages, languages);

  std::vector<RunResult> pool(results.begin(), results.end());
  pool.insert(pool.end(), zs_reference.begin(), zs_reference.end());
  for (const auto& source : languages) {
    for (const auto& target : languages) {
      auto& cell = grid.at(source, target);
      const RunResult* r = source == target ? find_baseline(pool, target)
                                            : find_result(results, setup, source, target, few_shot_k, variant);
      if (!r) continue;
      cell.f1_x100 = 100.0 * r->mean_f1;
      if (source == target) continue;
      cell.significant = significant_vs_baseline(*r, pool);
      if (setup != Setup::ZS) {
        if (const auto* zs = find_result(zs_reference, Setup::ZS, source, target, std::nullopt, variant)) {
          // Differences are taken at display precision, as printed.
          cell.pct_diff = percent_diff(display(100.0 * r->mean_f1), display(100.0 * zs->mean_f1));
          cell.pct_undefined = !cell.pct_diff;
        }
      }
    }
  }
  mark_best(grid);
  return grid;
}

std::string grid_to_markdown(const ResultGrid& grid) {
  std::ostringstream out;
  if (!grid.title.empty()) out << "### " << grid.title << "\n\n";
  out << "| " << grid.corner << " |";
  for (const auto& c : grid.cols) out << ' ' << c << " |";
  out << "\n|---|";
  for (std::size_t j = 0; j < grid.cols.size(); ++j) out << "---|";
  out << '\n';
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    out << "| " << grid.rows[i] << " |";
    for (const auto& cell : grid.cells[i]) out << ' ' << cell_text(cell) << " |";
    out << '\n';
  }
  return out.str();
}

nlohmann::json grid_to_json(const ResultGrid& grid) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    for (std::size_t j = 0; j < grid.cols.size(); ++j) {
      const auto& c = grid.cells[i][j];
      nlohmann::json cell{{"source", grid.rows[i]},
                          {"target", grid.cols[j]},
                          {"baseline", c.baseline},
                          {"significant", c.significant},
                          {"best", c.best},
                          {"second", c.second}};
      cell["f1_x100"] = c.f1_x100 ? nlohmann::json(display(*c.f1_x100)) : nlohmann::json();
      cell["pct_diff"] = c.pct_diff ? nlohmann::json(*c.pct_diff) : nlohmann::json();
      cell["pct_undefined"] = c.pct_undefined;
      cells.push_back(std::move(cell));
    }
  }
  return {{"title", grid.title}, {"rows", grid.rows}, {"cols", grid.cols}, {"cells", cells}};
}

SweepSeries render_sweep(SweepSeries series) {
  std::stable_sort(series.points.begin(), series.points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) {
                     return a.source != b.source ? a.source < b.source : a.x < b.x;
                   });
  return series;
}

std::string sweep_to_csv(const SweepSeries& series) {
  std::string out = "source,k_or_num_languages,mean_f1\n";
  for (const auto& p : render_sweep(series).points) {
    out += fmt::format("{},{},{:.6f}\n", p.source, p.x, p.mean_f1);
  }
  return out;
}

nlohmann::json sweep_metadata(const SweepSeries& series) {
  std::set<std::string> sources;
  for (const auto& p : series.points) sources.insert(p.source);
  return {{"name", series.name},
          {"x_label", series.x_label},
          {"log_scale", series.log_scale},
          {"columns", {"source", "k_or_num_languages", "mean_f1"}},
          {"sources", sources},
          {"points", series.points.size()}};
}

SweepSeries few_shot_sweep(std::span<const RunResult> results) {
  SweepSeries series{"few_shot", "k", true, {}};
  for (const auto& r : results) {
    if (r.setup != Setup::FS || !r.few_shot_k) continue;
    auto label = r.source + "->" + r.target_language;
    if (!r.variant.empty()) label += "[" + r.variant + "]";
    series.points.push_back({std::move(label), static_cast<double>(*r.few_shot_k), r.mean_f1});
  }
  return render_sweep(std::move(series));
}

SweepSeries multilingual_sweep(std::span<const RunResult> results) {
  SweepSeries series{"multilingual", "num_languages", false, {}};
  for (const auto& r : results) {
    if (r.setup != Setup::MULTI_ZS) continue;
    series.points.push_back({"->" + r.target_language, static_cast<double>(r.n_sources),
                             r.mean_f1});
  }
  return render_sweep(std::move(series));
}

ResultGrid render_comparison_table(std::span<const RunResult> results,
                                   std::vector<std::string> targets) {
  if (targets.empty()) {
    std::set<std::string> seen;
    for (const auto& r : results) seen.insert(r.target_language);
    targets.assign(seen.begin(), seen.end());
  }
  const std::vector<std::pair<std::string, std::optional<Setup>>> rows{
      {"baseline", std::nullopt},         {"ZS_best", Setup::ZS},
      {"ZS_TR_SRC_best", Setup::ZS_TR_SRC}, {"ZS_TR_TRG_best", Setup::ZS_TR_TRG},
      {"FS_best", Setup::FS},             {"ZS_ADV_best", Setup::ZS_ADV},
      {"MULTI_ZS_best", Setup::MULTI_ZS}};
  std::vector<std::string> labels;
  for (const auto& [label, setup] : rows) labels.push_back(label);
  ResultGrid grid = empty_grid("Best setup per target", labels, targets);
  grid.corner = "model";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < targets.size(); ++j) {
      auto& cell = grid.cells[i][j];
      cell.baseline = !rows[i].second;
      const RunResult* chosen = nullptr;
      if (!rows[i].second) {
        chosen = find_baseline(results, targets[j]);
      } else {
        for (const auto& r : results) {
          if (r.baseline || r.setup != *rows[i].second || r.target_language != targets[j]) continue;
          if (!chosen || r.mean_f1 > chosen->mean_f1) chosen = &r;
        }
      }
      if (!chosen) continue;
      cell.f1_x100 = 100.0 * chosen->mean_f1;
      if (rows[i].second) cell.significant = significant_vs_baseline(*chosen, results);
    }
  }
  mark_best(grid);
  return grid;
}

std::string render_report(std::span<const RunResult> results) {
  std::ostringstream out;
  out << "# Cross-lingual transfer results\n\n";
  out << "F1 of the positive class x100, mean over seeds. `\\*` marks a significant difference "
         "from the target's monolingual baseline (paired t-test, alpha 0.05); bold and "
         "underline mark the best and second-best cell of each column. Numbers in "
         "parentheses are percent differences from the matching ZS cell.\n\n";

  std::set<Setup> setups;
  for (const auto& r : results) {
    if (!r.baseline) setups.insert(r.setup);
  }
  for (const auto& key : grid_keys(results)) {
    out << grid_to_markdown(render_grid(results, key.setup, results, {}, key.k, key.variant))
        << '\n';
  }
  if (setups.contains(Setup::MULTI_ZS)) {
    out << "### MULTI_ZS\n\n| sources | target | F1 | vs ZS mean |\n|---|---|---|---|\n";
    for (const auto& r : results) {
      if (r.setup != Setup::MULTI_ZS) continue;
      std::vector<double> zs;
      for (const auto& z : results) {
        if (z.setup == Setup::ZS && !z.baseline && z.target_language == r.target_language) {
          zs.push_back(100.0 * z.mean_f1);
        }
      }
      std::string versus = "(n/a)";
      if (!zs.empty()) {
        double mean = 0.0;
        for (const auto v : zs) mean += v;
        mean /= static_cast<double>(zs.size());
        versus = format_percent_diff(percent_diff(display(100.0 * r.mean_f1), display(mean)));
      }
      out << "| " << r.source << " | " << r.target_language << " | "
          << format_f1(100.0 * r.mean_f1) << " | " << versus << " |\n";
    }
    out << '\n';
  }
  if (!results.empty()) out << grid_to_markdown(render_comparison_table(results));
  return out.str();
}

}  // namespace xlcw

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace r2n2::plot {

/// scatter-ratio:      columns sample_id, ratio (+ optional text column `set`)
/// convergence-lines:  column k, then one numeric column per polyline
/// error-vs-h:         column h, then one numeric column per series
enum class Kind { scatter_ratio, convergence_lines, error_vs_h };

Kind kind_from_string(const std::string& name);
std::string to_string(Kind kind);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

/// Minimal CSV reader (no quoting). Throws ConfigError on ragged rows.
Table read_csv(const std::filesystem::path& path);

struct PlotOptions {
  std::string title;
  /// error-vs-h only: dashed reference line of this slope through the first
  /// series' smallest-h point.
  std::optional<double> guide_slope;
};

/// Renders the table as a deterministic SVG document. Throws ConfigError if
/// the schema does not match the kind or there is no data.
std::string render_svg(const Table& table, Kind kind, const PlotOptions& options = {});

/// Reads csv_path and writes the SVG to svg_path.
void emit_plot(const std::filesystem::path& csv_path, Kind kind,
               const std::filesystem::path& svg_path, const PlotOptions& options = {});

}  // namespace r2n2::plot

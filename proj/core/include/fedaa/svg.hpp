#pragma once

// Minimal static line plots: axes, one polyline per series, legend.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fedaa {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotLabels {
  std::string title;
  std::string x_label = "round";
  std::string y_label;
};

std::string render_svg(std::span<const Series> series, const PlotLabels& labels);

/// Header plus string cells; rows must match the header width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or -1.
  int column(const std::string& name) const;
  /// Column parsed as doubles. Throws ParseError on non-numeric cells.
  std::vector<double> numeric(const std::string& name) const;
};

CsvTable parse_csv_table(const std::string& text);

/// Curves for a round-record CSV: reward and the accuracy columns against
/// round. Columns missing from the file are skipped.
std::vector<Series> round_curves(const CsvTable& table);

/// Reads a round-record CSV and writes its curves as SVG.
void render_report(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);

}  // namespace fedaa

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tokflow {

// Every emitted artifact starts with a provenance comment carrying the exact
// command line, seed, and config hash that produced it.
struct Provenance {
  std::string command;
  uint64_t seed = 0;
  uint64_t config_hash = 0;

  std::string header_line() const;
};

uint64_t hash_config_text(const std::string& text);

// Atomic write: temp file in the target directory, then rename.
void write_file_atomic(const std::string& path, const std::string& payload);

std::string csv_table(const Provenance& prov, const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows);

std::string format_double(double x);

// Self-contained SVG heatmap: one rect per cell plus an embedded legend ramp.
std::string svg_heatmap(const Provenance& prov, size_t grid_h, size_t grid_w,
                        const std::vector<double>& values, const std::string& title);

// Self-contained SVG line chart with axes and legend.
std::string svg_line_chart(const Provenance& prov, const std::vector<double>& x,
                           const std::vector<std::vector<double>>& series,
                           const std::vector<std::string>& series_names,
                           const std::string& title);

}  // namespace tokflow

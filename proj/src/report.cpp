#include "tokflow/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tokflow/errors.hpp"

namespace tokflow {

std::string Provenance::header_line() const {
  std::ostringstream os;
  os << "# command=" << command << " seed=" << seed << " config_hash=" << std::hex
     << config_hash;
  return os.str();
}

uint64_t hash_config_text(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_file_atomic(const std::string& path, const std::string& payload) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp.string());
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::string csv_table(const Provenance& prov, const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  os << prov.header_line() << "\n";
  for (size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

namespace {

// Dark blue -> yellow ramp.
std::string ramp_color(double u) {
  u = std::clamp(u, 0.0, 1.0);
  int r = static_cast<int>(20 + 235 * u);
  int g = static_cast<int>(25 + 200 * u);
  int b = static_cast<int>(90 + 60 * (1.0 - u));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string svg_heatmap(const Provenance& prov, size_t grid_h, size_t grid_w,
                        const std::vector<double>& values, const std::string& title) {
  if (values.size() != grid_h * grid_w)
    throw DimError("svg_heatmap: value count does not match grid");
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  double span = hi > lo ? hi - lo : 1.0;
  const int cell = 24, margin = 40, legend_w = 60;
  int width = margin * 2 + static_cast<int>(grid_w) * cell + legend_w;
  int height = margin * 2 + static_cast<int>(grid_h) * cell;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<!-- " << prov.header_line().substr(2) << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\">\n";
  os << "<text x=\"" << margin << "\" y=\"" << margin - 12
     << "\" font-size=\"13\" font-family=\"sans-serif\">" << title << "</text>\n";
  for (size_t y = 0; y < grid_h; ++y)
    for (size_t x = 0; x < grid_w; ++x) {
      double u = (values[y * grid_w + x] - lo) / span;
      os << "<rect x=\"" << margin + static_cast<int>(x) * cell << "\" y=\""
         << margin + static_cast<int>(y) * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"" << ramp_color(u) << "\"/>\n";
    }
  // Legend ramp.
  int lx = margin + static_cast<int>(grid_w) * cell + 16;
  int lh = static_cast<int>(grid_h) * cell;
  for (int i = 0; i < lh; ++i) {
    double u = 1.0 - static_cast<double>(i) / lh;
    os << "<rect x=\"" << lx << "\" y=\"" << margin + i
       << "\" width=\"14\" height=\"1\" fill=\"" << ramp_color(u) << "\"/>\n";
  }
  os << "<text x=\"" << lx + 18 << "\" y=\"" << margin + 8
     << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(hi)
     << "</text>\n";
  os << "<text x=\"" << lx + 18 << "\" y=\"" << margin + lh
     << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(lo)
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_line_chart(const Provenance& prov, const std::vector<double>& x,
                           const std::vector<std::vector<double>>& series,
                           const std::vector<std::string>& series_names,
                           const std::string& title) {
  if (series.empty() || x.empty()) throw DimError("svg_line_chart: empty data");
  for (const auto& s : series)
    if (s.size() != x.size()) throw DimError("svg_line_chart: series length mismatch");
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  double xlo = x.front(), xhi = x.back();
  double ylo = series[0][0], yhi = series[0][0];
  for (const auto& s : series)
    for (double v : s) {
      ylo = std::min(ylo, v);
      yhi = std::max(yhi, v);
    }
  if (yhi <= ylo) yhi = ylo + 1.0;
  if (xhi <= xlo) xhi = xlo + 1.0;
  const int w = 480, h = 320, m = 50;
  auto px = [&](double v) { return m + (v - xlo) / (xhi - xlo) * (w - 2 * m); };
  auto py = [&](double v) { return h - m - (v - ylo) / (yhi - ylo) * (h - 2 * m); };
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<!-- " << prov.header_line().substr(2) << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\">\n";
  os << "<text x=\"" << m << "\" y=\"20\" font-size=\"13\" font-family=\"sans-serif\">"
     << title << "</text>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\""
     << h - m << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << m << "\" y=\"" << h - m + 16
     << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(xlo)
     << "</text>\n";
  os << "<text x=\"" << w - m - 20 << "\" y=\"" << h - m + 16
     << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(xhi)
     << "</text>\n";
  os << "<text x=\"4\" y=\"" << h - m << "\" font-size=\"10\" font-family=\"sans-serif\">"
     << format_double(ylo) << "</text>\n";
  os << "<text x=\"4\" y=\"" << m << "\" font-size=\"10\" font-family=\"sans-serif\">"
     << format_double(yhi) << "</text>\n";
  for (size_t si = 0; si < series.size(); ++si) {
    os << "<polyline fill=\"none\" stroke=\"" << palette[si % 5] << "\" points=\"";
    for (size_t i = 0; i < x.size(); ++i)
      os << px(x[i]) << "," << py(series[si][i]) << " ";
    os << "\"/>\n";
    std::string name = si < series_names.size() ? series_names[si] : "series";
    os << "<text x=\"" << w - m - 120 << "\" y=\"" << m + 14 * (si + 1)
       << "\" font-size=\"10\" font-family=\"sans-serif\" fill=\"" << palette[si % 5]
       << "\">" << name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace tokflow

#include "r2n2/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "r2n2/errors.hpp"

namespace r2n2::plot {

Kind kind_from_string(const std::string& name) {
  if (name == "scatter-ratio") return Kind::scatter_ratio;
  if (name == "convergence-lines") return Kind::convergence_lines;
  if (name == "error-vs-h") return Kind::error_vs_h;
  throw ConfigError("unknown plot kind '" + name + "'");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::scatter_ratio: return "scatter-ratio";
    case Kind::convergence_lines: return "convergence-lines";
    case Kind::error_vs_h: return "error-vs-h";
  }
  return "";
}

std::optional<std::size_t> Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, bool log_axis) {
  char buf[32];
  if (log_axis) {
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(v)));
  } else {
    std::snprintf(buf, sizeof buf, "%g", v);
  }
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // already in axis space
};

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  void fit(const std::vector<Series>& all, bool x, std::optional<double> include = {}) {
    double mn = INFINITY, mx = -INFINITY;
    for (const auto& s : all)
      for (const auto& p : s.points) {
        const double v = x ? p.first : p.second;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
    if (include) {
      mn = std::min(mn, *include);
      mx = std::max(mx, *include);
    }
    if (log) {
      mn = std::floor(mn);
      mx = std::ceil(mx);
    }
    if (mx <= mn) {
      mn -= 0.5;
      mx += 0.5;
    }
    lo = mn;
    hi = mx;
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 8.0)));
      for (double v = lo; v <= hi + 1e-9; v += step) t.push_back(v);
    } else {
      for (int i = 0; i <= 4; ++i) t.push_back(lo + (hi - lo) * i / 4.0);
    }
    return t;
  }
};

class Canvas {
 public:
  Canvas(Axis x, Axis y, const std::string& title, const std::string& xlabel,
         const std::string& ylabel)
      : x_(x), y_(y) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    out_ << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
         << "\" fill=\"white\"/>\n";
    out_ << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
            "font-family=\"sans-serif\" font-size=\"15\">"
         << title << "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    out_ << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0)
         << "\" height=\"" << fmt(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : x_.ticks()) {
      const double px = sx(t);
      out_ << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px)
           << "\" y2=\"" << fmt(y0 + 5) << "\" stroke=\"black\"/>\n";
      out_ << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 18)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << tick_label(t, x_.log) << "</text>\n";
    }
    for (double t : y_.ticks()) {
      const double py = sy(t);
      out_ << "<line x1=\"" << fmt(x0 - 5) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x0)
           << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n";
      out_ << "<text x=\"" << fmt(x0 - 8) << "\" y=\"" << fmt(py + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << tick_label(t, y_.log) << "</text>\n";
    }
    out_ << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 12)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel
         << "</text>\n";
    out_ << "<text x=\"16\" y=\"" << fmt((y0 + y1) / 2) << "\" text-anchor=\"middle\" "
         << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
         << fmt((y0 + y1) / 2) << ")\">" << ylabel << "</text>\n";
  }

  double sx(double v) const { return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double sy(double v) const {
    return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kBottom - kTop);
  }

  void polyline(const Series& s, const char* color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) out_ << ' ';
      out_ << fmt(sx(s.points[i].first)) << ',' << fmt(sy(s.points[i].second));
    }
    out_ << "\"/>\n";
  }

  void dots(const Series& s, const char* color) {
    for (const auto& p : s.points) {
      out_ << "<circle cx=\"" << fmt(sx(p.first)) << "\" cy=\"" << fmt(sy(p.second))
           << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
  }

  void line(double xa, double ya, double xb, double yb, const char* color, bool dashed) {
    out_ << "<line x1=\"" << fmt(sx(xa)) << "\" y1=\"" << fmt(sy(ya)) << "\" x2=\"" << fmt(sx(xb))
         << "\" y2=\"" << fmt(sy(yb)) << "\" stroke=\"" << color << '"'
         << (dashed ? " stroke-dasharray=\"5,4\"" : "") << "/>\n";
  }

  void legend(std::size_t slot, const std::string& name, const char* color) {
    const double lx = kWidth - kRight + 12, ly = kTop + 14 + 18 * static_cast<double>(slot);
    out_ << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
         << color << "\"/>\n";
    out_ << "<text x=\"" << fmt(lx + 15) << "\" y=\"" << fmt(ly + 1)
         << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  Axis x_, y_;
  std::ostringstream out_;
};

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

// One series per numeric column after `xcol`.
std::vector<Series> wide_series(const Table& t, std::size_t xcol, bool log_x, bool log_y) {
  std::vector<Series> out;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == xcol) continue;
    Series s{xml_escape(t.header[c]), {}};
    bool numeric = false;
    for (const auto& row : t.rows) {
      const auto xv = number(row[xcol]);
      const auto yv = number(row[c]);
      if (yv) numeric = true;
      if (!xv || !yv) continue;
      if ((log_x && *xv <= 0.0) || (log_y && *yv <= 0.0)) continue;
      s.points.emplace_back(log_x ? std::log10(*xv) : *xv, log_y ? std::log10(*yv) : *yv);
    }
    if (numeric && !s.points.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ConfigError(path.string() + ": empty CSV");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw ConfigError(path.string() + ": row with " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string render_svg(const Table& table, Kind kind, const PlotOptions& options) {
  if (table.rows.empty()) throw ConfigError("plot: CSV has no data rows");
  const std::string title = xml_escape(options.title.empty() ? to_string(kind) : options.title);

  if (kind == Kind::scatter_ratio) {
    const auto id = table.column("sample_id");
    const auto ratio = table.column("ratio");
    if (!id || !ratio) throw ConfigError("scatter-ratio needs columns sample_id and ratio");
    const auto set = table.column("set");
    std::map<std::string, Series> groups;
    std::vector<std::string> order;
    for (const auto& row : table.rows) {
      const auto xv = number(row[*id]);
      const auto yv = number(row[*ratio]);
      if (!xv || !yv) continue;
      const std::string g = set ? row[*set] : "samples";
      if (!groups.count(g)) {
        order.push_back(g);
        groups[g].name = xml_escape(g);
      }
      groups[g].points.emplace_back(*xv, *yv);
    }
    std::vector<Series> all;
    for (const auto& g : order) all.push_back(groups[g]);
    if (all.empty()) throw ConfigError("scatter-ratio: no numeric rows");
    Axis ax, ay;
    ax.fit(all, true);
    ay.fit(all, false, 1.0);
    Canvas cv(ax, ay, title, "sample", "relative performance");
    cv.line(ax.lo, 1.0, ax.hi, 1.0, "#1f77b4", false);
    for (std::size_t i = 0; i < all.size(); ++i) {
      cv.dots(all[i], kPalette[(i + 1) % 8]);
      cv.legend(i, all[i].name, kPalette[(i + 1) % 8]);
    }
    return cv.finish();
  }

  const bool loglog = kind == Kind::error_vs_h;
  const std::string xname = loglog ? "h" : "k";
  const auto xcol = table.column(xname);
  if (!xcol) throw ConfigError(to_string(kind) + " needs a column named " + xname);
  if (table.header.size() < 2) throw ConfigError(to_string(kind) + " needs at least one series");
  const std::vector<Series> all = wide_series(table, *xcol, loglog, true);
  if (all.empty()) throw ConfigError(to_string(kind) + ": no positive numeric data");

  Axis ax, ay;
  ax.log = loglog;
  ay.log = true;
  ax.fit(all, true);
  ay.fit(all, false);
  Canvas cv(ax, ay, title, loglog ? "h" : "iteration k", loglog ? "error" : "residual norm");
  for (std::size_t i = 0; i < all.size(); ++i) {
    cv.polyline(all[i], kPalette[i % 8]);
    cv.legend(i, all[i].name, kPalette[i % 8]);
  }
  if (loglog && options.guide_slope) {
    const auto& pts = all.front().points;
    const auto anchor = *std::min_element(pts.begin(), pts.end());
    const double xa = ax.lo, xb = ax.hi;
    const double s = *options.guide_slope;
    cv.line(xa, anchor.second + s * (xa - anchor.first), xb, anchor.second + s * (xb - anchor.first),
            "#555555", true);
    cv.legend(all.size(), "slope " + tick_label(s, false), "#555555");
  }
  return cv.finish();
}

void emit_plot(const std::filesystem::path& csv_path, Kind kind,
               const std::filesystem::path& svg_path, const PlotOptions& options) {
  const std::string svg = render_svg(read_csv(csv_path), kind, options);
  std::ofstream out(svg_path);
  if (!out) throw ConfigError("cannot write " + svg_path.string());
  out << svg;
}

}  // namespace r2n2::plot

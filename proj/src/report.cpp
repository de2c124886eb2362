#include "oeflow/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "oeflow/data.hpp"
#include "oeflow/errors.hpp"

namespace oeflow {

void write_score_table(std::ostream& out, const std::vector<std::string>& labels, const Vector& scores) {
  if (static_cast<std::size_t>(scores.size()) != labels.size()) throw ShapeError("one score per label required");
  out << "id\tlabel\ttype\tscore\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool anomaly = labels[i] != kNormalLabel;
    out << i << '\t' << (anomaly ? "anomaly" : "normal") << '\t' << (anomaly ? labels[i] : "") << '\t'
        << format_double(scores[static_cast<Eigen::Index>(i)]) << '\n';
  }
}

ScoredSet read_score_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("score table is empty");
  if (line != "id\tlabel\ttype\tscore") throw ParseError("expected header 'id<TAB>label<TAB>type<TAB>score'", 1);
  ScoredSet set;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream stream(line);
    std::string field;
    while (std::getline(stream, field, '\t')) fields.push_back(field);
    if (!line.empty() && line.back() == '\t') fields.emplace_back();
    if (fields.size() != 4) throw ParseError("score row needs 4 columns", line_number);
    ScoredEntry entry;
    if (fields[1] == "anomaly") {
      entry.anomaly = true;
      entry.type = fields[2];
    } else if (fields[1] != "normal") {
      throw ParseError("label must be 'normal' or 'anomaly'", line_number);
    }
    try {
      entry.score = parse_double(fields[3]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_number);
    }
    set.entries.push_back(std::move(entry));
  }
  return set;
}

EvalReport evaluate(const ScoredSet& set) {
  EvalReport report;
  report.auc = auc(set);
  report.normal_count = set.normal_count();
  report.anomaly_count = set.anomaly_count();
  report.per_type = per_type_auc(set);
  report.roc = roc_curve(set);
  return report;
}

namespace {

void write_box(std::ostream& out, const std::string& name, const BoxStats& b) {
  out << "separation\t" << name << ".min\t" << format_double(b.min) << '\n';
  out << "separation\t" << name << ".q1\t" << format_double(b.q1) << '\n';
  out << "separation\t" << name << ".median\t" << format_double(b.median) << '\n';
  out << "separation\t" << name << ".q3\t" << format_double(b.q3) << '\n';
  out << "separation\t" << name << ".max\t" << format_double(b.max) << '\n';
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "nan"; }

}  // namespace

void write_eval_report(std::ostream& out, const EvalReport& report) {
  out << "section\tkey\tvalue\n";
  out << "global\tauc\t" << format_double(report.auc) << '\n';
  out << "global\tnormal_count\t" << report.normal_count << '\n';
  out << "global\tanomaly_count\t" << report.anomaly_count << '\n';
  for (const auto& [type, value] : report.per_type) out << "per_type\t" << type << '\t' << format_double(value) << '\n';
  if (report.separation) {
    write_box(out, "normal_nll", report.separation->normal_nll);
    write_box(out, "anomaly_nll", report.separation->anomaly_nll);
    write_box(out, "normal_norm", report.separation->normal_norm);
    write_box(out, "anomaly_norm", report.separation->anomaly_norm);
  }
}

void write_roc_table(std::ostream& out, const std::vector<RocPoint>& curve) {
  out << "fpr\ttpr\n";
  for (const auto& p : curve) out << format_double(p.false_positive_rate) << '\t' << format_double(p.true_positive_rate) << '\n';
}

void write_sweep_table(std::ostream& out, const SweepReport& report) {
  const bool types = report.axis == SweepAxis::ExposedTypeCount;
  out << "axis\tvalue\tdetector\truns\tfailures\tmean_auc\tci95";
  if (types) out << "\tmean_auc_exposed\tci95_exposed\tmean_auc_unexposed\tci95_unexposed";
  out << '\n';
  for (const auto& p : report.points) {
    out << to_string(report.axis) << '\t' << p.value << '\t' << to_string(p.detector) << '\t' << p.all.count << '\t'
        << p.failures << '\t' << (p.all.count ? format_double(p.all.mean) : "nan") << '\t' << optional_text(p.all.half_width);
    if (types) {
      out << '\t' << (p.exposed.count ? format_double(p.exposed.mean) : "nan") << '\t' << optional_text(p.exposed.half_width)
          << '\t' << (p.unexposed.count ? format_double(p.unexposed.mean) : "nan") << '\t'
          << optional_text(p.unexposed.half_width);
    }
    out << '\n';
  }
}

void write_sweep_runs(std::ostream& out, const SweepReport& report) {
  out << "axis\tvalue\tdetector\trepetition\tseed\tok\texposed_count\tauc\tauc_exposed\tauc_unexposed\texposed_types\terror\n";
  for (const auto& r : report.runs) {
    std::string types;
    for (const auto& t : r.exposed_types) types += (types.empty() ? "" : ";") + t;
    out << to_string(report.axis) << '\t' << r.value << '\t' << to_string(r.detector) << '\t' << r.repetition << '\t'
        << r.seed << '\t' << (r.ok ? 1 : 0) << '\t' << r.exposed_count << '\t' << (r.ok ? format_double(r.auc_all) : "nan")
        << '\t' << optional_text(r.auc_exposed) << '\t' << optional_text(r.auc_unexposed) << '\t' << types << '\t'
        << r.error << '\n';
  }
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

struct Series {
  std::string name;
  std::vector<std::optional<MeanCi>> points;  // one per grid position
};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void plot_series(std::ostream& out, const std::vector<std::string>& grid, const std::vector<Series>& series,
                 const std::string& title, const std::string& x_label) {
  double lo = 1.0, hi = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      if (!p || !p->count) continue;
      const double h = p->half_width.value_or(0.0);
      lo = std::min(lo, p->mean - h);
      hi = std::max(hi, p->mean + h);
    }
  }
  if (lo > hi) lo = 0.0, hi = 1.0;
  lo = std::max(0.0, std::floor(lo * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil(hi * 20.0) / 20.0);
  if (hi - lo < 0.05) hi = std::min(1.0, lo + 0.05), lo = hi - 0.05;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto x_of = [&](std::size_t i) {
    return kLeft + (grid.size() == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) / static_cast<double>(grid.size() - 1));
  };
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << std::setprecision(3) << v << std::setprecision(2) << "</text>\n";
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << "<text x=\"" << x_of(i) << "\" y=\"" << kTop + plot_h + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << escape(grid[i]) << "</text>\n";
  }
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">AUC</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string upper, lower, line;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& p = series[s].points[i];
      if (!p || !p->count) continue;
      const double h = p->half_width.value_or(0.0);
      upper += std::to_string(x_of(i)) + "," + std::to_string(y_of(p->mean + h)) + " ";
      lower = std::to_string(x_of(i)) + "," + std::to_string(y_of(p->mean - h)) + " " + lower;
      line += std::to_string(x_of(i)) + "," + std::to_string(y_of(p->mean)) + " ";
    }
    if (line.empty()) continue;
    out << "<polygon points=\"" << upper << lower << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    out << "<line x1=\"" << kLeft + plot_w + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + plot_w + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + plot_w + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << escape(series[s].name)
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void write_sweep_svg(std::ostream& out, const SweepReport& report, const std::string& title) {
  std::vector<std::string> grid;
  for (const auto& p : report.points) {
    if (std::find(grid.begin(), grid.end(), p.value) == grid.end()) grid.push_back(p.value);
  }
  auto grid_index = [&](const std::string& v) {
    return static_cast<std::size_t>(std::find(grid.begin(), grid.end(), v) - grid.begin());
  };
  std::vector<Series> series;
  auto series_for = [&](const std::string& name) -> Series& {
    for (auto& s : series) {
      if (s.name == name) return s;
    }
    series.push_back({name, std::vector<std::optional<MeanCi>>(grid.size())});
    return series.back();
  };
  for (const auto& p : report.points) {
    const std::string name = report.axis == SweepAxis::Detector ? "mean AUC" : to_string(p.detector);
    series_for(name).points[grid_index(p.value)] = p.all;
    if (report.axis == SweepAxis::ExposedTypeCount) {
      series_for(name + " exposed").points[grid_index(p.value)] = p.exposed;
      series_for(name + " unexposed").points[grid_index(p.value)] = p.unexposed;
    }
  }
  plot_series(out, grid, series, title, to_string(report.axis));
}

void write_roc_svg(std::ostream& out, const std::vector<RocPoint>& curve, const std::string& title) {
  const double size = 360, margin = 50;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\"" << size + 2 * margin
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << margin + size / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin + size << "\" x2=\"" << margin + size << "\" y2=\"" << margin
      << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& p : curve) {
    out << margin + size * p.false_positive_rate << ',' << margin + size * (1.0 - p.true_positive_rate) << ' ';
  }
  out << "\"/>\n<text x=\"" << margin + size / 2 << "\" y=\"" << 2 * margin + size - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">false positive rate</text>\n";
  out << "<text x=\"16\" y=\"" << margin + size / 2 << "\" transform=\"rotate(-90 16 " << margin + size / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">true positive rate</text>\n</svg>\n";
}

}  // namespace oeflow

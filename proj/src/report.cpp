#include "rulgp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "rulgp/errors.hpp"
#include "rulgp/keyvalue.hpp"

namespace rulgp {

namespace {

std::string fmt(double v) { return format_exact(v); }

struct Cells {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Cells read_csv(std::istream& in) {
  Cells out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, ',');
    if (out.header.empty()) {
      out.header = std::move(fields);
    } else {
      if (fields.size() != out.header.size()) {
        throw data_error("SchemaError", "row has " + std::to_string(fields.size()) + " fields, header has " +
                                            std::to_string(out.header.size()));
      }
      out.rows.push_back(std::move(fields));
    }
  }
  if (out.header.empty()) throw data_error("EmptyFile", "no header row");
  return out;
}

std::size_t column(const Cells& c, const std::string& name) {
  const auto it = std::find(c.header.begin(), c.header.end(), name);
  if (it == c.header.end()) throw data_error("SchemaError", "missing column '" + name + "'");
  return static_cast<std::size_t>(it - c.header.begin());
}

std::string label_text(LifetimeLabel l) { return std::string(to_string(l)); }

// Minimal SVG scatter/line canvas with linear axes.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void point(double x, double y, const std::string& color) { points_.push_back({x, y, color}); }
  void line(std::vector<std::pair<double, double>> pts, const std::string& color, const std::string& label) {
    lines_.push_back({std::move(pts), color, label});
  }
  void diagonal() { diagonal_ = true; }

  void write(std::ostream& out) const {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto grow = [&](double x, double y) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    };
    for (const auto& p : points_) grow(p.x, p.y);
    for (const auto& l : lines_) {
      for (const auto& [x, y] : l.pts) grow(x, y);
    }
    if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (diagonal_) {
      x0 = y0 = std::min(x0, y0);
      x1 = y1 = std::max(x1, y1);
    }
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) y1 = y0 + 1.0;
    const double w = 640, h = 480, ml = 70, mr = 20, mt = 40, mb = 60;
    auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
    auto sy = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" font-family=\"sans-serif\" "
           "font-size=\"12\">\n<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">%s</text>\n",
                  title_.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", ml, mt,
                  w - ml - mr, h - mt - mb);
    out << buf;
    for (int k = 0; k <= 4; ++k) {
      const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.3g</text>\n", sx(xv),
                    h - mb + 16, xv);
      out << buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", ml - 6,
                    sy(yv) + 4, yv);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"320\" y=\"%g\" text-anchor=\"middle\">%s</text>\n", h - 16,
                  xlabel_.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"16\" y=\"240\" text-anchor=\"middle\" transform=\"rotate(-90 16 240)\">%s</text>\n",
                  ylabel_.c_str());
    out << buf;
    if (diagonal_) {
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
                    sx(x0), sy(y0), sx(x1), sy(y1));
      out << buf;
    }
    for (const auto& p : points_) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" fill-opacity=\"0.6\"/>\n",
                    sx(p.x), sy(p.y), p.color.c_str());
      out << buf;
    }
    int legend = 0;
    for (const auto& l : lines_) {
      out << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : l.pts) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(x), sy(y));
        out << buf;
      }
      out << "\"/>\n";
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", ml + 10, mt + 16 + 16.0 * legend,
                    l.color.c_str(), l.label.c_str());
      out << buf;
      ++legend;
    }
    out << "</svg>\n";
  }

 private:
  struct Point {
    double x, y;
    std::string color;
  };
  struct Line {
    std::vector<std::pair<double, double>> pts;
    std::string color, label;
  };
  std::string title_, xlabel_, ylabel_;
  std::vector<Point> points_;
  std::vector<Line> lines_;
  bool diagonal_ = false;
};

const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[k % 6];
}

}  // namespace

std::string fingerprint_of(const std::map<std::string, std::string>& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : config) {
    for (unsigned char c : k + "=" + v + "\n") {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string header_line(const std::string& fingerprint) {
  return std::string("# rulgp ") + kToolVersion + " fingerprint=" + fingerprint;
}

void write_preamble(std::ostream& out, const ExperimentReport& report) {
  out << header_line(report.fingerprint()) << '\n';
  out << "# kind = " << report.kind << '\n';
  for (const auto& [k, v] : report.config) out << "# " << k << " = " << v << '\n';
}

void write_rul_predictions_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,condition,cell_id,truncation,reference_cycle,cycle,soh,eol,rul,predicted,predicted_sd\n";
  for (const auto& r : report.predictions) {
    out << r.feature_set << ',' << r.chemistry << ',' << r.condition << ',' << r.cell_id << ',' << r.truncation << ','
        << r.reference_cycle << ',' << r.cycle << ',' << fmt(r.soh) << ',' << fmt(r.eol) << ',' << fmt(r.rul) << ','
        << fmt(r.predicted) << ',' << fmt(r.predicted_sd) << '\n';
  }
}

void write_rul_metrics_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,condition,truncation,reference_cycle,samples,rmse_cycles,mape_percent\n";
  for (const auto& m : report.metrics) {
    out << m.feature_set << ',' << m.chemistry << ',' << m.condition << ',' << m.truncation << ','
        << m.reference_cycle << ',' << m.samples << ',' << fmt(m.rmse) << ',' << fmt(m.mape) << '\n';
  }
}

void write_table_ii_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  std::vector<std::string> sets;
  for (const auto s : kTableIISets) sets.emplace_back(to_string(s));
  for (const auto& m : report.metrics) {
    if (std::find(sets.begin(), sets.end(), m.feature_set) == sets.end()) sets.push_back(m.feature_set);
  }
  std::map<std::pair<std::string, std::string>, std::map<std::string, const RulMetricRow*>> grid;
  for (const auto& m : report.metrics) grid[{m.chemistry, m.condition}][m.feature_set] = &m;
  out << "chemistry,condition";
  for (const auto& s : sets) out << ",rmse_" << s;
  for (const auto& s : sets) out << ",mape_" << s;
  out << '\n';
  for (const auto& [key, by_set] : grid) {
    out << key.first << ',' << key.second;
    for (const auto& s : sets) {
      const auto it = by_set.find(s);
      out << ',' << (it == by_set.end() ? "" : fmt(it->second->rmse));
    }
    for (const auto& s : sets) {
      const auto it = by_set.find(s);
      out << ',' << (it == by_set.end() ? "" : fmt(it->second->mape));
    }
    out << '\n';
  }
}

void write_importance_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,truncation,reference_cycle,feature,length_scale,weight_length,weight_inverse_length\n";
  for (const auto& r : report.importance) {
    out << r.feature_set << ',' << r.chemistry << ',' << r.truncation << ',' << r.reference_cycle << ',' << r.feature
        << ',' << fmt(r.length_scale) << ',' << fmt(r.weight) << ',' << fmt(r.inverse_weight) << '\n';
  }
}

void write_truncation_csv(std::ostream& out, const ExperimentReport& report,
                          const std::map<std::string, double>& interval_s_by_chemistry) {
  write_preamble(out, report);
  out << "feature_set,chemistry,condition,samples_kept,relaxation_time_min,rmse_cycles,mape_percent\n";
  for (const auto& m : report.metrics) {
    std::string minutes;
    const auto it = interval_s_by_chemistry.find(m.chemistry);
    if (m.truncation > 0 && it != interval_s_by_chemistry.end()) {
      minutes = fmt(static_cast<double>(m.truncation) * it->second / 60.0);
    }
    out << m.feature_set << ',' << m.chemistry << ',' << m.condition << ','
        << (m.truncation ? std::to_string(m.truncation) : "full") << ',' << minutes << ',' << fmt(m.rmse) << ','
        << fmt(m.mape) << '\n';
  }
}

void write_class_predictions_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,condition,cell_id,cycle,soh,rul,truth,predicted,probability,stage1_long\n";
  for (const auto& r : report.class_predictions) {
    out << r.feature_set << ',' << r.chemistry << ',' << r.condition << ',' << r.cell_id << ',' << r.cycle << ','
        << fmt(r.soh) << ',' << fmt(r.rul) << ',' << label_text(r.truth) << ',' << label_text(r.predicted) << ','
        << fmt(r.probability) << ',' << fmt(r.stage1_long) << '\n';
  }
}

void write_accuracy_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,condition,samples,correct,accuracy\n";
  for (const auto& a : report.accuracy) {
    out << a.feature_set << ',' << a.chemistry << ',' << a.condition << ',' << a.samples << ',' << a.correct << ','
        << fmt(a.accuracy) << '\n';
  }
}

void write_table_iii_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  std::vector<std::string> sets;
  for (const auto s : kTableIIISets) sets.emplace_back(to_string(s));
  for (const auto& a : report.accuracy) {
    if (std::find(sets.begin(), sets.end(), a.feature_set) == sets.end()) sets.push_back(a.feature_set);
  }
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> grid;
  for (const auto& a : report.accuracy) grid[{a.chemistry, a.condition}][a.feature_set] = a.accuracy;
  out << "chemistry,condition";
  for (const auto& s : sets) out << ",accuracy_" << s;
  out << '\n';
  for (const auto& [key, by_set] : grid) {
    out << key.first << ',' << key.second;
    for (const auto& s : sets) {
      const auto it = by_set.find(s);
      out << ',' << (it == by_set.end() ? "" : fmt(it->second));
    }
    out << '\n';
  }
}

void write_confusion_csv(std::ostream& out, const ExperimentReport& report) {
  write_preamble(out, report);
  out << "feature_set,chemistry,truth,predicted_Short,predicted_Medium,predicted_Long\n";
  for (const auto& c : report.confusion) {
    out << c.feature_set << ',' << c.chemistry << ',' << label_text(c.truth) << ',' << c.predicted[0] << ','
        << c.predicted[1] << ',' << c.predicted[2] << '\n';
  }
}

void write_summary(std::ostream& out, const ExperimentReport& report) {
  out << header_line(report.fingerprint()) << '\n';
  out << "version = " << kToolVersion << '\n';
  out << "fingerprint = " << report.fingerprint() << '\n';
  out << "kind = " << report.kind << '\n';
  for (const auto& [k, v] : report.config) out << "config." << k << " = " << v << '\n';
  for (const auto& m : report.metrics) {
    const std::string key = "rul." + m.feature_set + "." + m.chemistry + "." + m.condition + ".trunc" +
                            std::to_string(m.truncation) + ".ref" + std::to_string(m.reference_cycle);
    out << key << ".samples = " << m.samples << '\n';
    out << key << ".rmse = " << fmt(m.rmse) << '\n';
    out << key << ".mape = " << fmt(m.mape) << '\n';
  }
  for (const auto& a : report.accuracy) {
    const std::string key = "class." + a.feature_set + "." + a.chemistry + "." + a.condition;
    out << key << ".samples = " << a.samples << '\n';
    out << key << ".accuracy = " << fmt(a.accuracy) << '\n';
  }
}

std::vector<RulPredictionRow> read_rul_predictions_csv(std::istream& in) {
  const Cells c = read_csv(in);
  const auto fs = column(c, "feature_set"), ch = column(c, "chemistry"), co = column(c, "condition"),
             id = column(c, "cell_id"), tr = column(c, "truncation"), rc = column(c, "reference_cycle"),
             cy = column(c, "cycle"), so = column(c, "soh"), eo = column(c, "eol"), ru = column(c, "rul"),
             pr = column(c, "predicted"), sd = column(c, "predicted_sd");
  std::vector<RulPredictionRow> out;
  for (const auto& r : c.rows) {
    RulPredictionRow p;
    p.feature_set = r[fs];
    p.chemistry = r[ch];
    p.condition = r[co];
    p.cell_id = r[id];
    p.truncation = static_cast<std::size_t>(parse_integer(r[tr], "truncation"));
    p.reference_cycle = static_cast<int>(parse_integer(r[rc], "reference_cycle"));
    p.cycle = static_cast<int>(parse_integer(r[cy], "cycle"));
    p.soh = parse_double(r[so], "soh");
    p.eol = parse_double(r[eo], "eol");
    p.rul = parse_double(r[ru], "rul");
    p.predicted = parse_double(r[pr], "predicted");
    p.predicted_sd = parse_double(r[sd], "predicted_sd");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ClassPredictionRow> read_class_predictions_csv(std::istream& in) {
  const Cells c = read_csv(in);
  const auto fs = column(c, "feature_set"), ch = column(c, "chemistry"), co = column(c, "condition"),
             id = column(c, "cell_id"), cy = column(c, "cycle"), so = column(c, "soh"), ru = column(c, "rul"),
             tr = column(c, "truth"), pr = column(c, "predicted"), pb = column(c, "probability"),
             s1 = column(c, "stage1_long");
  std::vector<ClassPredictionRow> out;
  for (const auto& r : c.rows) {
    ClassPredictionRow p;
    p.feature_set = r[fs];
    p.chemistry = r[ch];
    p.condition = r[co];
    p.cell_id = r[id];
    p.cycle = static_cast<int>(parse_integer(r[cy], "cycle"));
    p.soh = parse_double(r[so], "soh");
    p.rul = parse_double(r[ru], "rul");
    p.truth = parse_lifetime_label(r[tr]);
    p.predicted = parse_lifetime_label(r[pr]);
    p.probability = parse_double(r[pb], "probability");
    p.stage1_long = parse_double(r[s1], "stage1_long");
    out.push_back(std::move(p));
  }
  return out;
}

void write_rul_scatter_svg(std::ostream& out, const ExperimentReport& report) {
  SvgPlot plot("Predicted vs observed RUL", "observed RUL (cycles)", "predicted RUL (cycles)");
  std::map<std::string, std::size_t> colors;
  for (const auto& r : report.predictions) {
    const auto it = colors.emplace(r.condition, colors.size()).first;
    plot.point(r.rul, r.predicted, palette(it->second));
  }
  plot.diagonal();
  plot.write(out);
}

void write_truncation_svg(std::ostream& out, const ExperimentReport& report) {
  SvgPlot plot("RMSE against relaxation samples kept", "samples kept", "RMSE (cycles)");
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& m : report.metrics) {
    if (m.condition != "ALL" || m.truncation == 0) continue;
    series[m.feature_set + " " + m.chemistry].push_back({static_cast<double>(m.truncation), m.rmse});
  }
  std::size_t k = 0;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end());
    plot.line(pts, palette(k++), name);
  }
  plot.write(out);
}

void write_probability_svg(std::ostream& out, const ExperimentReport& report) {
  SvgPlot plot("Predicted-label probability against SOH", "SOH", "probability");
  for (const auto& r : report.class_predictions) {
    plot.point(r.soh, r.probability, r.truth == r.predicted ? palette(2) : palette(1));
  }
  plot.write(out);
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const ExperimentReport& report,
                                                const ReportOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, auto&& writer) {
    const auto path = dir / name;
    std::ofstream out(path);
    if (!out) throw data_error("FileNotFound", "cannot write " + path.string());
    writer(out);
    written.push_back(path);
  };
  if (!report.predictions.empty() || !report.metrics.empty()) {
    emit("predictions.csv", [&](std::ostream& o) { write_rul_predictions_csv(o, report); });
    emit("metrics.csv", [&](std::ostream& o) { write_rul_metrics_csv(o, report); });
    emit("table_ii.csv", [&](std::ostream& o) { write_table_ii_csv(o, report); });
    if (!report.importance.empty()) emit("importance.csv", [&](std::ostream& o) { write_importance_csv(o, report); });
    if (report.kind == "truncation") {
      emit("truncation.csv",
           [&](std::ostream& o) { write_truncation_csv(o, report, options.interval_s_by_chemistry); });
    }
    if (options.plots) {
      emit("rul_scatter.svg", [&](std::ostream& o) {
        o << "<!-- " << header_line(report.fingerprint()).substr(2) << " -->\n";
        write_rul_scatter_svg(o, report);
      });
      if (report.kind == "truncation") {
        emit("truncation.svg", [&](std::ostream& o) {
          o << "<!-- " << header_line(report.fingerprint()).substr(2) << " -->\n";
          write_truncation_svg(o, report);
        });
      }
    }
  }
  if (!report.class_predictions.empty() || !report.accuracy.empty() || report.kind == "classification") {
    emit("class_predictions.csv", [&](std::ostream& o) { write_class_predictions_csv(o, report); });
    emit("accuracy.csv", [&](std::ostream& o) { write_accuracy_csv(o, report); });
    emit("table_iii.csv", [&](std::ostream& o) { write_table_iii_csv(o, report); });
    emit("confusion.csv", [&](std::ostream& o) { write_confusion_csv(o, report); });
    if (options.plots) {
      emit("probability.svg", [&](std::ostream& o) {
        o << "<!-- " << header_line(report.fingerprint()).substr(2) << " -->\n";
        write_probability_svg(o, report);
      });
    }
  }
  emit("summary.txt", [&](std::ostream& o) { write_summary(o, report); });
  return written;
}

}  // namespace rulgp

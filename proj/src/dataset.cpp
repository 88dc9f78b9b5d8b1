#include "rulgp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "rulgp/errors.hpp"

namespace rulgp {

namespace {

constexpr double kMinVoltage = 2.0;
constexpr double kMaxVoltage = 4.5;

enum class Phase { Charge, RestPostCharge, Discharge, RestPostDischarge };

Phase parse_phase(std::string_view text, int line) {
  if (text == "charge") return Phase::Charge;
  if (text == "rest_post_charge") return Phase::RestPostCharge;
  if (text == "discharge") return Phase::Discharge;
  if (text == "rest_post_discharge") return Phase::RestPostDischarge;
  throw data_error("ValidationError", "line " + std::to_string(line) + ": unknown phase '" + std::string(text) + "'");
}

struct Row {
  double t, v, i, q;
  int line;
};

struct RawCycle {
  std::vector<Row> phases[4];
};

void check_increasing(const std::vector<Row>& rows, std::string_view phase, int cycle) {
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (!(rows[k].t > rows[k - 1].t)) {
      throw data_error("ValidationError", "cycle " + std::to_string(cycle) + " " + std::string(phase) +
                                              ": non-monotone time at line " + std::to_string(rows[k].line));
    }
  }
}

// Linear interpolation; returns the stored sample exactly when x hits a knot.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto hi = std::upper_bound(xs.begin(), xs.end(), x);
  auto k = static_cast<std::size_t>(hi - xs.begin()) - 1;
  if (xs[k] == x) return ys[k];
  return ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k]);
}

RelaxationCurve resample_relaxation(const std::vector<Row>& rows, double interval, double cutoff, int cycle) {
  std::vector<double> t, v;
  for (const auto& r : rows) {
    t.push_back(r.t - rows.front().t);
    v.push_back(r.v);
  }
  RelaxationCurve curve;
  curve.sampling_interval = interval;
  curve.cutoff_current = cutoff;
  const auto steps = static_cast<std::size_t>(std::floor(t.back() / interval + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double tk = static_cast<double>(k) * interval;
    curve.t.push_back(tk);
    curve.v.push_back(interpolate(t, v, tk));
  }
  if (curve.size() < 2) {
    throw data_error("ValidationError", "cycle " + std::to_string(cycle) + ": relaxation shorter than one sampling interval");
  }
  return curve;
}

void write_row(std::ostream& out, int cycle, std::string_view phase, double t, double v, double i, double q) {
  out << cycle << ',' << phase << ',' << format_exact(t) << ',' << format_exact(v) << ',' << format_exact(i) << ','
      << format_exact(q) << '\n';
}

}  // namespace

std::string_view to_string(Chemistry chemistry) {
  switch (chemistry) {
    case Chemistry::NCA:
      return "NCA";
    case Chemistry::NCM:
      return "NCM";
    case Chemistry::NCM_NCA:
      return "NCM_NCA";
  }
  return "?";
}

Chemistry parse_chemistry(std::string_view text) {
  if (text == "NCA") return Chemistry::NCA;
  if (text == "NCM") return Chemistry::NCM;
  if (text == "NCM_NCA" || text == "NCM+NCA") return Chemistry::NCM_NCA;
  throw data_error("SchemaError", "unknown chemistry '" + std::string(text) + "'");
}

RelaxationCurve RelaxationCurve::truncated(std::size_t count) const {
  if (count < 2 || count > size()) {
    throw data_error("HorizonExceedsData", "cannot keep " + std::to_string(count) + " of " +
                                               std::to_string(size()) + " relaxation samples");
  }
  RelaxationCurve out = *this;
  out.t.resize(count);
  out.v.resize(count);
  return out;
}

void RelaxationCurve::validate() const {
  if (t.size() != v.size()) throw data_error("ValidationError", "relaxation t/v length mismatch");
  if (t.size() < 2) throw data_error("ValidationError", "relaxation needs at least 2 samples");
  if (t.front() != 0.0) throw data_error("ValidationError", "relaxation must start at t = 0");
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (!(t[k] > t[k - 1])) throw data_error("ValidationError", "relaxation time not strictly increasing");
  }
  for (double x : v) {
    if (!(x >= kMinVoltage && x <= kMaxVoltage)) {
      throw data_error("ValidationError", "relaxation voltage " + format_exact(x) + " V outside [2.0, 4.5]");
    }
  }
}

void DischargeCurve::validate() const {
  if (t.size() != q.size() || t.size() != v.size()) throw data_error("ValidationError", "discharge column length mismatch");
  if (t.size() < 2) throw data_error("ValidationError", "discharge needs at least 2 samples");
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (!(t[k] > t[k - 1])) throw data_error("ValidationError", "discharge time not strictly increasing");
    if (q[k] < q[k - 1]) throw data_error("ValidationError", "discharge capacity decreasing");
  }
}

double CycleRecord::duration_s() const {
  double d = charge_duration_s + relaxation.horizon() + rest_after_discharge_s;
  if (discharge) d += discharge->duration();
  return d;
}

const CycleRecord* CellHistory::find_cycle(int index) const {
  auto it = std::lower_bound(cycles.begin(), cycles.end(), index,
                             [](const CycleRecord& r, int i) { return r.cycle_index < i; });
  if (it == cycles.end() || it->cycle_index != index) return nullptr;
  return &*it;
}

const CycleRecord& CellHistory::cycle(int index) const {
  if (const auto* r = find_cycle(index)) return *r;
  throw data_error("UnknownCycle", "cell " + cell_id + " has no cycle " + std::to_string(index));
}

std::vector<double> smoothed_soh(const CellHistory& history) {
  const auto n = history.cycles.size();
  std::vector<double> raw(n), out(n);
  for (std::size_t k = 0; k < n; ++k) raw[k] = history.soh(history.cycles[k]);
  const std::size_t half = kEolMedianWindow / 2;
  std::vector<double> window;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t h = std::min({half, k, n - 1 - k});
    window.assign(raw.begin() + static_cast<long>(k - h), raw.begin() + static_cast<long>(k + h + 1));
    std::nth_element(window.begin(), window.begin() + static_cast<long>(h), window.end());
    out[k] = window[h];
  }
  return out;
}

int compute_eol(const CellHistory& history, double soh_eol) {
  if (history.cycles.empty()) throw data_error("EmptyFile", "cell " + history.cell_id + " has no cycles");
  const auto smooth = smoothed_soh(history);
  for (std::size_t k = 0; k < smooth.size(); ++k) {
    if (smooth[k] <= soh_eol) return history.cycles[k].cycle_index;
  }
  throw data_error("NeverReached", "cell " + history.cell_id + " never reaches SOH " + format_exact(soh_eol));
}

void finalize_history(CellHistory& history, double soh_eol) {
  if (history.cycles.empty()) throw data_error("EmptyFile", "cell " + history.cell_id + " has no cycles");
  if (!(history.nominal_capacity > 0.0)) throw data_error("ValidationError", "nominal capacity must be positive");
  double ah = 0.0;
  double seconds = 0.0;
  int previous = 0;
  for (auto& rec : history.cycles) {
    if (rec.cycle_index <= previous) {
      throw data_error("ValidationError", "cell " + history.cell_id + ": cycle indices must be positive and increasing");
    }
    previous = rec.cycle_index;
    if (!(rec.capacity > 0.0)) {
      throw data_error("ValidationError", "cell " + history.cell_id + " cycle " + std::to_string(rec.cycle_index) +
                                              ": capacity must be positive");
    }
    rec.relaxation.validate();
    if (rec.discharge) rec.discharge->validate();
    ah += rec.charge_ah + (rec.discharge ? rec.discharge->q.back() : 0.0);
    rec.cumulative_ah = ah;
    rec.calendar_days = seconds / 86400.0;
    seconds += rec.duration_s();
  }
  try {
    history.eol_cycle = compute_eol(history, soh_eol);
  } catch (const Error& e) {
    if (e.kind() != "NeverReached") throw;
    history.eol_cycle.reset();
  }
}

ColumnSchema ColumnSchema::from_section(const KeyValueSection* section) {
  ColumnSchema s;
  if (!section) return s;
  s.cycle = section->get("cycle", s.cycle);
  s.phase = section->get("phase", s.phase);
  s.time = section->get("t_s", s.time);
  s.voltage = section->get("voltage_v", s.voltage);
  s.current = section->get("current_a", s.current);
  s.capacity = section->get("capacity_ah", s.capacity);
  return s;
}

CellHistory ingest_cell(std::istream& csv, const CellEntry& entry, const ColumnSchema& schema, double soh_eol) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(csv, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    for (auto& h : split(view, ',')) header.emplace_back(trim(h));
    break;
  }
  if (header.empty()) throw data_error("EmptyFile", "cell " + entry.cell_id + ": no header row");

  auto column = [&](const std::string& name) {
    auto first = std::find(header.begin(), header.end(), name);
    if (first == header.end()) throw data_error("SchemaError", "missing column '" + name + "'");
    if (std::find(first + 1, header.end(), name) != header.end()) {
      throw data_error("SchemaError", "duplicated column '" + name + "'");
    }
    return static_cast<std::size_t>(first - header.begin());
  };
  const std::size_t c_cycle = column(schema.cycle), c_phase = column(schema.phase), c_t = column(schema.time),
                    c_v = column(schema.voltage), c_i = column(schema.current), c_q = column(schema.capacity);

  std::map<int, RawCycle> raw;
  while (std::getline(csv, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split(view, ',');
    if (fields.size() != header.size()) {
      throw data_error("SchemaError", "line " + std::to_string(line_no) + ": expected " +
                                          std::to_string(header.size()) + " fields");
    }
    const auto cycle = static_cast<int>(parse_integer(fields[c_cycle], "cycle"));
    const Phase phase = parse_phase(trim(fields[c_phase]), line_no);
    Row row{parse_double(fields[c_t], "t_s"), parse_double(fields[c_v], "voltage_v"),
            parse_double(fields[c_i], "current_a"), parse_double(fields[c_q], "capacity_ah"), line_no};
    if (!(row.v >= kMinVoltage && row.v <= kMaxVoltage)) {
      throw data_error("ValidationError", "line " + std::to_string(line_no) + ": voltage " + format_exact(row.v) +
                                              " V outside [2.0, 4.5]");
    }
    raw[cycle].phases[static_cast<int>(phase)].push_back(row);
  }
  if (raw.empty()) throw data_error("EmptyFile", "cell " + entry.cell_id + ": no data rows");

  CellHistory history;
  history.cell_id = entry.cell_id;
  history.chemistry = entry.chemistry;
  history.condition = entry.condition;
  history.nominal_capacity = entry.nominal_capacity;
  const double default_cutoff = entry.cutoff_current_a > 0.0 ? entry.cutoff_current_a : 0.05 * entry.nominal_capacity;

  for (const auto& [index, cyc] : raw) {
    const auto& charge = cyc.phases[0];
    const auto& rest = cyc.phases[1];
    const auto& discharge = cyc.phases[2];
    const auto& rest2 = cyc.phases[3];
    check_increasing(charge, "charge", index);
    check_increasing(rest, "rest_post_charge", index);
    check_increasing(discharge, "discharge", index);
    check_increasing(rest2, "rest_post_discharge", index);
    if (rest.size() < 2) {
      throw data_error("ValidationError", "cycle " + std::to_string(index) + ": post-charge rest needs at least 2 samples");
    }

    CycleRecord rec;
    rec.cycle_index = index;
    // Charging current is positive in the file; the rest that follows decays
    // towards OCV, i.e. a negative I in the relaxation model.
    double cutoff = -default_cutoff;
    if (!charge.empty()) {
      rec.charge_ah = charge.back().q;
      rec.charge_duration_s = charge.back().t - charge.front().t;
      if (charge.back().i != 0.0) cutoff = -charge.back().i;
    }
    rec.relaxation = resample_relaxation(rest, entry.relaxation_interval_s, cutoff, index);
    if (entry.rest_duration_s) {
      const auto expected = static_cast<std::size_t>(std::floor(*entry.rest_duration_s / entry.relaxation_interval_s + 1e-9)) + 1;
      if (rec.relaxation.size() < expected) {
        throw data_error("ValidationError", "cycle " + std::to_string(index) + ": relaxation has " +
                                                std::to_string(rec.relaxation.size()) + " samples, protocol declares " +
                                                std::to_string(expected));
      }
    }
    if (!discharge.empty()) {
      DischargeCurve d;
      d.current = std::fabs(discharge.front().i);
      for (const auto& r : discharge) {
        d.t.push_back(r.t - discharge.front().t);
        d.q.push_back(r.q);
        d.v.push_back(r.v);
      }
      rec.capacity = d.q.back();
      rec.discharge = std::move(d);
    } else {
      rec.capacity = rec.charge_ah;
    }
    if (rest2.size() >= 2) rec.rest_after_discharge_s = rest2.back().t - rest2.front().t;
    history.cycles.push_back(std::move(rec));
  }
  finalize_history(history, soh_eol);
  return history;
}

CellHistory ingest_cell(const std::filesystem::path& path, const CellEntry& entry, const ColumnSchema& schema,
                        double soh_eol) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot open " + path.string());
  return ingest_cell(in, entry, schema, soh_eol);
}

void write_cell_csv(std::ostream& out, const CellHistory& history, std::string_view header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "cycle,phase,t_s,voltage_v,current_a,capacity_ah\n";
  for (const auto& rec : history.cycles) {
    const auto& relax = rec.relaxation;
    const int c = rec.cycle_index;
    // Only the end of charge is retained in a CycleRecord; the charge step is
    // written as its first and last row, both at the voltage where the rest
    // begins.
    if (rec.charge_duration_s > 0.0) write_row(out, c, "charge", 0.0, relax.v.front(), -relax.cutoff_current, 0.0);
    write_row(out, c, "charge", rec.charge_duration_s, relax.v.front(), -relax.cutoff_current, rec.charge_ah);
    for (std::size_t k = 0; k < relax.size(); ++k) write_row(out, c, "rest_post_charge", relax.t[k], relax.v[k], 0.0, 0.0);
    double last_v = relax.v.back();
    if (rec.discharge) {
      const auto& d = *rec.discharge;
      for (std::size_t k = 0; k < d.t.size(); ++k) write_row(out, c, "discharge", d.t[k], d.v[k], -d.current, d.q[k]);
      last_v = d.v.back();
    }
    if (rec.rest_after_discharge_s > 0.0) {
      write_row(out, c, "rest_post_discharge", 0.0, last_v, 0.0, 0.0);
      write_row(out, c, "rest_post_discharge", rec.rest_after_discharge_s, last_v, 0.0, 0.0);
    }
  }
}

DatasetSplit split_dataset(const std::vector<CellHistory>& cells, const SplitSpec& spec, std::uint64_t seed) {
  DatasetSplit split;
  split.seed = seed;
  for (const auto& [condition, counts] : spec) {
    std::vector<std::string> ids;
    for (const auto& c : cells) {
      if (c.condition == condition) ids.push_back(c.cell_id);
    }
    std::sort(ids.begin(), ids.end());
    const auto [n_train, n_test] = counts;
    if (n_train < 0 || n_test < 0 || static_cast<std::size_t>(n_train + n_test) > ids.size()) {
      throw data_error("InsufficientCells", "condition " + condition + " has " + std::to_string(ids.size()) +
                                                " cells, split asks for " + std::to_string(n_train) + "/" +
                                                std::to_string(n_test));
    }
    // Fisher-Yates on a per-condition stream so conditions do not interact.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : condition) h = (h ^ ch) * 1099511628211ULL;
    std::mt19937_64 rng(seed ^ h);
    for (std::size_t k = ids.size(); k > 1; --k) {
      std::swap(ids[k - 1], ids[rng() % k]);
    }
    for (int k = 0; k < n_train; ++k) split.train.insert(ids[static_cast<std::size_t>(k)]);
    for (int k = 0; k < n_test; ++k) split.test.insert(ids[static_cast<std::size_t>(n_train + k)]);
  }
  return split;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  const auto file = KeyValueFile::load(path);
  Manifest m;
  m.soh_eol = file.global().get_double("soh_eol", kDefaultSohEol);
  m.schema = ColumnSchema::from_section(file.section("schema"));
  const auto base = path.parent_path();
  for (const auto* s : file.sections("cell")) {
    CellEntry e;
    e.cell_id = s->label;
    if (e.cell_id.empty()) throw data_error("SchemaError", "[cell] section without an id");
    e.file = base / s->get("file", e.cell_id + ".csv");
    e.chemistry = parse_chemistry(s->require("chemistry"));
    e.condition = s->require("condition");
    e.nominal_capacity = s->require_double("nominal_capacity_ah");
    e.relaxation_interval_s = s->get_double("relaxation_interval_s", 120.0);
    if (auto r = s->find("rest_duration_s")) e.rest_duration_s = parse_double(*r, "rest_duration_s");
    e.cutoff_current_a = s->get_double("cutoff_current_a", 0.05 * e.nominal_capacity);
    m.cells.push_back(std::move(e));
  }
  if (const auto* s = file.section("split")) {
    for (const auto& [key, value] : s->entries) {
      if (key == "seed") {
        m.split_seed = static_cast<std::uint64_t>(parse_integer(value, "split seed"));
        continue;
      }
      auto parts = rulgp::split(value, '/');
      if (parts.size() != 2) throw data_error("SchemaError", "split entry '" + key + "' must read train/test");
      m.split[key] = {static_cast<int>(parse_integer(parts[0], key)), static_cast<int>(parse_integer(parts[1], key))};
    }
  }
  return m;
}

void Manifest::write(std::ostream& out, std::string_view header_comment) const {
  KeyValueFile file;
  file.global().set("soh_eol", format_exact(soh_eol));
  auto& schema_section = file.add_section("schema", "");
  schema_section.set("cycle", schema.cycle);
  schema_section.set("phase", schema.phase);
  schema_section.set("t_s", schema.time);
  schema_section.set("voltage_v", schema.voltage);
  schema_section.set("current_a", schema.current);
  schema_section.set("capacity_ah", schema.capacity);
  for (const auto& e : cells) {
    auto& s = file.add_section("cell", e.cell_id);
    s.set("file", e.file.filename().string());
    s.set("chemistry", std::string(to_string(e.chemistry)));
    s.set("condition", e.condition);
    s.set("nominal_capacity_ah", format_exact(e.nominal_capacity));
    s.set("relaxation_interval_s", format_exact(e.relaxation_interval_s));
    if (e.rest_duration_s) s.set("rest_duration_s", format_exact(*e.rest_duration_s));
    s.set("cutoff_current_a", format_exact(e.cutoff_current_a));
  }
  if (!split.empty()) {
    auto& s = file.add_section("split", "");
    s.set("seed", std::to_string(split_seed));
    for (const auto& [cond, counts] : split) s.set(cond, std::to_string(counts.first) + "/" + std::to_string(counts.second));
  }
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  file.write(out);
}

const CellHistory& Dataset::cell(std::string_view id) const {
  for (const auto& c : cells) {
    if (c.cell_id == id) return c;
  }
  throw data_error("UnknownCell", "no cell '" + std::string(id) + "'");
}

std::vector<const CellHistory*> Dataset::by_chemistry(Chemistry chemistry) const {
  std::vector<const CellHistory*> out;
  for (const auto& c : cells) {
    if (c.chemistry == chemistry) out.push_back(&c);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, Execution exec) {
  Dataset ds;
  ds.manifest = Manifest::load(manifest_path);
  ds.cells.resize(ds.manifest.cells.size());
  for_each_index(ds.cells.size(), exec, [&](std::size_t k) {
    const auto& e = ds.manifest.cells[k];
    ds.cells[k] = ingest_cell(e.file, e, ds.manifest.schema, ds.manifest.soh_eol);
  });
  return ds;
}

}  // namespace rulgp

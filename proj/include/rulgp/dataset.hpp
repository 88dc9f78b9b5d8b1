#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rulgp/keyvalue.hpp"
#include "rulgp/parallel.hpp"

namespace rulgp {

enum class Chemistry { NCA, NCM, NCM_NCA };

std::string_view to_string(Chemistry chemistry);
Chemistry parse_chemistry(std::string_view text);

/// Post-charge rest voltage, sampled on a uniform grid starting at t = 0.
///
/// `cutoff_current` is the current I of the relaxation model in its own sign
/// convention: U(t) = OCV - I*R*exp(-t/tau). A rest that follows charging has
/// a voltage decaying towards OCV, which corresponds to I < 0.
struct RelaxationCurve {
  std::vector<double> t;  // s
  std::vector<double> v;  // V
  double sampling_interval = 0.0;  // s
  double cutoff_current = 0.0;     // A

  std::size_t size() const { return t.size(); }
  double horizon() const { return t.empty() ? 0.0 : t.back(); }
  /// First `count` samples (count >= 2).
  RelaxationCurve truncated(std::size_t count) const;
  void validate() const;

  bool operator==(const RelaxationCurve&) const = default;
};

/// Constant-current discharge: capacity and voltage against time since the
/// start of the discharge step.
struct DischargeCurve {
  std::vector<double> t;  // s
  std::vector<double> q;  // Ah
  std::vector<double> v;  // V
  double current = 0.0;   // A, magnitude

  double duration() const { return t.empty() ? 0.0 : t.back(); }
  void validate() const;

  bool operator==(const DischargeCurve&) const = default;
};

struct CycleRecord {
  int cycle_index = 0;
  RelaxationCurve relaxation;
  std::optional<DischargeCurve> discharge;
  double capacity = 0.0;             // Ah
  double charge_ah = 0.0;            // charge throughput of this cycle
  double charge_duration_s = 0.0;
  double rest_after_discharge_s = 0.0;
  // Derived by finalize_history().
  double cumulative_ah = 0.0;  // sum of charge + discharge Ah up to and including this cycle
  double calendar_days = 0.0;  // logged time before this cycle started

  double duration_s() const;
  bool operator==(const CycleRecord&) const = default;
};

struct CellHistory {
  std::string cell_id;
  Chemistry chemistry = Chemistry::NCA;
  std::string condition;  // "CY45-0.5/1"
  double nominal_capacity = 0.0;  // Ah
  std::vector<CycleRecord> cycles;
  std::optional<int> eol_cycle;

  const CycleRecord& cycle(int index) const;
  const CycleRecord* find_cycle(int index) const;
  double soh(const CycleRecord& record) const { return record.capacity / nominal_capacity; }

  bool operator==(const CellHistory&) const = default;
};

inline constexpr double kDefaultSohEol = 0.80;
inline constexpr int kEolMedianWindow = 5;

/// Capacity ratio after a centered moving median of kEolMedianWindow cycles.
/// The window shrinks symmetrically at both ends of the record, so the first
/// and last cycles are left unsmoothed.
std::vector<double> smoothed_soh(const CellHistory& history);

/// First cycle index whose smoothed capacity ratio is <= soh_eol.
/// Throws NeverReached.
int compute_eol(const CellHistory& history, double soh_eol = kDefaultSohEol);

/// Validates cycle ordering and fills cumulative_ah, calendar_days and
/// eol_cycle. Shared by ingestion and the generator so both build identical
/// records from identical raw data.
void finalize_history(CellHistory& history, double soh_eol = kDefaultSohEol);

/// Maps foreign column names onto the canonical
/// `cycle,phase,t_s,voltage_v,current_a,capacity_ah` layout.
struct ColumnSchema {
  std::string cycle = "cycle";
  std::string phase = "phase";
  std::string time = "t_s";
  std::string voltage = "voltage_v";
  std::string current = "current_a";
  std::string capacity = "capacity_ah";

  static ColumnSchema from_section(const KeyValueSection* section);
};

/// Per-cell metadata from the manifest.
struct CellEntry {
  std::string cell_id;
  std::filesystem::path file;
  Chemistry chemistry = Chemistry::NCA;
  std::string condition;
  double nominal_capacity = 0.0;
  double relaxation_interval_s = 120.0;
  std::optional<double> rest_duration_s;  // declared full-protocol rest length
  double cutoff_current_a = 0.0;          // magnitude; 0.05C when absent
};

CellHistory ingest_cell(std::istream& csv, const CellEntry& entry, const ColumnSchema& schema = {},
                        double soh_eol = kDefaultSohEol);
CellHistory ingest_cell(const std::filesystem::path& path, const CellEntry& entry,
                        const ColumnSchema& schema = {}, double soh_eol = kDefaultSohEol);

/// Canonical CSV. Re-ingesting the output reproduces `history` exactly.
void write_cell_csv(std::ostream& out, const CellHistory& history, std::string_view header_comment = {});

using SplitSpec = std::map<std::string, std::pair<int, int>>;  // condition -> (train, test)

struct DatasetSplit {
  std::set<std::string> train;
  std::set<std::string> test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle within each condition; counts honored exactly.
DatasetSplit split_dataset(const std::vector<CellHistory>& cells, const SplitSpec& spec, std::uint64_t seed);

struct Manifest {
  std::vector<CellEntry> cells;
  ColumnSchema schema;
  SplitSpec split;
  std::uint64_t split_seed = 0;
  double soh_eol = kDefaultSohEol;

  static Manifest load(const std::filesystem::path& path);
  void write(std::ostream& out, std::string_view header_comment = {}) const;
};

struct Dataset {
  Manifest manifest;
  std::vector<CellHistory> cells;

  const CellHistory& cell(std::string_view id) const;
  std::vector<const CellHistory*> by_chemistry(Chemistry chemistry) const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path, Execution exec = Execution::Parallel);

}  // namespace rulgp

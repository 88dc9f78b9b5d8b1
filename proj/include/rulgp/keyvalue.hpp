#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rulgp {

// Shortest decimal form that parses back to the identical double.
std::string format_exact(double value);
double parse_double(std::string_view text, std::string_view what);
long long parse_integer(std::string_view text, std::string_view what);
std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char delimiter);

/// One `[kind label]` block of a key-value file. The unnamed leading block
/// has an empty kind.
struct KeyValueSection {
  std::string kind;
  std::string label;
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> find(std::string_view key) const;
  std::string require(std::string_view key) const;
  double require_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  long long get_integer(std::string_view key, long long fallback) const;
  std::string get(std::string_view key, std::string fallback) const;
  void set(std::string key, std::string value);
};

/// Plain-text configuration: `key = value` lines, `#` comments, and
/// `[kind label]` section headers. Used for manifests, run configs and
/// drift profiles.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source = "<stream>");
  static KeyValueFile load(const std::filesystem::path& path);

  KeyValueSection& global() { return sections_.front(); }
  const KeyValueSection& global() const { return sections_.front(); }
  std::vector<const KeyValueSection*> sections(std::string_view kind) const;
  const KeyValueSection* section(std::string_view kind, std::string_view label = {}) const;
  KeyValueSection& add_section(std::string kind, std::string label);

  void write(std::ostream& out) const;

 private:
  std::vector<KeyValueSection> sections_{KeyValueSection{}};
};

}  // namespace rulgp

#include "rulgp/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "rulgp/errors.hpp"

namespace rulgp {

std::string format_exact(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw numerical_error("FormatError", "cannot format double");
  return std::string(buf, end);
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw data_error("ParseError", "expected a number for " + std::string(what) + ", got '" +
                                       std::string(text) + "'");
  }
  return value;
}

long long parse_integer(std::string_view text, std::string_view what) {
  text = trim(text);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw data_error("ParseError", "expected an integer for " + std::string(what) + ", got '" +
                                       std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split(std::string_view text, char delimiter) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(delimiter, start);
    out.emplace_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<std::string> KeyValueSection::find(std::string_view key) const {
  // Later entries win so that appended overrides take effect.
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  return std::nullopt;
}

std::string KeyValueSection::require(std::string_view key) const {
  auto value = find(key);
  if (!value) {
    std::string where = kind.empty() ? "top level" : "[" + kind + " " + label + "]";
    throw data_error("SchemaError", "missing key '" + std::string(key) + "' in " + where);
  }
  return *value;
}

double KeyValueSection::require_double(std::string_view key) const {
  return parse_double(require(key), key);
}

double KeyValueSection::get_double(std::string_view key, double fallback) const {
  auto value = find(key);
  return value ? parse_double(*value, key) : fallback;
}

long long KeyValueSection::get_integer(std::string_view key, long long fallback) const {
  auto value = find(key);
  return value ? parse_integer(*value, key) : fallback;
}

std::string KeyValueSection::get(std::string_view key, std::string fallback) const {
  auto value = find(key);
  return value ? *value : std::move(fallback);
}

void KeyValueSection::set(std::string key, std::string value) {
  for (auto& entry : entries) {
    if (entry.first == key) {
      entry.second = std::move(value);
      return;
    }
  }
  entries.emplace_back(std::move(key), std::move(value));
}

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile file;
  KeyValueSection* current = &file.sections_.front();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    if (view.front() == '[') {
      if (view.back() != ']') {
        throw data_error("ParseError", source + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      auto inner = trim(view.substr(1, view.size() - 2));
      auto space = inner.find_first_of(" \t");
      std::string kind(inner.substr(0, space));
      std::string label = space == std::string_view::npos ? std::string{} : std::string(trim(inner.substr(space)));
      current = &file.add_section(std::move(kind), std::move(label));
      continue;
    }
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw data_error("ParseError", source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    current->entries.emplace_back(std::string(trim(view.substr(0, eq))), std::string(trim(view.substr(eq + 1))));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("FileNotFound", "cannot open " + path.string());
  return parse(in, path.string());
}

std::vector<const KeyValueSection*> KeyValueFile::sections(std::string_view kind) const {
  std::vector<const KeyValueSection*> out;
  for (const auto& s : sections_) {
    if (!s.kind.empty() && s.kind == kind) out.push_back(&s);
  }
  return out;
}

const KeyValueSection* KeyValueFile::section(std::string_view kind, std::string_view label) const {
  for (const auto& s : sections_) {
    if (s.kind == kind && (label.empty() || s.label == label)) return &s;
  }
  return nullptr;
}

KeyValueSection& KeyValueFile::add_section(std::string kind, std::string label) {
  sections_.push_back(KeyValueSection{std::move(kind), std::move(label), {}});
  return sections_.back();
}

void KeyValueFile::write(std::ostream& out) const {
  bool first = true;
  for (const auto& s : sections_) {
    if (!s.kind.empty()) {
      if (!first) out << '\n';
      out << '[' << s.kind;
      if (!s.label.empty()) out << ' ' << s.label;
      out << "]\n";
    }
    for (const auto& [k, v] : s.entries) out << k << " = " << v << '\n';
    first = false;
  }
}

}  // namespace rulgp

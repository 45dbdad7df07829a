#include "robustft/kv.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "robustft/errors.hpp"

namespace robustft {

namespace {
std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

const std::string* KvDocument::Section::find(std::string_view key) const {
  for (const auto& [k, v] : values) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& KvDocument::Section::require(std::string_view key) const {
  if (const auto* v = find(key)) return *v;
  throw FormatError("section [" + name + "] is missing key '" + std::string(key) + "'");
}

double KvDocument::Section::number(std::string_view key) const { return parse_double(require(key)); }

void KvDocument::Section::set(std::string key, std::string value) {
  for (auto& [k, v] : values) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  values.emplace_back(std::move(key), std::move(value));
}

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw FormatError("line " + std::to_string(line_no) + ": malformed section header");
      }
      doc.add_section(std::string(trim(line.substr(1, line.size() - 2))));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (doc.sections_.empty()) doc.add_section("");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
    doc.sections_.back().set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

std::string KvDocument::to_text() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& section : sections_) {
    if (!first) os << '\n';
    first = false;
    if (!section.name.empty()) os << '[' << section.name << "]\n";
    for (const auto& [k, v] : section.values) os << k << " = " << v << '\n';
  }
  return os.str();
}

KvDocument::Section& KvDocument::add_section(std::string name) {
  sections_.push_back(Section{std::move(name), {}});
  return sections_.back();
}

const KvDocument::Section* KvDocument::find(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace robustft

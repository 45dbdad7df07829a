#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace robustft {

/// Sectioned key-value text: `[section]` headers, `key = value` lines,
/// `#` comments. Order of sections and keys is preserved.
class KvDocument {
 public:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> values;

    const std::string* find(std::string_view key) const;
    const std::string& require(std::string_view key) const;
    double number(std::string_view key) const;
    void set(std::string key, std::string value);
  };

  static KvDocument parse(std::string_view text);
  std::string to_text() const;

  Section& add_section(std::string name);
  const Section* find(std::string_view name) const;
  const std::vector<Section>& sections() const { return sections_; }

 private:
  std::vector<Section> sections_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Strict full-string parse; throws FormatError.
double parse_double(std::string_view text);

std::string read_text_file(const std::string& path);
/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace robustft

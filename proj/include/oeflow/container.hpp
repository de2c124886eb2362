#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oeflow {

/// One serialized model: a kind tag, an ordered key/value architecture
/// descriptor and a flat parameter array.
struct ModelSection {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> descriptor;
  std::vector<double> parameters;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;  // FormatError when missing
  std::optional<std::string> find(const std::string& key) const;
  long get_long(const std::string& key) const;
  double get_double(const std::string& key) const;
};

/// Self-describing model file.
///
///   oeflow-model
///   format_version 1
///   sections <n>
///   section <kind> <parameter_count>
///   <key> <value>                      (descriptor lines, values may contain spaces)
///   end_section
///   ...
///   end_header
///   <parameters of every section in order, little-endian IEEE-754 binary64>
///
/// Keys are single tokens; no header line may contain a newline.
struct ModelContainer {
  static constexpr int kFormatVersion = 1;
  std::vector<ModelSection> sections;

  const ModelSection& section(const std::string& kind) const;  // FormatError when missing
  const ModelSection* find_section(const std::string& kind) const;
};

void write_container(std::ostream& out, const ModelContainer& container);
ModelContainer read_container(std::istream& in);

void save_container(const std::filesystem::path& path, const ModelContainer& container);
ModelContainer load_container(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(const std::string& text);  // ParseError on junk
long parse_long(const std::string& text);

}  // namespace oeflow

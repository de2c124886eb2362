#include "oeflow/container.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "oeflow/errors.hpp"

namespace oeflow {

namespace {

constexpr const char* kMagic = "oeflow-model";

void put_le64(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

double get_le64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("model file truncated inside parameter data");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::pair<std::string, std::string> split_first(const std::string& line) {
  const auto space = line.find(' ');
  if (space == std::string::npos) return {line, ""};
  return {line.substr(0, space), line.substr(space + 1)};
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 64> buffer{};
  const auto result = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  return std::string(buffer.data(), result.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  if (begin < end && *begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || begin == end) {
    throw ParseError("not a number: '" + text + "'", 0);
  }
  return value;
}

long parse_long(const std::string& text) {
  long value = 0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("not an integer: '" + text + "'", 0);
  }
  return value;
}

void ModelSection::set(const std::string& key, const std::string& value) {
  for (auto& entry : descriptor) {
    if (entry.first == key) {
      entry.second = value;
      return;
    }
  }
  descriptor.emplace_back(key, value);
}

std::optional<std::string> ModelSection::find(const std::string& key) const {
  for (const auto& entry : descriptor) {
    if (entry.first == key) return entry.second;
  }
  return std::nullopt;
}

const std::string& ModelSection::get(const std::string& key) const {
  for (const auto& entry : descriptor) {
    if (entry.first == key) return entry.second;
  }
  throw FormatError("section '" + kind + "' lacks descriptor key '" + key + "'");
}

long ModelSection::get_long(const std::string& key) const { return parse_long(get(key)); }
double ModelSection::get_double(const std::string& key) const { return parse_double(get(key)); }

const ModelSection* ModelContainer::find_section(const std::string& kind) const {
  for (const auto& section : sections) {
    if (section.kind == kind) return &section;
  }
  return nullptr;
}

const ModelSection& ModelContainer::section(const std::string& kind) const {
  if (const auto* found = find_section(kind)) return *found;
  throw FormatError("model file has no '" + kind + "' section");
}

void write_container(std::ostream& out, const ModelContainer& container) {
  out << kMagic << '\n';
  out << "format_version " << ModelContainer::kFormatVersion << '\n';
  out << "sections " << container.sections.size() << '\n';
  for (const auto& section : container.sections) {
    if (section.kind.find_first_of(" \n") != std::string::npos) throw UsageError("section kind must be one token");
    out << "section " << section.kind << ' ' << section.parameters.size() << '\n';
    for (const auto& [key, value] : section.descriptor) {
      if (key.empty() || key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
        throw UsageError("invalid descriptor entry '" + key + "'");
      }
      out << key << ' ' << value << '\n';
    }
    out << "end_section\n";
  }
  out << "end_header\n";
  for (const auto& section : container.sections) {
    for (double value : section.parameters) put_le64(out, value);
  }
  if (!out) throw IoError("failed writing model container");
}

ModelContainer read_container(std::istream& in) {
  std::string line;
  std::size_t line_number = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw FormatError("model file header ends unexpectedly");
    ++line_number;
    return line;
  };
  if (next_line() != kMagic) throw FormatError("not an oeflow model file");
  auto [version_key, version] = split_first(next_line());
  if (version_key != "format_version") throw ParseError("expected format_version", line_number);
  if (parse_long(version) != ModelContainer::kFormatVersion) {
    throw FormatError("unsupported model format version " + version);
  }
  auto [count_key, count_text] = split_first(next_line());
  if (count_key != "sections") throw ParseError("expected section count", line_number);
  const long count = parse_long(count_text);
  if (count < 0) throw ParseError("negative section count", line_number);
  ModelContainer container;
  std::vector<long> sizes;
  for (long s = 0; s < count; ++s) {
    auto [tag, rest] = split_first(next_line());
    if (tag != "section") throw ParseError("expected 'section'", line_number);
    auto [kind, size_text] = split_first(rest);
    ModelSection section;
    section.kind = kind;
    sizes.push_back(parse_long(size_text));
    if (sizes.back() < 0) throw ParseError("negative parameter count", line_number);
    while (next_line() != "end_section") {
      auto [key, value] = split_first(line);
      section.descriptor.emplace_back(key, value);
    }
    container.sections.push_back(std::move(section));
  }
  if (next_line() != "end_header") throw ParseError("expected end_header", line_number);
  for (std::size_t s = 0; s < container.sections.size(); ++s) {
    auto& params = container.sections[s].parameters;
    params.resize(static_cast<std::size_t>(sizes[s]));
    for (auto& value : params) value = get_le64(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after parameter data");
  return container;
}

void save_container(const std::filesystem::path& path, const ModelContainer& container) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_container(out, container);
}

ModelContainer load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_container(in);
}

}  // namespace oeflow

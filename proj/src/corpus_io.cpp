#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/corpus.hpp"
#include "xlcw/errors.hpp"

namespace xlcw {
namespace {

using nlohmann::json;

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.emplace_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ptrdiff_t column_of(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

json to_json(const Example& e) {
  json j;
  j["id"] = e.id;
  j["text"] = e.text;
  j["language"] = e.language;
  j["label"] = e.label;
  j["origin"] = std::string(to_string(e.origin));
  j["source_language"] = e.source_language ? json(*e.source_language) : json(nullptr);
  if (!e.provenance.empty()) j["provenance"] = e.provenance;
  return j;
}

Example from_json(const json& j) {
  Example e;
  e.id = j.at("id").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.language = j.at("language").get<std::string>();
  e.label = j.at("label").get<int>();
  e.origin = origin_from_string(j.at("origin").get<std::string>());
  if (j.contains("source_language") && !j["source_language"].is_null()) {
    e.source_language = j["source_language"].get<std::string>();
  }
  if (j.contains("provenance")) e.provenance = j["provenance"].get<std::string>();
  return e;
}

}  // namespace

Split parse_ct21_tsv(std::istream& in, std::string_view language, Role role,
                     const TsvColumns& columns) {
  Split split{std::string(language), role, {}};
  std::string line;
  if (!std::getline(in, line)) return split;
  strip_cr(line);
  const auto header = split_tabs(line);
  const auto text_col = column_of(header, columns.text);
  const auto label_col = column_of(header, columns.label);
  const auto id_col = column_of(header, columns.id);
  if (text_col < 0) throw ParseError(fmt::format("missing text column '{}'", columns.text), 1);
  if (label_col < 0) throw ParseError(fmt::format("missing label column '{}'", columns.label), 1);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) {
      throw ParseError(fmt::format("expected {} tab-separated fields, found {}", header.size(),
                                   fields.size()),
                       line_no);
    }
    const auto& label = fields[static_cast<std::size_t>(label_col)];
    Example e;
    if (label == "0") {
      e.label = kNegative;
    } else if (label == "1") {
      e.label = kPositive;
    } else {
      throw ValidationError(
          fmt::format("unknown label value '{}' at line {}", label, line_no));
    }
    e.text = fields[static_cast<std::size_t>(text_col)];
    e.id = id_col >= 0 ? fields[static_cast<std::size_t>(id_col)]
                       : fmt::format("{}-{}-{}", language, to_string(role), line_no);
    e.language = std::string(language);
    try {
      validate_example(e);
    } catch (const ValidationError& err) {
      throw ValidationError(fmt::format("{} at line {}", err.what(), line_no));
    }
    split.examples.push_back(std::move(e));
  }
  validate_split(split);
  return split;
}

Split ingest_ct21_tsv(const std::filesystem::path& path, std::string_view language, Role role,
                      const TsvColumns& columns) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return parse_ct21_tsv(in, language, role, columns);
}

void write_jsonl(std::ostream& out, std::span<const Example> examples) {
  for (const auto& e : examples) out << to_json(e).dump() << '\n';
}

std::vector<Example> read_jsonl(std::istream& in) {
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      examples.push_back(from_json(json::parse(line)));
    } catch (const json::exception& err) {
      throw ParseError(err.what(), line_no);
    }
  }
  return examples;
}

void save_split(const std::filesystem::path& path, const Split& split) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_jsonl(out, split.examples);
}

Split load_split(const std::filesystem::path& path, std::string_view language, Role role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  Split split{std::string(language), role, read_jsonl(in)};
  validate_split(split);
  return split;
}

}  // namespace xlcw

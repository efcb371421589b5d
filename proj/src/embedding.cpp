#include "cityflow/embedding.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "cityflow/binary_io.hpp"
#include "cityflow/error.hpp"

namespace cityflow {

namespace {

constexpr const char* kModule = "embedding";

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line_no, std::size_t offset) {
  field = trim(field);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError(kModule, "bad number \"" + std::string(field) + "\" on line " +
                                  std::to_string(line_no), offset);
  }
  return value;
}

}  // namespace

void EmbeddingSet::validate() const {
  if (ids.size() != vectors.size()) {
    throw ValidationError(kModule, "id count does not match vector count");
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim()) {
      throw ValidationError(kModule, "record \"" + ids[i] + "\" has dimension " +
                                         std::to_string(vectors[i].size()) + ", expected " +
                                         std::to_string(dim()));
    }
    for (double v : vectors[i]) {
      if (!std::isfinite(v)) throw ValidationError(kModule, "record \"" + ids[i] + "\" is not finite");
    }
  }
}

EmbeddingSet parse_embeddings_csv(std::string_view text) {
  EmbeddingSet set;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    const std::size_t line_offset = pos;
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (trim(fields[0]) == "id") continue;
    }
    if (fields.size() < 2) {
      throw ParseError(kModule, "line " + std::to_string(line_no) + " has no vector values", line_offset);
    }
    set.ids.emplace_back(trim(fields[0]));
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (std::size_t f = 1; f < fields.size(); ++f) row.push_back(parse_double(fields[f], line_no, line_offset));
    set.vectors.push_back(std::move(row));
  }
  set.validate();
  return set;
}

std::string embeddings_to_csv(const EmbeddingSet& set) {
  std::ostringstream out;
  out.precision(17);
  out << "id";
  for (std::size_t d = 0; d < set.dim(); ++d) out << ",dim" << d;
  out << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.ids[i];
    for (double v : set.vectors[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

EmbeddingSet parse_embeddings_binary(std::string_view bytes) {
  io::ByteReader in(bytes, kModule);
  in.expect_magic("UEMB");
  auto count = in.get<std::uint32_t>();
  auto dim = in.get<std::uint32_t>();
  EmbeddingSet set;
  set.ids.reserve(count);
  set.vectors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = in.get<std::uint16_t>();
    set.ids.emplace_back(in.take(len));
    std::vector<double> row(dim);
    for (auto& v : row) v = in.get<float>();
    set.vectors.push_back(std::move(row));
  }
  if (!in.at_end()) throw IoError(kModule, "trailing bytes after " + std::to_string(count) + " records");
  set.validate();
  return set;
}

std::string embeddings_to_binary(const EmbeddingSet& set) {
  set.validate();
  io::ByteWriter out;
  out.magic("UEMB");
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.size()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.ids[i].size() > 0xFFFF) throw ArgumentError(kModule, "id longer than 65535 bytes");
    out.put<std::uint16_t>(static_cast<std::uint16_t>(set.ids[i].size()));
    out.raw(set.ids[i]);
    for (double v : set.vectors[i]) out.put<float>(static_cast<float>(v));
  }
  return out.take();
}

EmbeddingSet load_embeddings(const std::string& path) {
  auto bytes = io::read_file(path);
  if (bytes.compare(0, 4, "UEMB") == 0) return parse_embeddings_binary(bytes);
  return parse_embeddings_csv(bytes);
}

}  // namespace cityflow

#include "dpmr/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>

namespace dpmr::records {

namespace {

[[noreturn]] void fail_parse(std::string_view what, std::string_view text) {
  throw ParseError(std::string(what) + ": \"" + std::string(text) + "\"");
}

void check_field(std::string_view field_name, std::string_view text) {
  if (text.empty()) {
    throw SerializeError("empty " + std::string(field_name));
  }
  auto pos = text.find_first_of(kReservedChars);
  if (pos != std::string_view::npos) {
    throw SerializeError("reserved character '" + std::string(1, text[pos]) +
                         "' in " + std::string(field_name) + " \"" +
                         std::string(text) + "\"");
  }
}

void check_key_field(std::string_view field_name, std::string_view key) {
  if (!is_valid_key(key)) {
    throw SerializeError("invalid key in " + std::string(field_name) + ": \"" +
                         std::string(key) + "\"");
  }
}

void check_finite(std::string_view field_name, double v) {
  if (!std::isfinite(v)) {
    throw SerializeError("non-finite value in " + std::string(field_name));
  }
}

void check_label(std::string_view field_name, int label) {
  if (label != 0 && label != 1) {
    throw SerializeError("label out of range in " + std::string(field_name));
  }
}

void check_count(std::string_view field_name, std::uint64_t count) {
  if (count == 0) {
    throw SerializeError("zero count in " + std::string(field_name));
  }
}

// Splits `text` on `sep`, skipping empty pieces (consecutive separators).
template <typename Fn>
void for_each_piece(std::string_view text, char sep, Fn&& fn) {
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) fn(text.substr(start, end - start));
    start = end + 1;
  }
}

std::string_view key_part(std::string_view line, std::string_view& value) {
  auto tab = line.find('\t');
  if (tab == std::string_view::npos) {
    fail_parse("missing tab separator", line);
  }
  value = line.substr(tab + 1);
  return line.substr(0, tab);
}

// Expects "<tag> <rest>" and returns rest; rest may be empty for unit-less
// invert records.
std::string_view strip_tag(std::string_view value, char tag,
                           std::string_view line) {
  if (value.size() < 1 || value[0] != tag) {
    fail_parse("expected type tag", line);
  }
  if (value.size() == 1) return {};
  if (value[1] != ' ') fail_parse("malformed value", line);
  return value.substr(2);
}

constexpr std::string_view kBase62 =
    "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

}  // namespace

bool is_valid_feature(std::string_view feature) {
  return !feature.empty() &&
         feature.find_first_of(kReservedChars) == std::string_view::npos;
}

bool is_valid_key(std::string_view key) {
  if (key.find('|') == std::string_view::npos) return is_valid_feature(key);
  try {
    split_key(key);
    return true;
  } catch (const ParseError&) {
    return false;
  }
}

KeyParts split_key(std::string_view key) {
  auto bar = key.find('|');
  if (bar == std::string_view::npos) {
    if (!is_valid_feature(key)) fail_parse("invalid key", key);
    return KeyParts{1, 1, key};
  }
  std::string_view prefix = key.substr(0, bar);
  std::string_view parent = key.substr(bar + 1);
  if (!is_valid_feature(parent)) fail_parse("invalid parent in key", key);
  auto underscore = prefix.find('_');
  if (underscore == std::string_view::npos) {
    fail_parse("malformed sub-feature prefix", key);
  }
  std::uint64_t i = 0;
  std::uint64_t n = 0;
  try {
    i = parse_count(prefix.substr(0, underscore));
    n = parse_count(prefix.substr(underscore + 1));
  } catch (const ParseError&) {
    fail_parse("malformed sub-feature prefix", key);
  }
  if (i > n) fail_parse("sub-feature index out of range", key);
  return KeyParts{i, n, parent};
}

std::string format_real(double value) {
  std::string out;
  append_real(out, value);
  return out;
}

void append_real(std::string& out, double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

double parse_real(std::string_view text) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail_parse("bad real", text);
  }
  return v;
}

std::uint64_t parse_count(std::string_view text) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail_parse("bad count", text);
  }
  if (v == 0) fail_parse("count must be positive", text);
  return v;
}

int parse_label(std::string_view text) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  fail_parse("label must be 0 or 1", text);
}

// ---------------------------------------------------------------------------
// Serialization

std::string unit_text(const DocUnit& u) {
  check_field("docId", u.doc_id);
  check_count("docUnit", u.count);
  check_label("docUnit", u.label);
  std::string out;
  out.reserve(u.doc_id.size() + 8);
  out += u.doc_id;
  out += ':';
  out += std::to_string(u.count);
  out += ':';
  out += char('0' + u.label);
  return out;
}

std::string value_of(const ParameterRecord& r) {
  check_finite("parameter", r.value);
  std::string out = "p ";
  append_real(out, r.value);
  return out;
}

std::string value_of(const InvertIndexRecord& r) {
  if (r.num != r.doc_units.size()) {
    throw SerializeError("invert index num mismatch for key \"" + r.key + "\"");
  }
  std::string out = "i ";
  out += std::to_string(r.num);
  for (const auto& u : r.doc_units) {
    out += ' ';
    out += unit_text(u);
  }
  return out;
}

std::string value_of(const DistributedParamRecord& r) {
  check_label("distributed param", r.label);
  check_key_field("distributed param feature", r.feature);
  check_count("distributed param", r.count);
  check_finite("distributed param", r.para);
  std::string out;
  out += char('0' + r.label);
  out += ':';
  out += r.feature;
  out += ':';
  out += std::to_string(r.count);
  out += ':';
  append_real(out, r.para);
  return out;
}

namespace {

std::string entry_text(const SufficientEntry& e) {
  check_label("sufficient entry", e.label);
  check_key_field("sufficient entry feature", e.feature);
  check_count("sufficient entry", e.count);
  check_finite("sufficient entry", e.para);
  std::string out;
  out += char('0' + e.label);
  out += ':';
  out += e.feature;
  out += ':';
  out += std::to_string(e.count);
  out += ':';
  append_real(out, e.para);
  return out;
}

}  // namespace

std::string value_of(const SufficientSample& s) {
  if (s.entries.empty()) {
    throw SerializeError("sufficient sample without entries: \"" + s.doc_id +
                         "\"");
  }
  std::string out;
  for (std::size_t k = 0; k < s.entries.size(); ++k) {
    if (k > 0) out += ' ';
    out += entry_text(s.entries[k]);
  }
  return out;
}

std::string value_of(const GradientRecord& r) {
  check_finite("gradient", r.grad);
  std::string out = "q ";
  append_real(out, r.grad);
  return out;
}

std::string value_of(const SubFeatureListRecord& r) {
  if (r.subs.empty()) {
    throw SerializeError("empty sub-feature list for \"" + r.parent + "\"");
  }
  std::string out = "e ";
  for (std::size_t k = 0; k < r.subs.size(); ++k) {
    if (k > 0) out += ';';
    check_key_field("sub-feature list entry", r.subs[k]);
    out += r.subs[k];
  }
  return out;
}

namespace {

std::string join_line(std::string_view key, std::string&& value) {
  std::string out;
  out.reserve(key.size() + 1 + value.size());
  out += key;
  out += '\t';
  out += value;
  return out;
}

}  // namespace

std::string serialize(const ParameterRecord& r) {
  check_key_field("parameter feature", r.feature);
  return join_line(r.feature, value_of(r));
}

std::string serialize(const InvertIndexRecord& r) {
  check_key_field("invert index key", r.key);
  return join_line(r.key, value_of(r));
}

std::string serialize(const DistributedParamRecord& r) {
  check_field("docId", r.doc_id);
  return join_line(r.doc_id, value_of(r));
}

std::string serialize(const SufficientSample& s) {
  check_field("docId", s.doc_id);
  return join_line(s.doc_id, value_of(s));
}

std::string serialize(const GradientRecord& r) {
  check_key_field("gradient feature", r.feature);
  return join_line(r.feature, value_of(r));
}

std::string serialize(const SubFeatureListRecord& r) {
  check_key_field("sub-feature parent", r.parent);
  return join_line(r.parent, value_of(r));
}

std::string serialize(const Sample& s) {
  check_label("sample", s.label);
  std::string out;
  out += char('0' + s.label);
  out += '\t';
  for (std::size_t k = 0; k < s.tokens.size(); ++k) {
    const auto& t = s.tokens[k];
    check_field("sample feature", t.feature);
    check_count("sample token", t.count);
    if (k > 0) out += ' ';
    out += t.feature;
    out += ':';
    out += std::to_string(t.count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

Sample parse_sample(std::string_view line) {
  std::string_view value;
  std::string_view label_text = key_part(line, value);
  Sample s;
  s.label = parse_label(label_text);
  for_each_piece(value, ' ', [&](std::string_view token) {
    auto colon = token.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      fail_parse("malformed token", token);
    }
    std::string_view feature = token.substr(0, colon);
    if (!is_valid_feature(feature)) fail_parse("invalid feature", feature);
    s.tokens.push_back(
        Token{std::string(feature), parse_count(token.substr(colon + 1))});
  });
  std::vector<std::string_view> seen;
  seen.reserve(s.tokens.size());
  for (const auto& t : s.tokens) seen.push_back(t.feature);
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    fail_parse("duplicate feature in sample", line);
  }
  return s;
}

DocUnit parse_unit(std::string_view text) {
  auto c1 = text.find(':');
  auto c2 = text.rfind(':');
  if (c1 == std::string_view::npos || c2 == c1) {
    fail_parse("malformed doc unit", text);
  }
  DocUnit u;
  u.doc_id = std::string(text.substr(0, c1));
  if (u.doc_id.empty()) fail_parse("empty docId in unit", text);
  u.count = parse_count(text.substr(c1 + 1, c2 - c1 - 1));
  u.label = parse_label(text.substr(c2 + 1));
  return u;
}

ParameterRecord parse_parameter_kv(std::string_view key,
                                   std::string_view value) {
  if (!is_valid_key(key)) fail_parse("invalid parameter key", key);
  auto rest = strip_tag(value, 'p', value);
  double v = parse_real(rest);
  if (!std::isfinite(v)) fail_parse("non-finite parameter", value);
  return ParameterRecord{std::string(key), v};
}

ParameterRecord parse_parameter(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_parameter_kv(key, value);
}

InvertIndexRecord parse_invert_index_kv(std::string_view key,
                                        std::string_view value) {
  if (!is_valid_key(key)) fail_parse("invalid invert key", key);
  auto rest = strip_tag(value, 'i', value);
  auto space = rest.find(' ');
  std::string_view num_text =
      space == std::string_view::npos ? rest : rest.substr(0, space);
  InvertIndexRecord r;
  r.key = std::string(key);
  if (num_text.empty()) fail_parse("missing unit count", value);
  std::uint64_t num = 0;
  auto res = std::from_chars(num_text.data(), num_text.data() + num_text.size(), num);
  if (res.ec != std::errc() || res.ptr != num_text.data() + num_text.size()) {
    fail_parse("bad unit count", num_text);
  }
  r.num = num;
  if (space != std::string_view::npos) {
    for_each_piece(rest.substr(space + 1), ' ', [&](std::string_view unit) {
      r.doc_units.push_back(parse_unit(unit));
    });
  }
  if (r.num != r.doc_units.size()) {
    fail_parse("invert num does not match unit list", value);
  }
  return r;
}

InvertIndexRecord parse_invert_index(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_invert_index_kv(key, value);
}

DistributedParamRecord parse_distributed_param_kv(std::string_view key,
                                                  std::string_view value) {
  if (key.empty()) fail_parse("empty docId", value);
  auto c1 = value.find(':');
  auto c3 = value.rfind(':');
  if (c1 == std::string_view::npos || c3 == c1) {
    fail_parse("malformed distributed param", value);
  }
  auto c2 = value.rfind(':', c3 - 1);
  if (c2 == c1 || c2 == std::string_view::npos) {
    fail_parse("malformed distributed param", value);
  }
  DistributedParamRecord r;
  r.doc_id = std::string(key);
  r.label = parse_label(value.substr(0, c1));
  std::string_view feature = value.substr(c1 + 1, c2 - c1 - 1);
  if (!is_valid_key(feature)) fail_parse("invalid feature in value", value);
  r.feature = std::string(feature);
  r.count = parse_count(value.substr(c2 + 1, c3 - c2 - 1));
  r.para = parse_real(value.substr(c3 + 1));
  if (!std::isfinite(r.para)) fail_parse("non-finite parameter", value);
  return r;
}

DistributedParamRecord parse_distributed_param(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_distributed_param_kv(key, value);
}

SufficientSample parse_sufficient_sample_kv(std::string_view key,
                                            std::string_view value) {
  SufficientSample s;
  s.doc_id = std::string(key);
  if (s.doc_id.empty()) fail_parse("empty docId", value);
  for_each_piece(value, ' ', [&](std::string_view entry) {
    auto r = parse_distributed_param_kv(key, entry);
    s.entries.push_back(
        SufficientEntry{r.label, std::move(r.feature), r.count, r.para});
  });
  if (s.entries.empty()) fail_parse("sufficient sample without entries", value);
  for (std::size_t k = 1; k < s.entries.size(); ++k) {
    if (s.entries[k].label != s.entries[0].label) {
      fail_parse("conflicting labels in sufficient sample", value);
    }
  }
  std::vector<std::string_view> seen;
  seen.reserve(s.entries.size());
  for (const auto& e : s.entries) seen.push_back(e.feature);
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    fail_parse("duplicate feature in sufficient sample", value);
  }
  return s;
}

SufficientSample parse_sufficient_sample(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_sufficient_sample_kv(key, value);
}

GradientRecord parse_gradient_kv(std::string_view key, std::string_view value) {
  if (!is_valid_key(key)) fail_parse("invalid gradient key", key);
  auto rest = strip_tag(value, 'q', value);
  double g = parse_real(rest);
  if (!std::isfinite(g)) fail_parse("non-finite gradient", value);
  return GradientRecord{std::string(key), g};
}

GradientRecord parse_gradient(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_gradient_kv(key, value);
}

SubFeatureListRecord parse_subfeature_list_kv(std::string_view key,
                                              std::string_view value) {
  if (!is_valid_feature(key)) fail_parse("invalid parent key", key);
  auto rest = strip_tag(value, 'e', value);
  SubFeatureListRecord r;
  r.parent = std::string(key);
  for_each_piece(rest, ';', [&](std::string_view sub) {
    auto parts = split_key(sub);
    if (parts.parent != key) {
      fail_parse("sub-feature with foreign parent", sub);
    }
    r.subs.emplace_back(sub);
  });
  if (r.subs.empty()) fail_parse("empty sub-feature list", value);
  return r;
}

SubFeatureListRecord parse_subfeature_list(std::string_view line) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_subfeature_list_kv(key, value);
}

char type_tag(const TaggedRecord& record) {
  switch (record.index()) {
    case 0:
      return 'p';
    case 1:
      return 'i';
    case 2:
      return 'q';
    default:
      return 'e';
  }
}

TaggedRecord parse_tagged_kv(std::string_view key, std::string_view value,
                             std::string_view expected_tags) {
  if (value.empty()) fail_parse("empty value", key);
  char tag = value[0];
  if (tag != 'p' && tag != 'i' && tag != 'q' && tag != 'e') {
    fail_parse("unknown type tag", value);
  }
  if (expected_tags.find(tag) == std::string_view::npos) {
    fail_parse("unexpected type tag for this stage", value);
  }
  switch (tag) {
    case 'p':
      return parse_parameter_kv(key, value);
    case 'i':
      return parse_invert_index_kv(key, value);
    case 'q':
      return parse_gradient_kv(key, value);
    default:
      return parse_subfeature_list_kv(key, value);
  }
}

TaggedRecord parse_tagged(std::string_view line,
                          std::string_view expected_tags) {
  std::string_view value;
  auto key = key_part(line, value);
  return parse_tagged_kv(key, value, expected_tags);
}

// ---------------------------------------------------------------------------
// docId derivation

std::string derive_doc_id(std::uint64_t split_index, std::uint64_t line_index) {
  constexpr std::uint64_t kLineBits = 36;
  if (split_index >= (std::uint64_t(1) << 23) ||
      line_index >= (std::uint64_t(1) << kLineBits)) {
    throw std::invalid_argument("doc id coordinates out of range");
  }
  std::uint64_t v = (split_index << kLineBits) | line_index;
  std::string id(kDocIdLength, '0');
  for (std::size_t k = kDocIdLength; k-- > 0 && v != 0;) {
    id[k] = kBase62[v % 62];
    v /= 62;
  }
  return id;
}

}  // namespace dpmr::records

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// On-disk record formats exchanged between pipeline stages. Every stage file
// is UTF-8 text, one record per line, "key<TAB>value". Value fields are
// space-separated, doc units colon-separated, sub-feature lists
// semicolon-separated. Serialization is byte-exact: reals use the shortest
// round-trip decimal form, so stage outputs are deterministic.

namespace dpmr::records {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SerializeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Characters that may never appear inside a feature string: they are the
// field separators of the stage formats.
inline constexpr std::string_view kReservedChars = "\t :;|\n";

bool is_valid_feature(std::string_view feature);

// A key is either a plain feature or a sub-feature "i_N|parent".
bool is_valid_key(std::string_view key);

// Parsed form of a key. Plain keys come back as {1, 1, key}. The parent view
// aliases the argument passed to split_key.
struct KeyParts {
  std::uint64_t index = 1;       // i, 1-based
  std::uint64_t num_shards = 1;  // N
  std::string_view parent;
};

// Splits "i_N|parent" into its parts; a key without '|' is its own parent.
// Throws ParseError for malformed prefixes (non-integers, zero, i > N).
KeyParts split_key(std::string_view key);

// Shortest decimal representation that parses back to the same double.
std::string format_real(double value);
void append_real(std::string& out, double value);

// Strict full-string parses; throw ParseError on trailing garbage.
double parse_real(std::string_view text);
std::uint64_t parse_count(std::string_view text);  // >= 1
int parse_label(std::string_view text);            // 0 or 1

// ---------------------------------------------------------------------------
// Domain types

struct Token {
  std::string feature;
  std::uint64_t count = 1;

  bool operator==(const Token&) const = default;
};

// One training/test document. docId is assigned at ingest time, not stored
// in the corpus line.
struct Sample {
  std::string doc_id;
  int label = 0;
  std::vector<Token> tokens;

  bool operator==(const Sample&) const = default;
};

struct ParameterRecord {
  std::string feature;
  double value = 0;

  bool operator==(const ParameterRecord&) const = default;
};

// (docId, count, label) triple: one sample's occurrence of one feature.
struct DocUnit {
  std::string doc_id;
  std::uint64_t count = 1;
  int label = 0;

  bool operator==(const DocUnit&) const = default;
};

struct InvertIndexRecord {
  std::string key;  // feature or sub-feature
  std::uint64_t num = 0;
  std::vector<DocUnit> doc_units;

  bool operator==(const InvertIndexRecord&) const = default;
};

struct DistributedParamRecord {
  std::string doc_id;
  int label = 0;
  std::string feature;  // the incoming key, sub-feature form preserved
  std::uint64_t count = 1;
  double para = 0;

  bool operator==(const DistributedParamRecord&) const = default;
};

struct SufficientEntry {
  int label = 0;
  std::string feature;
  std::uint64_t count = 1;
  double para = 0;

  bool operator==(const SufficientEntry&) const = default;
};

// A sample enriched with the current parameter of each of its features;
// inference needs no external lookup.
struct SufficientSample {
  std::string doc_id;
  std::vector<SufficientEntry> entries;

  bool operator==(const SufficientSample&) const = default;
};

struct GradientRecord {
  std::string feature;
  double grad = 0;

  bool operator==(const GradientRecord&) const = default;
};

struct SubFeatureListRecord {
  std::string parent;
  std::vector<std::string> subs;

  bool operator==(const SubFeatureListRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Serialization. Each produces the full "key\tvalue" line (no newline);
// *_value produces just the value part used by job emitters.
// Throws SerializeError when a field holds a reserved character or a
// non-finite real, naming the field and the offending character.

std::string serialize(const ParameterRecord&);
std::string serialize(const InvertIndexRecord&);
std::string serialize(const DistributedParamRecord&);
std::string serialize(const SufficientSample&);
std::string serialize(const GradientRecord&);
std::string serialize(const SubFeatureListRecord&);
std::string serialize(const Sample&);  // corpus line "label\tf:c f:c ..."

std::string value_of(const ParameterRecord&);
std::string value_of(const InvertIndexRecord&);
std::string value_of(const DistributedParamRecord&);
std::string value_of(const SufficientSample&);
std::string value_of(const GradientRecord&);
std::string value_of(const SubFeatureListRecord&);

std::string unit_text(const DocUnit&);  // "docId:count:label"

// ---------------------------------------------------------------------------
// Parsing. Full-line parsers split at the first tab; *_kv variants take the
// pieces a reducer already has. All throw ParseError with the offending text.

Sample parse_sample(std::string_view line);

ParameterRecord parse_parameter(std::string_view line);
ParameterRecord parse_parameter_kv(std::string_view key, std::string_view value);
InvertIndexRecord parse_invert_index(std::string_view line);
InvertIndexRecord parse_invert_index_kv(std::string_view key, std::string_view value);
DistributedParamRecord parse_distributed_param(std::string_view line);
DistributedParamRecord parse_distributed_param_kv(std::string_view key, std::string_view value);
SufficientSample parse_sufficient_sample(std::string_view line);
SufficientSample parse_sufficient_sample_kv(std::string_view key, std::string_view value);
GradientRecord parse_gradient(std::string_view line);
GradientRecord parse_gradient_kv(std::string_view key, std::string_view value);
SubFeatureListRecord parse_subfeature_list(std::string_view line);
SubFeatureListRecord parse_subfeature_list_kv(std::string_view key, std::string_view value);
DocUnit parse_unit(std::string_view text);

// Tagged records share reduce stages and are told apart by their type tag:
// 'p' parameter, 'i' invert index, 'q' gradient, 'e' sub-feature list.
using TaggedRecord = std::variant<ParameterRecord, InvertIndexRecord,
                                  GradientRecord, SubFeatureListRecord>;

char type_tag(const TaggedRecord&);

// Parses a line whose value starts with a type tag, restricted to the tags
// the consuming stage expects (e.g. "pi" for the distribute reducer).
// Unknown tags and tags outside `expected_tags` are ParseErrors.
TaggedRecord parse_tagged(std::string_view line, std::string_view expected_tags);
TaggedRecord parse_tagged_kv(std::string_view key, std::string_view value,
                             std::string_view expected_tags);

// ---------------------------------------------------------------------------
// Deterministic docId: base-62 of (split_index, line_index), zero-padded to
// 10 characters. Replaces the random id of the original formulation so runs
// are reproducible and ids are unique by construction.

inline constexpr std::size_t kDocIdLength = 10;

std::string derive_doc_id(std::uint64_t split_index, std::uint64_t line_index);

}  // namespace dpmr::records

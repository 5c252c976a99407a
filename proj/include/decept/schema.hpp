#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace decept::schema {

// ---------------------------------------------------------------------------
// Records

enum class Prediction { deceptive, truthful };
std::string_view to_string(Prediction p);

// One audit record: four ';'-separated fields on a single line.
struct AuditReport {
  std::string video_cues;
  std::string audio_cues;
  std::string reasoning;
  Prediction prediction = Prediction::deceptive;
  std::string raw_line;
};

struct ParseIssue {
  enum class Kind {
    field_count,         // fewer than 4 segments
    empty_field,         // a field is empty after trimming
    unknown_prediction,  // final field not deceptive/truthful
    internal_semicolon,  // more than 4 segments
  };
  Kind kind = Kind::field_count;
  // Offending 0-based segment for empty_field/unknown_prediction; the
  // observed segment count for the two count-related kinds.
  std::size_t segment = 0;
  std::string message;
};

using ParseResult = std::variant<AuditReport, ParseIssue>;

// Fields may carry their canonical labels ("Video Cues:", "Audio Cues:",
// "Reasoning:", "Prediction:", case-insensitive); when both cue fields are
// labeled they may appear in either order and are normalized to
// video-first. The prediction is matched case-insensitively.
ParseResult parse_report(std::string_view line);

// Canonical single-line form; parse(serialize(r)) reproduces r, and
// serialize(parse(line)) reproduces a canonical line byte-exactly.
std::string serialize(const AuditReport& r);

// ---------------------------------------------------------------------------
// Audit taxonomy tags

enum class CueTag { correct, counterfactual, non_existent };
enum class ReasoningTag { correct, false_cue, incoherent, single_cue };
std::string_view to_string(CueTag t);
std::string_view to_string(ReasoningTag t);
CueTag cue_tag_from(std::string_view s);  // throws ContractError
ReasoningTag reasoning_tag_from(std::string_view s);

struct AuditTags {
  CueTag visual = CueTag::correct;
  CueTag acoustic = CueTag::correct;
  ReasoningTag reasoning = ReasoningTag::correct;
};

// ---------------------------------------------------------------------------
// Similarity and filtering

// Cosine similarity of character-3-gram counts after lowercasing and
// whitespace normalization. Two empty strings score 1, empty against
// non-empty scores 0.
double similarity(std::string_view a, std::string_view b);

struct Record {
  std::string id;
  std::string line;
  std::optional<AuditTags> tags;
};

struct Drop {
  std::string id;
  std::string reason;  // "format" or "duplicate"
  std::string detail;
};

struct FilterReport {
  std::vector<std::string> kept;
  std::vector<Drop> dropped;
  std::size_t format_drops = 0;
  std::size_t duplicate_drops = 0;
};

// Schema validation only: drops records whose line fails parse_report.
FilterReport validate_rules(const std::vector<Record>& records);

// Greedy in-order near-duplicate removal: a record is dropped when its
// similarity to any already-kept record reaches the threshold.
FilterReport dedup_filter(const std::vector<Record>& records,
                          double threshold = 0.95);

// Schema validation followed by near-duplicate removal of the survivors.
FilterReport filter_records(const std::vector<Record>& records,
                            double threshold = 0.95);

// ---------------------------------------------------------------------------
// Audit statistics

struct TaxonomySummary {
  std::size_t n = 0;
  std::map<std::string, std::size_t> visual_counts, acoustic_counts,
      reasoning_counts;
  std::map<std::string, double> visual_fracs, acoustic_fracs, reasoning_fracs;
};

// Counts and fractions per axis; an empty input yields an empty summary.
TaxonomySummary audit_stats(const std::vector<AuditTags>& tags);

struct LengthStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  std::size_t min = 0, max = 0;
  std::map<std::size_t, std::size_t> histogram;
};

// Whitespace-delimited word counts of the reasoning field.
LengthStats length_stats(const std::vector<AuditReport>& reports);

// ---------------------------------------------------------------------------
// Corpus I/O

// Plain text (one record per line, blank lines skipped, ids are 1-based
// line numbers) or JSON Lines ({"id", "line", optional "tags"}), chosen by
// whether the first non-space byte is '{'.
std::vector<Record> load_records(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const FilterReport& r);
nlohmann::ordered_json to_json(const TaxonomySummary& s);
nlohmann::ordered_json to_json(const LengthStats& s);

// ---------------------------------------------------------------------------
// Dataset manifests

struct ManifestEntry {
  std::string edition;
  std::uint64_t total = 0;
  std::uint64_t deceptive = 0;
  std::uint64_t truthful = 0;
};

// CSV with the exact header "edition,total,deceptive,truthful"; malformed
// content raises ContractError naming the row.
std::vector<ManifestEntry> load_manifest_csv(const std::filesystem::path& path);

struct ManifestCheck {
  bool pass = true;
  bool empty = false;
  std::vector<std::string> violations;
  std::uint64_t grand_total = 0, grand_deceptive = 0, grand_truthful = 0;
};

// Per-edition and overall consistency (total = deceptive + truthful), plus
// an optional deceptive:truthful ratio such as 2:1. Violations are
// returned, not thrown.
ManifestCheck validate_manifest(
    const std::vector<ManifestEntry>& entries,
    std::optional<std::pair<std::uint64_t, std::uint64_t>> ratio = {});

}  // namespace decept::schema

#include "decept/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "decept/error.hpp"

namespace decept::schema {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Strips a recognized "Label:" prefix (case-insensitive); returns whether
// one of the given labels matched.
bool strip_label(std::string& field, std::initializer_list<const char*> labels,
                 std::string* which = nullptr) {
  std::string low = lower(field);
  for (const char* label : labels) {
    std::string want = lower(label);
    if (low.rfind(want, 0) == 0) {
      field = trim(std::string_view(field).substr(want.size()));
      if (which) *which = want;
      return true;
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(Prediction p) {
  return p == Prediction::deceptive ? "deceptive" : "truthful";
}

ParseResult parse_report(std::string_view line) {
  std::vector<std::string> segs = split(line, ';');
  if (segs.size() < 4)
    return ParseIssue{ParseIssue::Kind::field_count, segs.size(),
                      "expected 4 ';'-separated fields, got " +
                          std::to_string(segs.size())};
  if (segs.size() > 4)
    return ParseIssue{ParseIssue::Kind::internal_semicolon, segs.size(),
                      "got " + std::to_string(segs.size()) +
                          " segments; semicolons inside fields are not allowed"};

  for (auto& s : segs) s = trim(s);

  std::string label0, label1;
  bool l0 = strip_label(segs[0], {"video cues:", "audio cues:"}, &label0);
  bool l1 = strip_label(segs[1], {"video cues:", "audio cues:"}, &label1);
  strip_label(segs[2], {"reasoning:"});
  strip_label(segs[3], {"prediction:"});

  // Labeled cue fields may arrive audio-first; normalize to video-first.
  bool swapped = l0 && l1 && label0 == "audio cues:" && label1 == "video cues:";

  for (std::size_t i = 0; i < 4; ++i)
    if (segs[i].empty())
      return ParseIssue{ParseIssue::Kind::empty_field, i,
                        "field " + std::to_string(i + 1) + " is empty"};

  std::string pred = lower(segs[3]);
  AuditReport r;
  if (pred == "deceptive")
    r.prediction = Prediction::deceptive;
  else if (pred == "truthful")
    r.prediction = Prediction::truthful;
  else
    return ParseIssue{ParseIssue::Kind::unknown_prediction, 3,
                      "prediction must be deceptive or truthful, got '" +
                          segs[3] + "'"};

  r.video_cues = swapped ? segs[1] : segs[0];
  r.audio_cues = swapped ? segs[0] : segs[1];
  r.reasoning = segs[2];
  r.raw_line = std::string(line);
  return r;
}

std::string serialize(const AuditReport& r) {
  return "Video Cues: " + r.video_cues + "; Audio Cues: " + r.audio_cues +
         "; Reasoning: " + r.reasoning +
         "; Prediction: " + std::string(to_string(r.prediction));
}

// ---------------------------------------------------------------------------
// Similarity

namespace {

std::string normalize_for_similarity(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::unordered_map<std::string, std::size_t> trigram_counts(
    const std::string& s) {
  std::unordered_map<std::string, std::size_t> counts;
  if (s.size() < 3) {
    counts[s] += 1;
    return counts;
  }
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) counts[s.substr(i, 3)] += 1;
  return counts;
}

}  // namespace

double similarity(std::string_view a, std::string_view b) {
  std::string na = normalize_for_similarity(a);
  std::string nb = normalize_for_similarity(b);
  if (na.empty() && nb.empty()) return 1.0;
  if (na.empty() || nb.empty()) return 0.0;
  auto ca = trigram_counts(na);
  auto cb = trigram_counts(nb);
  double dot = 0.0, qa = 0.0, qb = 0.0;
  for (const auto& [gram, n] : ca) {
    qa += static_cast<double>(n) * static_cast<double>(n);
    auto it = cb.find(gram);
    if (it != cb.end())
      dot += static_cast<double>(n) * static_cast<double>(it->second);
  }
  for (const auto& [gram, n] : cb)
    qb += static_cast<double>(n) * static_cast<double>(n);
  return dot / (std::sqrt(qa) * std::sqrt(qb));
}

// ---------------------------------------------------------------------------
// Filters

FilterReport validate_rules(const std::vector<Record>& records) {
  FilterReport report;
  for (const Record& rec : records) {
    ParseResult res = parse_report(rec.line);
    if (std::holds_alternative<AuditReport>(res)) {
      report.kept.push_back(rec.id);
    } else {
      const ParseIssue& issue = std::get<ParseIssue>(res);
      report.dropped.push_back({rec.id, "format", issue.message});
      ++report.format_drops;
    }
  }
  return report;
}

namespace {

// Shared greedy pass; `eligible` marks records that survived upstream
// filtering.
void dedup_into(const std::vector<Record>& records,
                const std::vector<bool>& eligible, double threshold,
                FilterReport& report) {
  std::vector<const std::string*> kept_lines;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!eligible[i]) continue;
    bool dup = false;
    for (const std::string* line : kept_lines) {
      if (similarity(records[i].line, *line) >= threshold) {
        dup = true;
        break;
      }
    }
    if (dup) {
      report.dropped.push_back({records[i].id, "duplicate",
                                "similarity >= threshold against a kept record"});
      ++report.duplicate_drops;
    } else {
      report.kept.push_back(records[i].id);
      kept_lines.push_back(&records[i].line);
    }
  }
}

}  // namespace

FilterReport dedup_filter(const std::vector<Record>& records,
                          double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ContractError("dedup threshold must lie in (0, 1]");
  FilterReport report;
  dedup_into(records, std::vector<bool>(records.size(), true), threshold,
             report);
  return report;
}

FilterReport filter_records(const std::vector<Record>& records,
                            double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ContractError("dedup threshold must lie in (0, 1]");
  FilterReport report;
  std::vector<bool> eligible(records.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ParseResult res = parse_report(records[i].line);
    if (std::holds_alternative<AuditReport>(res)) {
      eligible[i] = true;
    } else {
      const ParseIssue& issue = std::get<ParseIssue>(res);
      report.dropped.push_back({records[i].id, "format", issue.message});
      ++report.format_drops;
    }
  }
  dedup_into(records, eligible, threshold, report);
  return report;
}

// ---------------------------------------------------------------------------
// Taxonomy

std::string_view to_string(CueTag t) {
  switch (t) {
    case CueTag::correct: return "Correct";
    case CueTag::counterfactual: return "Counterfactual";
    case CueTag::non_existent: return "NonExistent";
  }
  return "";
}

std::string_view to_string(ReasoningTag t) {
  switch (t) {
    case ReasoningTag::correct: return "Correct";
    case ReasoningTag::false_cue: return "FalseCue";
    case ReasoningTag::incoherent: return "Incoherent";
    case ReasoningTag::single_cue: return "SingleCue";
  }
  return "";
}

namespace {

std::string tag_key(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '-' && c != '_' && !std::isspace(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

CueTag cue_tag_from(std::string_view s) {
  std::string k = tag_key(s);
  if (k == "correct") return CueTag::correct;
  if (k == "counterfactual") return CueTag::counterfactual;
  if (k == "nonexistent") return CueTag::non_existent;
  throw ContractError("unknown cue tag '" + std::string(s) + "'");
}

ReasoningTag reasoning_tag_from(std::string_view s) {
  std::string k = tag_key(s);
  if (k == "correct") return ReasoningTag::correct;
  if (k == "falsecue") return ReasoningTag::false_cue;
  if (k == "incoherent") return ReasoningTag::incoherent;
  if (k == "singlecue") return ReasoningTag::single_cue;
  throw ContractError("unknown reasoning tag '" + std::string(s) + "'");
}

TaxonomySummary audit_stats(const std::vector<AuditTags>& tags) {
  TaxonomySummary s;
  s.n = tags.size();
  if (tags.empty()) return s;
  for (const AuditTags& t : tags) {
    s.visual_counts[std::string(to_string(t.visual))] += 1;
    s.acoustic_counts[std::string(to_string(t.acoustic))] += 1;
    s.reasoning_counts[std::string(to_string(t.reasoning))] += 1;
  }
  double n = static_cast<double>(s.n);
  for (const auto& [k, v] : s.visual_counts)
    s.visual_fracs[k] = static_cast<double>(v) / n;
  for (const auto& [k, v] : s.acoustic_counts)
    s.acoustic_fracs[k] = static_cast<double>(v) / n;
  for (const auto& [k, v] : s.reasoning_counts)
    s.reasoning_fracs[k] = static_cast<double>(v) / n;
  return s;
}

LengthStats length_stats(const std::vector<AuditReport>& reports) {
  LengthStats s;
  std::vector<std::size_t> counts;
  for (const AuditReport& r : reports) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : r.reasoning) {
      bool space = std::isspace(static_cast<unsigned char>(c));
      if (!space && !in_word) ++words;
      in_word = !space;
    }
    counts.push_back(words);
  }
  if (counts.empty()) return s;
  s.count = counts.size();
  std::sort(counts.begin(), counts.end());
  s.min = counts.front();
  s.max = counts.back();
  double sum = 0.0;
  for (std::size_t c : counts) {
    sum += static_cast<double>(c);
    s.histogram[c] += 1;
  }
  s.mean = sum / static_cast<double>(counts.size());
  std::size_t mid = counts.size() / 2;
  s.median = counts.size() % 2
                 ? static_cast<double>(counts[mid])
                 : (static_cast<double>(counts[mid - 1]) +
                    static_cast<double>(counts[mid])) / 2.0;
  return s;
}

// ---------------------------------------------------------------------------
// Corpus I/O

std::vector<Record> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::size_t first = content.find_first_not_of(" \t\r\n");
  bool jsonl = first != std::string::npos && content[first] == '{';

  std::vector<Record> records;
  std::size_t line_no = 0;
  for (std::string& line : split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!jsonl) {
      records.push_back({std::to_string(line_no), line, std::nullopt});
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("line " + std::to_string(line_no) +
                          ": invalid JSON record: " + e.what());
    }
    Record rec;
    if (!j.contains("id") || !j.contains("line"))
      throw ContractError("line " + std::to_string(line_no) +
                          ": JSON record needs 'id' and 'line'");
    rec.id = j["id"].is_string() ? j["id"].get<std::string>()
                                 : j["id"].dump();
    rec.line = j["line"].get<std::string>();
    if (j.contains("tags")) {
      const auto& t = j["tags"];
      AuditTags tags;
      tags.visual = cue_tag_from(t.at("visual").get<std::string>());
      tags.acoustic = cue_tag_from(t.at("acoustic").get<std::string>());
      tags.reasoning = reasoning_tag_from(t.at("reasoning").get<std::string>());
      rec.tags = tags;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

nlohmann::ordered_json to_json(const FilterReport& r) {
  nlohmann::ordered_json j;
  j["kept"] = r.kept;
  nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
  for (const Drop& d : r.dropped)
    dropped.push_back({{"id", d.id}, {"reason", d.reason}, {"detail", d.detail}});
  j["dropped"] = std::move(dropped);
  j["counts"] = {{"kept", r.kept.size()},
                 {"format", r.format_drops},
                 {"duplicate", r.duplicate_drops}};
  return j;
}

nlohmann::ordered_json to_json(const TaxonomySummary& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["visual"] = {{"counts", s.visual_counts}, {"fractions", s.visual_fracs}};
  j["acoustic"] = {{"counts", s.acoustic_counts},
                   {"fractions", s.acoustic_fracs}};
  j["reasoning"] = {{"counts", s.reasoning_counts},
                    {"fractions", s.reasoning_fracs}};
  return j;
}

nlohmann::ordered_json to_json(const LengthStats& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["min"] = s.min;
  j["max"] = s.max;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [words, n] : s.histogram) hist[std::to_string(words)] = n;
  j["histogram"] = std::move(hist);
  return j;
}

// ---------------------------------------------------------------------------
// Manifests

std::vector<ManifestEntry> load_manifest_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(line, ',');
    for (auto& f : fields) f = trim(f);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"edition", "total", "deceptive",
                                             "truthful"})
        throw ContractError("manifest row " + std::to_string(row) +
                            ": expected header edition,total,deceptive,truthful");
      header_seen = true;
      continue;
    }
    if (fields.size() != 4)
      throw ContractError("manifest row " + std::to_string(row) +
                          ": expected 4 fields, got " +
                          std::to_string(fields.size()));
    ManifestEntry e;
    e.edition = fields[0];
    if (e.edition.empty())
      throw ContractError("manifest row " + std::to_string(row) +
                          ": empty edition name");
    auto parse_count = [&](const std::string& s, const char* what) {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ContractError("manifest row " + std::to_string(row) + ": " +
                            what + " must be a non-negative integer, got '" +
                            s + "'");
      return static_cast<std::uint64_t>(std::stoull(s));
    };
    e.total = parse_count(fields[1], "total");
    e.deceptive = parse_count(fields[2], "deceptive");
    e.truthful = parse_count(fields[3], "truthful");
    entries.push_back(std::move(e));
  }
  if (!header_seen)
    throw ContractError("manifest is missing the header row");
  return entries;
}

ManifestCheck validate_manifest(
    const std::vector<ManifestEntry>& entries,
    std::optional<std::pair<std::uint64_t, std::uint64_t>> ratio) {
  ManifestCheck check;
  if (ratio && (ratio->first == 0 || ratio->second == 0))
    throw ContractError("ratio parts must be positive");
  if (entries.empty()) {
    check.empty = true;
    return check;
  }
  for (const ManifestEntry& e : entries) {
    check.grand_total += e.total;
    check.grand_deceptive += e.deceptive;
    check.grand_truthful += e.truthful;
    if (e.total != e.deceptive + e.truthful)
      check.violations.push_back(
          e.edition + ": total " + std::to_string(e.total) +
          " != deceptive " + std::to_string(e.deceptive) + " + truthful " +
          std::to_string(e.truthful));
    if (ratio && e.deceptive * ratio->second != e.truthful * ratio->first)
      check.violations.push_back(
          e.edition + ": deceptive:truthful is " + std::to_string(e.deceptive) +
          ":" + std::to_string(e.truthful) + ", expected " +
          std::to_string(ratio->first) + ":" + std::to_string(ratio->second));
  }
  if (check.grand_total != check.grand_deceptive + check.grand_truthful)
    check.violations.push_back("grand totals are inconsistent");
  if (ratio &&
      check.grand_deceptive * ratio->second != check.grand_truthful * ratio->first)
    check.violations.push_back("grand totals violate the expected ratio");
  check.pass = check.violations.empty();
  return check;
}

}  // namespace decept::schema

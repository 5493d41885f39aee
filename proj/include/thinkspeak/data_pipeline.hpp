#pragma once

// Construction and verification of interleaved reasoning/response records.
//
// Verification is rule based. A record passes when
//   * no response numeral is emitted before the reasoning that derives it
//     (the numeral must already have appeared in the question or among the
//     reasoning tokens emitted earlier in interleaved order);
//   * the first response block is numeral free (delayed onset);
//   * reasoning/response token ratio lies inside the configured band.
// A record whose final answer never appears in its reasoning is quarantined
// rather than failed.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/interleave_codec.hpp"
#include "thinkspeak/run_config.hpp"
#include "thinkspeak/tokenizer.hpp"

namespace thinkspeak {

struct MathRecord {
  std::string id;
  std::string question_text;
  std::string spoken_question_text;
  std::string reasoning_text;
  std::string response_text;
  std::string final_answer;
  nlohmann::json extra = nlohmann::json::object();  // unknown input fields, preserved

  bool training_eligible() const noexcept {
    return !trim(reasoning_text).empty() && !trim(response_text).empty();
  }
};

enum class Verdict : std::uint8_t { Pass, Fail, Quarantine };

constexpr std::string_view verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Quarantine: return "quarantine";
  }
  return "?";
}

enum class FailedCheck : std::uint8_t { Overshoot, DelayedOnset, LengthRatio, Judge };

constexpr std::string_view check_name(FailedCheck c) noexcept {
  switch (c) {
    case FailedCheck::Overshoot: return "overshoot";
    case FailedCheck::DelayedOnset: return "delayed-onset";
    case FailedCheck::LengthRatio: return "length-ratio";
    case FailedCheck::Judge: return "judge";
  }
  return "?";
}

struct OvershootViolation {
  std::size_t response_position;  // index in the response stream
  std::size_t sequence_position;  // index in the interleaved sequence
  std::string surface;
  std::optional<std::size_t> earliest_reasoning_position;

  friend bool operator==(const OvershootViolation&, const OvershootViolation&) = default;
};

struct VerificationReport {
  std::string record_id;
  std::vector<OvershootViolation> overshoot_violations;
  bool delayed_onset_ok = false;
  std::optional<std::string> onset_phrase;  // lexicon phrase the response opens with
  double length_ratio = 0.0;
  Verdict verdict = Verdict::Fail;
  std::vector<FailedCheck> failed_checks;  // in priority order
  std::string note;                        // quarantine reason
  std::size_t n_response = 0;
  std::size_t n_reasoning = 0;

  std::optional<FailedCheck> primary_failure() const {
    if (failed_checks.empty()) return std::nullopt;
    return failed_checks.front();
  }
};

class QuarantineSignal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VerificationFailed : public std::runtime_error {
 public:
  explicit VerificationFailed(VerificationReport report)
      : std::runtime_error("record '" + report.record_id + "' did not pass verification"),
        report_(std::move(report)) {}
  const VerificationReport& report() const noexcept { return report_; }

 private:
  VerificationReport report_;
};

struct OnsetLexicon {
  std::vector<std::string> phrases;
};

inline OnsetLexicon default_onset_lexicon() {
  return {{"sure", "okay", "ok", "alright", "all right", "well", "so", "hmm", "let me",
           "let's see", "great question", "good question", "got it", "right"}};
}

struct VerificationOptions {
  double min_length_ratio = 1.2;
  double max_length_ratio = 4.0;
  OnsetLexicon lexicon = default_onset_lexicon();
  // Optional external consistency check, consulted after the rule checks.
  // Returning false fails the record. None is bundled.
  std::function<bool(const MathRecord&, const InterleavedSequence&)> semantic_judge;
};

struct TrainingRecord {
  std::string record_id;
  InterleavedSequence tokens;  // interleaved body followed by End
  std::vector<Token> prompt_tokens;
  nlohmann::json extra = nlohmann::json::object();
};

namespace detail {

struct EncodedRecord {
  std::vector<Token> question;  // question_text then spoken_question_text
  std::vector<Token> reasoning;
  std::vector<Token> response;
};

template <Tokenizer Tok>
EncodedRecord encode_record(const MathRecord& r, Tok& tokenizer) {
  EncodedRecord e;
  e.question = tokenizer.encode(r.question_text);
  auto spoken = tokenizer.encode(r.spoken_question_text);
  e.question.insert(e.question.end(), spoken.begin(), spoken.end());
  e.reasoning = with_role(tokenizer.encode(r.reasoning_text), TokenRole::Reasoning);
  e.response = with_role(tokenizer.encode(r.response_text), TokenRole::Response);
  return e;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Walks the interleaved emission order and reports every response numeral
/// that was not yet available from the question or the emitted reasoning.
inline std::vector<OvershootViolation> find_overshoot(const std::vector<Token>& question,
                                                      const StreamPair& streams,
                                                      const InterleaveConfig& config) {
  std::unordered_set<std::string> known;
  for (const auto& t : question) {
    if (auto n = canonical_numeral(t.surface())) known.insert(*n);
  }
  const auto seq = interleave(streams, config);

  std::vector<OvershootViolation> out;
  std::size_t resp_pos = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Token& t = seq.tokens[i];
    if (t.role() == TokenRole::Reasoning) {
      if (auto n = canonical_numeral(t.surface())) known.insert(*n);
    } else if (t.role() == TokenRole::Response) {
      if (auto n = canonical_numeral(t.surface()); n && !known.contains(*n)) {
        std::optional<std::size_t> earliest;
        const auto& reasoning = streams.reasoning();
        for (std::size_t k = 0; k < reasoning.size(); ++k) {
          if (canonical_numeral(reasoning[k].surface()) == n) {
            earliest = k;
            break;
          }
        }
        out.push_back({resp_pos, i, std::string(trim(t.surface())), earliest});
      }
      ++resp_pos;
    }
  }
  return out;
}

/// True iff the response is non-empty and its first emitted block (the first
/// p response tokens) holds no numeral. A lexicon phrase at the start of the
/// response is reported through `matched` but does not relax the rule.
template <Tokenizer Tok>
bool check_delayed_onset(const MathRecord& record, const OnsetLexicon& lexicon,
                         const InterleaveConfig& config, Tok& tokenizer,
                         std::optional<std::string>* matched = nullptr) {
  const auto response = tokenizer.encode(record.response_text);
  if (matched) {
    matched->reset();
    const std::string head = detail::lowercase(normalize_whitespace(record.response_text));
    for (const auto& phrase : lexicon.phrases) {
      const std::string p = detail::lowercase(phrase);
      if (head.size() >= p.size() && head.compare(0, p.size(), p) == 0 &&
          (head.size() == p.size() || !std::isalnum(static_cast<unsigned char>(head[p.size()])))) {
        if (!*matched || matched->value().size() < phrase.size()) *matched = phrase;
      }
    }
  }
  if (response.empty()) return false;
  const std::size_t n = std::min(config.p, response.size());
  return std::none_of(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(n),
                      [](const Token& t) { return is_numeric_token(t); });
}

template <Tokenizer Tok>
double length_ratio(const MathRecord& record, Tok& tokenizer) {
  const auto reasoning = tokenizer.encode(record.reasoning_text);
  const auto response = tokenizer.encode(record.response_text);
  if (response.empty()) throw std::invalid_argument("length_ratio: empty response");
  return static_cast<double>(reasoning.size()) / static_cast<double>(response.size());
}

namespace detail {

template <Tokenizer Tok>
void require_answer_in_reasoning(const MathRecord& record, const std::vector<Token>& reasoning,
                                 Tok& tokenizer) {
  const auto answer = tokenizer.encode(record.final_answer);
  if (answer.empty()) throw QuarantineSignal("final answer is empty");
  std::vector<std::string> needle;
  for (const auto& t : answer) needle.push_back(canonical_key(t.surface()));
  std::vector<std::string> hay;
  for (const auto& t : reasoning) hay.push_back(canonical_key(t.surface()));
  if (std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) == hay.end()) {
    throw QuarantineSignal("final answer '" + record.final_answer + "' does not occur in reasoning");
  }
}

}  // namespace detail

/// Full verification of one record. The overshoot check runs on the codec's
/// emission order for `config`; the report's verdict also folds in the
/// delayed-onset and length-ratio checks.
///
/// Throws QuarantineSignal when the record is not training eligible or its
/// final answer is missing from the reasoning.
template <Tokenizer Tok>
VerificationReport check_overshoot(const MathRecord& record, const InterleaveConfig& config,
                                   Tok& tokenizer, const VerificationOptions& options = {}) {
  config.validate();
  if (!record.training_eligible()) {
    throw QuarantineSignal("record needs non-empty reasoning and response");
  }
  auto enc = detail::encode_record(record, tokenizer);
  detail::require_answer_in_reasoning(record, enc.reasoning, tokenizer);

  VerificationReport rep;
  rep.record_id = record.id;
  rep.n_reasoning = enc.reasoning.size();
  rep.n_response = enc.response.size();
  const StreamPair streams(std::move(enc.reasoning), std::move(enc.response));
  rep.overshoot_violations = find_overshoot(enc.question, streams, config);
  rep.delayed_onset_ok =
      check_delayed_onset(record, options.lexicon, config, tokenizer, &rep.onset_phrase);
  rep.length_ratio = static_cast<double>(rep.n_reasoning) / static_cast<double>(rep.n_response);

  if (!rep.overshoot_violations.empty()) rep.failed_checks.push_back(FailedCheck::Overshoot);
  if (!rep.delayed_onset_ok) rep.failed_checks.push_back(FailedCheck::DelayedOnset);
  if (rep.length_ratio < options.min_length_ratio || rep.length_ratio > options.max_length_ratio) {
    rep.failed_checks.push_back(FailedCheck::LengthRatio);
  }
  if (options.semantic_judge && !options.semantic_judge(record, interleave(streams, config))) {
    rep.failed_checks.push_back(FailedCheck::Judge);
  }
  rep.verdict = rep.failed_checks.empty() ? Verdict::Pass : Verdict::Fail;
  return rep;
}

/// Like check_overshoot, but quarantine becomes a verdict instead of a throw.
template <Tokenizer Tok>
VerificationReport verify_record(const MathRecord& record, const InterleaveConfig& config,
                                 Tok& tokenizer, const VerificationOptions& options = {}) {
  try {
    return check_overshoot(record, config, tokenizer, options);
  } catch (const QuarantineSignal& q) {
    VerificationReport rep;
    rep.record_id = record.id;
    rep.verdict = Verdict::Quarantine;
    rep.note = q.what();
    return rep;
  }
}

template <Tokenizer Tok>
TrainingRecord build_training_record(const MathRecord& record, const InterleaveConfig& config,
                                     Tok& tokenizer, const VerificationOptions& options = {}) {
  auto rep = verify_record(record, config, tokenizer, options);
  if (rep.verdict != Verdict::Pass) throw VerificationFailed(std::move(rep));

  TrainingRecord tr;
  tr.record_id = record.id;
  tr.extra = record.extra;
  const std::string& spoken =
      record.spoken_question_text.empty() ? record.question_text : record.spoken_question_text;
  tr.prompt_tokens = tokenizer.encode(spoken);
  StreamPair streams(with_role(tokenizer.encode(record.reasoning_text), TokenRole::Reasoning),
                     with_role(tokenizer.encode(record.response_text), TokenRole::Response));
  tr.tokens = interleave(streams, config);
  const std::size_t last_cycle = tr.tokens.empty() ? 0 : tr.tokens.cycle_index.back();
  tr.tokens.push(Token::end(), last_cycle, true);
  return tr;
}

// ---------------------------------------------------------------------------
// Record I/O

class RecordFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline MathRecord parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw RecordFormatError("record is not an object");
  static constexpr const char* kRequired[] = {"id", "question_text", "reasoning_text",
                                              "response_text", "final_answer"};
  for (const char* key : kRequired) {
    if (!j.contains(key) || !j.at(key).is_string()) {
      throw RecordFormatError(std::string("missing or non-string field '") + key + "'");
    }
  }
  MathRecord r;
  r.id = j.at("id").get<std::string>();
  r.question_text = j.at("question_text").get<std::string>();
  r.reasoning_text = j.at("reasoning_text").get<std::string>();
  r.response_text = j.at("response_text").get<std::string>();
  r.final_answer = j.at("final_answer").get<std::string>();
  if (j.contains("spoken_question_text")) {
    if (!j.at("spoken_question_text").is_string()) {
      throw RecordFormatError("non-string field 'spoken_question_text'");
    }
    r.spoken_question_text = j.at("spoken_question_text").get<std::string>();
  }
  if (r.spoken_question_text.empty()) r.spoken_question_text = r.question_text;
  for (const auto& [key, value] : j.items()) {
    if (key != "id" && key != "question_text" && key != "spoken_question_text" &&
        key != "reasoning_text" && key != "response_text" && key != "final_answer") {
      r.extra[key] = value;
    }
  }
  return r;
}

inline std::string loss_mask_string(const std::vector<bool>& mask) {
  std::string s;
  s.reserve(mask.size());
  for (bool b : mask) s.push_back(b ? '1' : '0');
  return s;
}

inline nlohmann::json to_json(const TrainingRecord& tr) {
  nlohmann::json j;
  j["record_id"] = tr.record_id;
  std::vector<TokenId> prompt;
  for (const auto& t : tr.prompt_tokens) prompt.push_back(t.id());
  j["prompt_ids"] = prompt;
  std::vector<TokenId> ids;
  for (const auto& t : tr.tokens.tokens) ids.push_back(t.id());
  j["ids"] = ids;
  j["roles"] = tr.tokens.role_string();
  j["cycle_index"] = tr.tokens.cycle_index;
  j["loss_mask"] = loss_mask_string(tr.tokens.loss_mask);
  if (!tr.extra.empty()) j["extra"] = tr.extra;
  return j;
}

inline nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json j;
  j["record_id"] = r.record_id;
  j["verdict"] = verdict_name(r.verdict);
  std::vector<std::string> failed;
  for (auto c : r.failed_checks) failed.emplace_back(check_name(c));
  j["failed_checks"] = failed;
  auto violations = nlohmann::json::array();
  for (const auto& v : r.overshoot_violations) {
    violations.push_back({{"response_position", v.response_position},
                          {"sequence_position", v.sequence_position},
                          {"surface", v.surface},
                          {"earliest_reasoning_position",
                           v.earliest_reasoning_position
                               ? nlohmann::json(*v.earliest_reasoning_position)
                               : nlohmann::json(nullptr)}});
  }
  j["overshoot_violations"] = violations;
  if (r.verdict != Verdict::Quarantine) {
    j["delayed_onset_ok"] = r.delayed_onset_ok;
    j["onset_phrase"] = r.onset_phrase ? nlohmann::json(*r.onset_phrase) : nlohmann::json(nullptr);
    j["length_ratio"] = r.length_ratio;
    j["n_response"] = r.n_response;
    j["n_reasoning"] = r.n_reasoning;
  } else {
    j["note"] = r.note;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Corpus run

struct Summary {
  std::size_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;

  static Summary of(std::vector<double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const std::size_t mid = values.size() / 2;
    s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
    return s;
  }
};

inline nlohmann::json to_json(const Summary& s) {
  return {{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean},
          {"median", s.median}};
}

/// Each ingested record is counted exactly once, under its verdict and, for
/// failures, its first failed check (overshoot, then onset, then ratio).
struct CorpusStats {
  std::size_t ingested = 0;
  std::size_t passed = 0;
  std::size_t failed_overshoot = 0;
  std::size_t failed_onset = 0;
  std::size_t failed_ratio = 0;
  std::size_t failed_judge = 0;
  std::size_t quarantined = 0;
  std::size_t malformed = 0;  // unparseable lines, not part of `ingested`
  Summary length_ratio;
  Summary response_length;
  Summary reasoning_length;

  std::size_t rejected() const noexcept { return ingested - passed; }
};

inline nlohmann::json to_json(const CorpusStats& s) {
  return {{"ingested", s.ingested},
          {"passed", s.passed},
          {"failed_overshoot", s.failed_overshoot},
          {"failed_onset", s.failed_onset},
          {"failed_ratio", s.failed_ratio},
          {"failed_judge", s.failed_judge},
          {"quarantined", s.quarantined},
          {"malformed", s.malformed},
          {"length_ratio", to_json(s.length_ratio)},
          {"response_length", to_json(s.response_length)},
          {"reasoning_length", to_json(s.reasoning_length)}};
}

struct CorpusOutputs {
  std::optional<std::string> training_path;  // omitted in verify-only runs
  std::string report_path;
  std::optional<std::string> vocab_path;
};

inline CorpusOutputs default_outputs(const std::string& output_path) {
  return {output_path, output_path + ".report.jsonl", output_path + ".vocab"};
}

struct CorpusOptions {
  VerificationOptions verification;
  // Echoed as the first line of every output file.
  nlohmann::json run_config = nlohmann::json::object();
};

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  return out;
}

}  // namespace detail

/// Verifies every record of a line-delimited input file and writes the
/// training records of those that pass, plus a report line per input line.
/// Per-record problems never abort the run; I/O problems throw.
///
/// Records are processed in input order with one tokenizer, so vocabulary
/// ids and all outputs are deterministic for a given input and config.
inline CorpusStats run_corpus(const std::string& input_path, const CorpusOutputs& outputs,
                              const InterleaveConfig& config, const CorpusOptions& options = {}) {
  config.validate();
  std::ifstream in(input_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input file '" + input_path + "'");

  nlohmann::json header = options.run_config;
  if (header.empty()) header = nlohmann::json{{"config", config}};

  std::optional<std::ofstream> training;
  if (outputs.training_path) {
    training = detail::open_output(*outputs.training_path);
    *training << jsonl_header(header) << '\n';
  }
  auto report = detail::open_output(outputs.report_path);
  report << jsonl_header(header) << '\n';

  WordTokenizer tokenizer;
  CorpusStats stats;
  std::vector<double> ratios;
  std::vector<double> resp_lengths;
  std::vector<double> reason_lengths;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    MathRecord record;
    try {
      record = parse_record(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      ++stats.malformed;
      report << nlohmann::json{{"line", line_no}, {"verdict", "malformed"}, {"error", e.what()}}.dump()
             << '\n';
      continue;
    }
    ++stats.ingested;

    auto rep = verify_record(record, config, tokenizer, options.verification);
    nlohmann::json rep_json = to_json(rep);
    rep_json["line"] = line_no;
    if (!record.extra.empty()) rep_json["extra"] = record.extra;
    report << rep_json.dump() << '\n';

    if (rep.verdict == Verdict::Quarantine) {
      ++stats.quarantined;
      continue;
    }
    ratios.push_back(rep.length_ratio);
    resp_lengths.push_back(static_cast<double>(rep.n_response));
    reason_lengths.push_back(static_cast<double>(rep.n_reasoning));
    if (rep.verdict == Verdict::Pass) {
      ++stats.passed;
      if (training) *training << to_json(build_training_record(record, config, tokenizer,
                                                               options.verification))
                                     .dump()
                              << '\n';
      continue;
    }
    switch (*rep.primary_failure()) {
      case FailedCheck::Overshoot: ++stats.failed_overshoot; break;
      case FailedCheck::DelayedOnset: ++stats.failed_onset; break;
      case FailedCheck::LengthRatio: ++stats.failed_ratio; break;
      case FailedCheck::Judge: ++stats.failed_judge; break;
    }
  }
  if (in.bad()) throw std::runtime_error("error reading input file '" + input_path + "'");

  stats.length_ratio = Summary::of(std::move(ratios));
  stats.response_length = Summary::of(std::move(resp_lengths));
  stats.reasoning_length = Summary::of(std::move(reason_lengths));

  if (outputs.vocab_path) {
    auto vocab = detail::open_output(*outputs.vocab_path);
    tokenizer.vocabulary().write(vocab, comment_header(header));
  }
  return stats;
}

inline CorpusStats run_corpus(const std::string& input_path, const std::string& output_path,
                              const InterleaveConfig& config, const CorpusOptions& options = {}) {
  return run_corpus(input_path, default_outputs(output_path), config, options);
}

}  // namespace thinkspeak

#pragma once

// Paradigm comparison tables and plot series.
//
// A comparison row carries a spoken length and optionally a total length and
// latencies. Rows may come from latency runs (lengths in tokens) or from
// external measurements (e.g. word counts). Derived columns:
//   spoken_fraction    spoken / total, when total is known and > 0
//   ratio_vs_baseline  spoken / baseline spoken
//   flag               "< 50%" when ratio_vs_baseline < 0.5

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/latency_sim.hpp"
#include "thinkspeak/run_config.hpp"

namespace thinkspeak {

inline constexpr std::string_view kHalfFlag = "< 50%";

struct ComparisonRow {
  std::string label;
  std::string unit = "tokens";
  double spoken = 0.0;
  std::optional<double> total;
  std::optional<double> first_audio_s;
  std::optional<double> completion_s;
  std::optional<double> estimated_words;

  // Derived by build_comparison.
  std::optional<double> spoken_fraction;
  double ratio_vs_baseline = 1.0;
  std::string flag;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t baseline = 0;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills the derived columns. The baseline is the row labelled
/// `baseline_label`, or the first row when no label is given.
inline ComparisonTable build_comparison(std::vector<ComparisonRow> rows,
                                        const std::optional<std::string>& baseline_label = {}) {
  ComparisonTable table;
  if (rows.empty()) return table;
  if (baseline_label) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const ComparisonRow& r) { return r.label == *baseline_label; });
    if (it == rows.end()) throw SchemaError("baseline row '" + *baseline_label + "' not found");
    table.baseline = static_cast<std::size_t>(it - rows.begin());
  }
  const ComparisonRow& base = rows[table.baseline];
  const std::string base_unit = base.unit;
  const double base_spoken = base.spoken;
  for (auto& r : rows) {
    if (r.unit != base_unit) {
      throw SchemaError("row '" + r.label + "' is in " + r.unit + ", baseline is in " + base_unit);
    }
    if (r.total && *r.total > 0.0) r.spoken_fraction = r.spoken / *r.total;
    r.ratio_vs_baseline = base_spoken > 0.0 ? r.spoken / base_spoken
                                            : (r.spoken > 0.0 ? kNoAudio : 1.0);
    r.flag = r.ratio_vs_baseline < 0.5 ? std::string(kHalfFlag) : std::string();
  }
  table.rows = std::move(rows);
  return table;
}

inline ComparisonRow row_from_report(const LatencyReport& r, std::string label = {},
                                     double tokens_per_word = 0.0) {
  ComparisonRow row;
  row.label = label.empty() ? std::string(paradigm_name(r.paradigm)) : std::move(label);
  row.spoken = static_cast<double>(r.spoken_token_count);
  row.total = static_cast<double>(r.total_generated_tokens);
  row.first_audio_s = r.first_audio_latency_s;
  row.completion_s = r.completion_time_s;
  if (tokens_per_word > 0.0) row.estimated_words = row.spoken / tokens_per_word;
  return row;
}

struct ParadigmComparison {
  std::vector<LatencyReport> reports;  // in kAllParadigms order
  ComparisonTable table;               // baseline is SilentReasoning
  std::vector<double> latency_ratio_vs_silent;
};

/// One closed-form report per paradigm plus derived comparison columns.
/// tokens_per_word converts spoken token counts to estimated words.
inline ParadigmComparison compare_paradigms(std::size_t m, std::size_t n,
                                            const InterleaveConfig& config, const RateModel& rate,
                                            double tokens_per_word = 4.0) {
  if (!(tokens_per_word > 0.0)) throw std::invalid_argument("tokens_per_word must be > 0");
  ParadigmComparison out;
  std::vector<ComparisonRow> rows;
  for (auto p : kAllParadigms) {
    out.reports.push_back(closed_form_latency(p, m, n, config, rate));
    rows.push_back(row_from_report(out.reports.back(), {}, tokens_per_word));
  }
  out.table = build_comparison(std::move(rows),
                               std::string(paradigm_name(DecodeParadigm::SilentReasoning)));
  const double silent = out.reports[2].first_audio_latency_s;
  for (const auto& r : out.reports) {
    const double a = r.first_audio_latency_s;
    if (std::isinf(a) && std::isinf(silent)) {
      out.latency_ratio_vs_silent.push_back(1.0);
    } else {
      out.latency_ratio_vs_silent.push_back(a / silent);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string opt(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : std::string();
}

// JSON numbers cannot hold infinities; they are written as null.
inline nlohmann::json number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json number(const std::optional<double>& v) {
  return v ? number(*v) : nlohmann::json(nullptr);
}

inline std::vector<std::string> cells(const ComparisonRow& r) {
  return {r.label,
          r.unit,
          fixed(r.spoken, 2),
          opt(r.total, 2),
          opt(r.spoken_fraction, 3),
          fixed(r.ratio_vs_baseline, 3),
          r.flag,
          opt(r.first_audio_s, 3),
          opt(r.completion_s, 3),
          opt(r.estimated_words, 1)};
}

inline const std::vector<std::string>& comparison_columns() {
  static const std::vector<std::string> cols = {
      "label", "unit", "spoken", "total", "spoken/total", "ratio", "flag",
      "first_audio_s", "completion_s", "est_words"};
  return cols;
}

}  // namespace detail

// Quotes a delimited-row field when needed.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Left-aligned text table with a dashed rule under the header.
inline void write_aligned(std::ostream& os, const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& row : body) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += "  ";
      out += row[i];
      if (i + 1 < row.size()) out.append(width[i] - row[i].size(), ' ');
    }
    os << out << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& row : body) line(row);
}

inline nlohmann::json to_json(const ComparisonRow& r) {
  return {{"label", r.label},
          {"unit", r.unit},
          {"spoken", r.spoken},
          {"total", detail::number(r.total)},
          {"spoken_fraction", detail::number(r.spoken_fraction)},
          {"ratio_vs_baseline", detail::number(r.ratio_vs_baseline)},
          {"flag", r.flag},
          {"first_audio_latency_s", detail::number(r.first_audio_s)},
          {"completion_time_s", detail::number(r.completion_s)},
          {"estimated_words", detail::number(r.estimated_words)}};
}

/// Writes the table with a run_config header line in the given format.
inline void render_comparison(std::ostream& os, const ComparisonTable& table, OutputFormat format,
                              const nlohmann::json& header) {
  switch (format) {
    case OutputFormat::Jsonl:
      os << jsonl_header(header) << '\n';
      for (const auto& r : table.rows) os << to_json(r).dump() << '\n';
      return;
    case OutputFormat::Delimited: {
      os << comment_header(header) << '\n';
      const auto& cols = detail::comparison_columns();
      for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
      os << '\n';
      for (const auto& r : table.rows) {
        const auto c = detail::cells(r);
        for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << csv_field(c[i]);
        os << '\n';
      }
      return;
    }
    case OutputFormat::Table: {
      os << comment_header(header) << '\n';
      std::vector<std::vector<std::string>> body;
      for (const auto& r : table.rows) body.push_back(detail::cells(r));
      write_aligned(os, detail::comparison_columns(), body);
      return;
    }
  }
}

/// Tab-separated plot series: one line per row, x = row index.
/// Columns: index, label, spoken, total, spoken_fraction, ratio_vs_baseline.
/// Missing values are written as "nan".
inline void write_plot_series(std::ostream& os, const ComparisonTable& table,
                              const nlohmann::json& header) {
  os << comment_header(header) << '\n';
  os << "index\tlabel\tspoken\ttotal\tspoken_fraction\tratio_vs_baseline\n";
  auto v = [](const std::optional<double>& x) { return x ? detail::fixed(*x, 6) : "nan"; };
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    os << i << '\t' << r.label << '\t' << detail::fixed(r.spoken, 6) << '\t' << v(r.total) << '\t'
       << v(r.spoken_fraction) << '\t' << detail::fixed(r.ratio_vs_baseline, 6) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Latency report rows

inline nlohmann::json to_json(const LatencyReport& r) {
  auto underruns = nlohmann::json::array();
  for (const auto& u : r.underrun_events) {
    underruns.push_back({{"time_s", u.time_s}, {"deficit_tokens", u.deficit_tokens}});
  }
  return {{"paradigm", paradigm_name(r.paradigm)},
          {"first_audio_latency_s", detail::number(r.first_audio_latency_s)},
          {"first_playback_s", detail::number(r.first_playback_s)},
          {"completion_time_s", r.completion_time_s},
          {"generation_time_s", r.generation_time_s},
          {"spoken_token_count", r.spoken_token_count},
          {"total_generated_tokens", r.total_generated_tokens},
          {"control_token_count", r.control_token_count},
          {"underrun_count", r.underrun_events.size()},
          {"underrun_events", underruns},
          {"response_emission_rate", r.response_emission_rate},
          {"emission_rate_padding_excluded", r.emission_rate_padding_excluded},
          {"emission_rate_padding_counted", r.emission_rate_padding_counted},
          {"padding_accounting", accounting_name(r.accounting)}};
}

/// Reads a comparison row from a JSON object. Accepts latency rows
/// (spoken_token_count / total_generated_tokens) and external rows
/// (label, spoken, optional total and unit).
inline ComparisonRow row_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("row is not an object");
  auto num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_number()) throw SchemaError(std::string("field '") + key + "' is not a number");
    return j.at(key).get<double>();
  };
  ComparisonRow r;
  if (auto s = num("spoken")) {
    r.spoken = *s;
    r.total = num("total");
    r.first_audio_s = num("first_audio_latency_s");
    r.completion_s = num("completion_time_s");
  } else if (auto s2 = num("spoken_token_count")) {
    r.spoken = *s2;
    r.total = num("total_generated_tokens");
    r.first_audio_s = num("first_audio_latency_s");
    r.completion_s = num("completion_time_s");
    if (!r.first_audio_s && j.contains("first_audio_latency_s")) r.first_audio_s = kNoAudio;
  } else {
    throw SchemaError("row has neither 'spoken' nor 'spoken_token_count'");
  }
  if (j.contains("label") && j.at("label").is_string()) {
    r.label = j.at("label").get<std::string>();
  } else if (j.contains("paradigm") && j.at("paradigm").is_string()) {
    r.label = j.at("paradigm").get<std::string>();
  } else {
    throw SchemaError("row has neither 'label' nor 'paradigm'");
  }
  if (j.contains("unit")) {
    if (!j.at("unit").is_string()) throw SchemaError("field 'unit' is not a string");
    r.unit = j.at("unit").get<std::string>();
  }
  return r;
}

}  // namespace thinkspeak

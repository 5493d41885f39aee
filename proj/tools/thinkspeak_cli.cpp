// thinkspeak: interleave, verify, simulate and report from the command line.
//
// Exit status: 0 success (all records pass), 2 some record failed or was
// quarantined, 1 usage, I/O or format error.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "thinkspeak/thinkspeak.hpp"

namespace ts = thinkspeak;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRejected = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags that override the configuration file. Unset flags keep file values.
struct Overrides {
  std::string config_path;
  std::optional<std::string> ratio;
  std::optional<std::size_t> padding;
  std::optional<std::string> tail_policy;
  bool no_markers = false;
  std::optional<double> g;
  std::optional<double> c;
  std::optional<std::size_t> fanout;
  std::optional<std::string> window;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<std::string> accounting;
  std::optional<double> jitter;
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path,
                 std::string("JSON run configuration (default: $") + ts::kConfigEnvVar + ")");
  app.add_option("--ratio", o.ratio, "response:reasoning tokens per cycle, e.g. 2:8");
  app.add_option("--padding", o.padding, "padding tokens after each reasoning block");
  app.add_option("--tail-policy", o.tail_policy, "contiguous-remainder | pad-to-cycle");
  app.add_flag("--no-markers", o.no_markers, "omit split markers");
  app.add_option("--g", o.g, "generation rate, tokens/s");
  app.add_option("--c", o.c, "playback rate, response tokens/s");
  app.add_option("--fanout", o.fanout, "audio tokens per verbalized token (0 = text level)");
  app.add_option("--window", o.window, "decode window LEN or LEN:HOP in audio tokens");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--format", o.format, "table | csv | jsonl");
  app.add_option("--padding-accounting", o.accounting, "excluded | counted");
  app.add_option("--jitter", o.jitter, "log-normal sigma of generation intervals (extension)");
}

std::pair<std::size_t, std::size_t> parse_pair(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const auto a = std::stoul(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(text);
    const auto rest = text.substr(colon + 1);
    const auto b = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw UsageError(fmt::format("{}: expected A:B, got '{}'", what, text));
  }
}

ts::RunConfig resolve(const Overrides& o) {
  ts::RunConfig rc;
  std::string path = o.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(ts::kConfigEnvVar); env && *env) path = env;
  }
  if (!path.empty()) rc = ts::load_run_config(path);

  if (o.ratio) std::tie(rc.config.p, rc.config.q) = parse_pair(*o.ratio, "--ratio");
  if (o.padding) rc.config.padding_per_cycle = *o.padding;
  if (o.tail_policy) {
    auto tp = ts::tail_policy_from_name(*o.tail_policy);
    if (!tp) throw UsageError("unknown tail policy '" + *o.tail_policy + "'");
    rc.config.tail_policy = *tp;
  }
  if (o.no_markers) rc.config.emit_markers = false;
  if (o.g) rc.rate.generation_rate_g = *o.g;
  if (o.c) rc.rate.playback_rate_c = *o.c;
  if (o.fanout) rc.rate.talker_fanout_f = *o.fanout;
  if (o.window) {
    if (o.window->find(':') == std::string::npos) {
      try {
        rc.rate.window_len = std::stoul(*o.window);
      } catch (const std::logic_error&) {
        throw UsageError("--window: expected LEN or LEN:HOP");
      }
      rc.rate.window_hop = rc.rate.window_len;
    } else {
      std::tie(rc.rate.window_len, rc.rate.window_hop) = parse_pair(*o.window, "--window");
    }
  }
  if (o.seed) rc.seed = *o.seed;
  if (o.format) {
    auto f = ts::format_from_name(*o.format);
    if (!f) throw UsageError("unknown format '" + *o.format + "'");
    rc.format = *f;
  }
  if (o.accounting) {
    auto a = ts::accounting_from_name(*o.accounting);
    if (!a) throw UsageError("unknown padding accounting '" + *o.accounting + "'");
    rc.rate.accounting = *a;
  }
  if (o.jitter) rc.rate.jitter = ts::JitterSpec{*o.jitter};

  try {
    rc.config.validate();
    rc.rate.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return rc;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  return out;
}

// ---------------------------------------------------------------------------
// interleave / verify

int print_corpus_stats(const ts::CorpusStats& s) {
  fmt::print("{} pass / {} reject\n", s.passed, s.rejected());
  fmt::print("ingested={} passed={} overshoot={} onset={} ratio={} judge={} quarantined={} "
             "malformed={}\n",
             s.ingested, s.passed, s.failed_overshoot, s.failed_onset, s.failed_ratio,
             s.failed_judge, s.quarantined, s.malformed);
  if (s.length_ratio.count > 0) {
    fmt::print("length_ratio min={:.3f} median={:.3f} mean={:.3f} max={:.3f}\n", s.length_ratio.min,
               s.length_ratio.median, s.length_ratio.mean, s.length_ratio.max);
  }
  if (s.malformed > 0) {
    fmt::print(stderr, "error: {} malformed input line(s)\n", s.malformed);
    return kExitError;
  }
  return s.rejected() == 0 ? kExitOk : kExitRejected;
}

int cmd_corpus(const Overrides& o, const std::string& input, const std::string& output,
               bool training) {
  ts::RunConfig rc = resolve(o);
  rc.paths = {input, output};
  ts::CorpusOptions options;
  options.run_config = rc;
  options.run_config["command"] = {{"name", training ? "interleave" : "verify"}};
  ts::CorpusOutputs outputs;
  if (training) {
    outputs = ts::default_outputs(output);
  } else {
    outputs.report_path = output;
  }
  return print_corpus_stats(ts::run_corpus(input, outputs, rc.config, options));
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string paradigm = "all";
  std::size_t m = 200;
  std::size_t n = 40;
  std::optional<std::string> sweep_g;
  bool closed_form = false;
  std::string output;
};

std::vector<double> sweep_values(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("--sweep-g: expected START:STOP:STEP, got '" + text + "'");
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0] || !(parts[0] > 0.0)) {
    throw UsageError("--sweep-g: expected START:STOP:STEP with 0 < START <= STOP and STEP > 0");
  }
  std::vector<double> out;
  // Index-based stepping keeps the endpoints exact; STOP is inclusive.
  const double count = (parts[1] - parts[0]) / parts[2];
  const auto steps = static_cast<std::size_t>(count + 1e-9);
  for (std::size_t i = 0; i <= steps; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  return out;
}

std::string num(double v, int digits = 4) {
  if (std::isinf(v)) return "inf";
  return fmt::format("{:.{}f}", v, digits);
}

int cmd_simulate(const Overrides& o, const SimulateArgs& a) {
  ts::RunConfig rc = resolve(o);
  rc.paths.output = a.output;

  std::vector<ts::DecodeParadigm> paradigms;
  if (a.paradigm == "all") {
    paradigms.assign(std::begin(ts::kAllParadigms), std::end(ts::kAllParadigms));
  } else if (auto p = ts::paradigm_from_name(a.paradigm)) {
    paradigms.push_back(*p);
  } else {
    throw UsageError("unknown paradigm '" + a.paradigm + "'");
  }
  const bool jittered = rc.rate.jitter && rc.rate.jitter->sigma > 0.0;
  if (a.closed_form && jittered) throw UsageError("--closed-form cannot be combined with --jitter");

  std::vector<double> gs = {rc.rate.generation_rate_g};
  if (a.sweep_g) gs = sweep_values(*a.sweep_g);

  nlohmann::json header = rc;
  header["command"] = {{"name", "simulate"},
                       {"paradigm", a.paradigm},
                       {"M", a.m},
                       {"N", a.n},
                       {"sweep_g", a.sweep_g ? nlohmann::json(*a.sweep_g) : nlohmann::json(nullptr)},
                       {"method", a.closed_form ? "closed-form" : "event-simulation"}};

  struct Row {
    double g;
    ts::LatencyReport report;
  };
  std::vector<Row> rows;
  for (double g : gs) {
    ts::RateModel rate = rc.rate;
    rate.generation_rate_g = g;
    for (auto p : paradigms) {
      rows.push_back({g, a.closed_form ? ts::closed_form_latency(p, a.m, a.n, rc.config, rate)
                                       : ts::simulate_events(p, a.m, a.n, rc.config, rate, rc.seed)});
    }
  }
  const auto be = ts::break_even_rate(rc.config, rc.rate);

  std::optional<std::ofstream> file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& os = file ? static_cast<std::ostream&>(*file) : std::cout;

  const std::vector<std::string> cols = {
      "g",          "paradigm",         "first_audio_s", "first_playback_s", "completion_s",
      "spoken",     "total",            "control",       "underruns",        "emission_rate",
      "rate_excl",  "rate_counted"};
  auto cells = [&](const Row& r) {
    const auto& x = r.report;
    return std::vector<std::string>{num(r.g, 2),
                                    std::string(ts::paradigm_name(x.paradigm)),
                                    num(x.first_audio_latency_s),
                                    num(x.first_playback_s),
                                    num(x.completion_time_s),
                                    std::to_string(x.spoken_token_count),
                                    std::to_string(x.total_generated_tokens),
                                    std::to_string(x.control_token_count),
                                    std::to_string(x.underrun_events.size()),
                                    num(x.response_emission_rate, 3),
                                    num(x.emission_rate_padding_excluded, 3),
                                    num(x.emission_rate_padding_counted, 3)};
  };

  switch (rc.format) {
    case ts::OutputFormat::Jsonl:
      os << ts::jsonl_header(header) << '\n';
      for (const auto& r : rows) {
        nlohmann::json j = ts::to_json(r.report);
        j["label"] = gs.size() > 1 ? fmt::format("{}@g={}", ts::paradigm_name(r.report.paradigm), num(r.g, 2))
                                   : std::string(ts::paradigm_name(r.report.paradigm));
        j["g"] = r.g;
        j["M"] = a.m;
        j["N"] = a.n;
        os << j.dump() << '\n';
      }
      break;
    case ts::OutputFormat::Delimited:
      os << ts::comment_header(header) << '\n';
      for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
      os << '\n';
      for (const auto& r : rows) {
        const auto c = cells(r);
        for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << ts::csv_field(c[i]);
        os << '\n';
      }
      break;
    case ts::OutputFormat::Table: {
      os << ts::comment_header(header) << '\n';
      std::vector<std::vector<std::string>> body;
      for (const auto& r : rows) body.push_back(cells(r));
      ts::write_aligned(os, cols, body);
      fmt::print(os, "break-even g: {} (padding excluded), {} (padding counted)\n",
                 num(be.padding_excluded, 3), num(be.padding_counted, 3));
      if (jittered) fmt::print(os, "note: jittered generation intervals (extension)\n");
      break;
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::optional<std::string> baseline;
  std::string plot_out;
  std::string output;
  double tokens_per_word = 4.0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Column names of simulate's delimited output mapped to row fields.
nlohmann::json csv_record(const std::vector<std::string>& header, const std::vector<std::string>& cells) {
  if (cells.size() != header.size()) throw ts::SchemaError("row width differs from header");
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string key = header[i];
    if (key == "spoken") key = "spoken_token_count";
    if (key == "total") key = "total_generated_tokens";
    if (key == "first_audio_s") key = "first_audio_latency_s";
    if (key == "completion_s") key = "completion_time_s";
    const std::string& v = cells[i];
    if (v == "inf") {
      j[key] = nullptr;
      continue;
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) {
        j[key] = d;
        continue;
      }
    } catch (const std::logic_error&) {
    }
    j[key] = v;
  }
  return j;
}

std::vector<ts::ComparisonRow> read_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input file '" + path + "'");
  std::vector<ts::ComparisonRow> rows;
  std::optional<std::vector<std::string>> csv_header;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (ts::trim(line).empty() || ts::parse_header(line)) continue;
    try {
      if (line.front() == '{') {
        rows.push_back(ts::row_from_json(nlohmann::json::parse(line)));
      } else if (!csv_header) {
        csv_header = split_csv_line(line);
      } else {
        auto j = csv_record(*csv_header, split_csv_line(line));
        rows.push_back(ts::row_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ts::SchemaError(fmt::format("{}:{}: {}", path, line_no, e.what()));
    } catch (const ts::SchemaError& e) {
      throw ts::SchemaError(fmt::format("{}:{}: {}", path, line_no, e.what()));
    }
  }
  return rows;
}

int cmd_report(const Overrides& o, const ReportArgs& a) {
  ts::RunConfig rc = resolve(o);
  rc.paths.output = a.output;
  std::vector<ts::ComparisonRow> rows;
  for (const auto& path : a.inputs) {
    auto more = read_rows(path);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  if (rows.empty()) throw ts::SchemaError("no rows in input");
  for (auto& r : rows) {
    if (r.unit == "tokens" && a.tokens_per_word > 0.0) r.estimated_words = r.spoken / a.tokens_per_word;
  }
  const auto table = ts::build_comparison(std::move(rows), a.baseline);

  nlohmann::json header = rc;
  header["command"] = {{"name", "report"},
                       {"inputs", a.inputs},
                       {"baseline", table.rows[table.baseline].label},
                       {"tokens_per_word", a.tokens_per_word}};

  if (a.output.empty()) {
    ts::render_comparison(std::cout, table, rc.format, header);
  } else {
    auto out = open_out(a.output);
    ts::render_comparison(out, table, rc.format, header);
  }
  if (!a.plot_out.empty()) {
    auto plot = open_out(a.plot_out);
    ts::write_plot_series(plot, table, header);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interleaved reasoning/response streams: codec, verifier and latency model"};
  app.require_subcommand(1);

  Overrides o;
  std::string input;
  std::string output;

  auto* interleave = app.add_subcommand("interleave", "verify records and write interleaved training records");
  add_common(*interleave, o);
  interleave->add_option("input", input, "line-delimited record file")->required();
  interleave->add_option("-o,--output", output, "training record file (sidecars: .report.jsonl, .vocab)")
      ->required();

  auto* verify = app.add_subcommand("verify", "write verification reports only");
  add_common(*verify, o);
  verify->add_option("input", input, "line-delimited record file")->required();
  verify->add_option("-o,--output", output, "report file")->required();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "latency rows per paradigm");
  add_common(*simulate, o);
  simulate->add_option("--paradigm", sim.paradigm,
                       "all | speaking-without-thinking | full-verbalization | silent-reasoning | "
                       "thinking-in-speaking")
      ->capture_default_str();
  simulate->add_option("--M,--reasoning-tokens", sim.m, "reasoning length")->capture_default_str();
  simulate->add_option("--N,--response-tokens", sim.n, "response length")->capture_default_str();
  simulate->add_option("--sweep-g", sim.sweep_g, "generation rate sweep START:STOP:STEP (inclusive)");
  simulate->add_flag("--closed-form", sim.closed_form, "use closed forms instead of event simulation");
  simulate->add_option("-o,--output", sim.output, "output file (default: stdout)");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "comparison table and plot series");
  add_common(*report, o);
  report->add_option("inputs", rep.inputs, "simulate outputs or external rows (jsonl/csv)")->required();
  report->add_option("--baseline", rep.baseline, "label of the baseline row (default: first row)");
  report->add_option("--plot-out", rep.plot_out, "tab-separated plot series file");
  report->add_option("--tokens-per-word", rep.tokens_per_word, "token rows: tokens per estimated word")
      ->capture_default_str();
  report->add_option("-o,--output", rep.output, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*interleave) return cmd_corpus(o, input, output, true);
    if (*verify) return cmd_corpus(o, input, output, false);
    if (*simulate) return cmd_simulate(o, sim);
    if (*report) return cmd_report(o, rep);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitError;
  }
  return kExitError;
}

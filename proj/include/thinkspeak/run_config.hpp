#pragma once

// Serializable run configuration. Every output file starts with a header
// that echoes the effective RunConfig; parse_header() reverses it.

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/latency_sim.hpp"

namespace thinkspeak {

enum class OutputFormat : std::uint8_t { Table, Delimited, Jsonl };

constexpr std::string_view format_name(OutputFormat f) noexcept {
  switch (f) {
    case OutputFormat::Table: return "table";
    case OutputFormat::Delimited: return "csv";
    case OutputFormat::Jsonl: return "jsonl";
  }
  return "?";
}

inline std::optional<OutputFormat> format_from_name(std::string_view name) noexcept {
  if (name == "table") return OutputFormat::Table;
  if (name == "csv") return OutputFormat::Delimited;
  if (name == "jsonl") return OutputFormat::Jsonl;
  return std::nullopt;
}

struct RunPaths {
  std::string input;
  std::string output;

  friend bool operator==(const RunPaths&, const RunPaths&) = default;
};

struct RunConfig {
  InterleaveConfig config;
  RateModel rate;
  RunPaths paths;
  std::uint64_t seed = 0;
  OutputFormat format = OutputFormat::Table;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Name of the environment variable holding the default config file path.
inline constexpr const char* kConfigEnvVar = "THINKSPEAK_CONFIG";

inline void to_json(nlohmann::json& j, const InterleaveConfig& c) {
  j = nlohmann::json{{"p", c.p},
                     {"q", c.q},
                     {"padding_per_cycle", c.padding_per_cycle},
                     {"emit_markers", c.emit_markers},
                     {"tail_policy", tail_policy_name(c.tail_policy)},
                     {"mask_control_in_loss", c.mask_control_in_loss}};
}

inline void from_json(const nlohmann::json& j, InterleaveConfig& c) {
  c.p = j.value("p", c.p);
  c.q = j.value("q", c.q);
  c.padding_per_cycle = j.value("padding_per_cycle", c.padding_per_cycle);
  c.emit_markers = j.value("emit_markers", c.emit_markers);
  c.mask_control_in_loss = j.value("mask_control_in_loss", c.mask_control_in_loss);
  if (j.contains("tail_policy")) {
    const auto name = j.at("tail_policy").get<std::string>();
    auto policy = tail_policy_from_name(name);
    if (!policy) throw std::invalid_argument("unknown tail_policy '" + name + "'");
    c.tail_policy = *policy;
  }
}

inline void to_json(nlohmann::json& j, const RateModel& r) {
  j = nlohmann::json{{"g", r.generation_rate_g},
                     {"c", r.playback_rate_c},
                     {"fanout", r.talker_fanout_f},
                     {"window_len", r.window_len},
                     {"window_hop", r.window_hop},
                     {"padding_accounting", accounting_name(r.accounting)}};
  j["jitter_sigma"] = r.jitter ? nlohmann::json(r.jitter->sigma) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, RateModel& r) {
  r.generation_rate_g = j.value("g", r.generation_rate_g);
  r.playback_rate_c = j.value("c", r.playback_rate_c);
  r.talker_fanout_f = j.value("fanout", r.talker_fanout_f);
  r.window_len = j.value("window_len", r.window_len);
  r.window_hop = j.value("window_hop", r.window_hop);
  if (j.contains("padding_accounting")) {
    const auto name = j.at("padding_accounting").get<std::string>();
    auto a = accounting_from_name(name);
    if (!a) throw std::invalid_argument("unknown padding_accounting '" + name + "'");
    r.accounting = *a;
  }
  if (j.contains("jitter_sigma")) {
    const auto& s = j.at("jitter_sigma");
    r.jitter = s.is_null() ? std::nullopt : std::optional<JitterSpec>(JitterSpec{s.get<double>()});
  }
}

inline void to_json(nlohmann::json& j, const RunConfig& rc) {
  j = nlohmann::json{{"config", rc.config},
                     {"rate", rc.rate},
                     {"paths", {{"input", rc.paths.input}, {"output", rc.paths.output}}},
                     {"seed", rc.seed},
                     {"format", format_name(rc.format)}};
}

inline void from_json(const nlohmann::json& j, RunConfig& rc) {
  if (j.contains("config")) rc.config = j.at("config").get<InterleaveConfig>();
  if (j.contains("rate")) rc.rate = j.at("rate").get<RateModel>();
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    rc.paths.input = p.value("input", rc.paths.input);
    rc.paths.output = p.value("output", rc.paths.output);
  }
  rc.seed = j.value("seed", rc.seed);
  if (j.contains("format")) {
    const auto name = j.at("format").get<std::string>();
    auto f = format_from_name(name);
    if (!f) throw std::invalid_argument("unknown format '" + name + "'");
    rc.format = *f;
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return nlohmann::json::parse(in).get<RunConfig>();
}

// Header line for line-delimited outputs.
inline std::string jsonl_header(const nlohmann::json& run_config) {
  return nlohmann::json{{"run_config", run_config}}.dump();
}

// Header line for delimited and table outputs.
inline std::string comment_header(const nlohmann::json& run_config) {
  return "# run_config " + run_config.dump();
}

/// Recovers the run configuration from either header form.
inline std::optional<nlohmann::json> parse_header(std::string_view line) {
  constexpr std::string_view kComment = "# run_config ";
  try {
    if (line.substr(0, kComment.size()) == kComment) {
      return nlohmann::json::parse(line.substr(kComment.size()));
    }
    auto j = nlohmann::json::parse(line);
    if (j.is_object() && j.contains("run_config")) return j.at("run_config");
  } catch (const nlohmann::json::exception&) {
  }
  return std::nullopt;
}

}  // namespace thinkspeak

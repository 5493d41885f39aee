#pragma once

// Latency model for the four speaking paradigms.
//
// Two independent routes compute the same LatencyReport:
//   closed_form_latency  arrival times from segment arithmetic, playback from
//                        the max-plus form of a deterministic FIFO server;
//   simulate_events      a discrete-event simulation with a generation
//                        process, a talker buffer and a playback process.
//
// Time accounting: every content token costs one generation interval (1/g,
// optionally perturbed by jitter). Split markers are inserted by the
// scheduler and cost nothing. Padding costs nothing under
// PaddingAccounting::Excluded (the default) and one interval under Counted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/interleave_codec.hpp"

namespace thinkspeak {

enum class DecodeParadigm : std::uint8_t {
  SpeakingWithoutThinking,
  FullVerbalization,
  SilentReasoning,
  ThinkingInSpeaking,
};

inline constexpr DecodeParadigm kAllParadigms[] = {
    DecodeParadigm::SpeakingWithoutThinking,
    DecodeParadigm::FullVerbalization,
    DecodeParadigm::SilentReasoning,
    DecodeParadigm::ThinkingInSpeaking,
};

constexpr std::string_view paradigm_name(DecodeParadigm p) noexcept {
  switch (p) {
    case DecodeParadigm::SpeakingWithoutThinking: return "speaking-without-thinking";
    case DecodeParadigm::FullVerbalization: return "full-verbalization";
    case DecodeParadigm::SilentReasoning: return "silent-reasoning";
    case DecodeParadigm::ThinkingInSpeaking: return "thinking-in-speaking";
  }
  return "?";
}

inline std::optional<DecodeParadigm> paradigm_from_name(std::string_view name) noexcept {
  for (auto p : kAllParadigms) {
    if (paradigm_name(p) == name) return p;
  }
  return std::nullopt;
}

enum class PaddingAccounting : std::uint8_t { Excluded, Counted };

constexpr std::string_view accounting_name(PaddingAccounting a) noexcept {
  return a == PaddingAccounting::Counted ? "counted" : "excluded";
}

inline std::optional<PaddingAccounting> accounting_from_name(std::string_view name) noexcept {
  if (name == "excluded") return PaddingAccounting::Excluded;
  if (name == "counted") return PaddingAccounting::Counted;
  return std::nullopt;
}

// Log-normal multiplicative noise on each generation interval, mean 1.
// Extension for robustness studies; not part of the reference arithmetic.
struct JitterSpec {
  double sigma = 0.0;

  friend bool operator==(const JitterSpec&, const JitterSpec&) = default;
};

struct RateModel {
  double generation_rate_g = 100.0;  // tokens/s produced by the model
  double playback_rate_c = 12.5;     // response tokens/s consumed by playback
  std::size_t talker_fanout_f = 0;   // audio tokens per verbalized token (0 = text level)
  std::size_t window_len = 0;        // audio tokens per decode window (0 = no gating)
  std::size_t window_hop = 0;        // audio tokens between window starts
  std::optional<JitterSpec> jitter;
  PaddingAccounting accounting = PaddingAccounting::Excluded;

  void validate() const {
    if (!(generation_rate_g > 0.0) || !std::isfinite(generation_rate_g)) {
      throw std::invalid_argument("RateModel: generation rate must be > 0");
    }
    if (!(playback_rate_c > 0.0) || !std::isfinite(playback_rate_c)) {
      throw std::invalid_argument("RateModel: playback rate must be > 0");
    }
    if (talker_fanout_f > 0 && window_len > 0) {
      if (window_hop == 0 || window_hop > window_len) {
        throw std::invalid_argument("RateModel: window hop must be in [1, window length]");
      }
    }
    if (jitter && (!(jitter->sigma >= 0.0) || !std::isfinite(jitter->sigma))) {
      throw std::invalid_argument("RateModel: jitter sigma must be >= 0");
    }
  }

  friend bool operator==(const RateModel&, const RateModel&) = default;
};

struct UnderrunEvent {
  double time_s;          // moment playback found the buffer empty
  double deficit_tokens;  // stall length expressed in response tokens (gap * c)

  friend bool operator==(const UnderrunEvent&, const UnderrunEvent&) = default;
};

inline constexpr double kNoAudio = std::numeric_limits<double>::infinity();

/// Outcome of one paradigm run.
///
/// first_audio_latency_s is the generation time of the first verbalized token
/// and is +inf when nothing is verbalized. first_playback_s additionally
/// waits for the first decode window when a talker fan-out is configured.
/// completion_time_s = max(generation end, playback drain).
struct LatencyReport {
  DecodeParadigm paradigm = DecodeParadigm::ThinkingInSpeaking;
  double first_audio_latency_s = kNoAudio;
  double first_playback_s = kNoAudio;
  double completion_time_s = 0.0;
  double generation_time_s = 0.0;
  std::size_t spoken_token_count = 0;
  std::size_t total_generated_tokens = 0;  // content tokens only
  std::size_t control_token_count = 0;
  std::vector<UnderrunEvent> underrun_events;
  double response_emission_rate = 0.0;
  double emission_rate_padding_excluded = 0.0;
  double emission_rate_padding_counted = 0.0;
  PaddingAccounting accounting = PaddingAccounting::Excluded;
};

struct BreakEvenRate {
  double padding_excluded;
  double padding_counted;

  double for_accounting(PaddingAccounting a) const noexcept {
    return a == PaddingAccounting::Counted ? padding_counted : padding_excluded;
  }
};

// Smallest g at which steady-state response emission keeps up with playback.
// Only p >= 1 is required here, so the degenerate q = 0 stream is accepted.
inline BreakEvenRate break_even_rate(const InterleaveConfig& config, const RateModel& rate) {
  if (config.p == 0) throw std::invalid_argument("break_even_rate: p must be >= 1");
  const double c = rate.playback_rate_c;
  const double p = static_cast<double>(config.p);
  const double q = static_cast<double>(config.q);
  const double k = static_cast<double>(config.padding_per_cycle);
  return {c * (p + q) / p, c * (p + q + k) / p};
}

namespace detail {

struct EmissionToken {
  TokenRole role;
  std::size_t group;  // cycle for interleaved output; phase otherwise
};

inline bool verbalized(DecodeParadigm paradigm, TokenRole role) noexcept {
  if (role == TokenRole::Response) return true;
  return paradigm == DecodeParadigm::FullVerbalization && role == TokenRole::Reasoning;
}

inline bool costs_time(TokenRole role, PaddingAccounting accounting) noexcept {
  if (is_content(role)) return true;
  return role == TokenRole::Padding && accounting == PaddingAccounting::Counted;
}

// Segment layout of the generation stream for a paradigm.
inline std::vector<SegmentDescriptor> paradigm_segments(DecodeParadigm paradigm, std::size_t m,
                                                        std::size_t n,
                                                        const InterleaveConfig& config) {
  std::vector<SegmentDescriptor> segs;
  switch (paradigm) {
    case DecodeParadigm::ThinkingInSpeaking: return build_schedule(config, n, m);
    case DecodeParadigm::SpeakingWithoutThinking:
      if (n > 0) segs.push_back({TokenRole::Response, n, 0});
      return segs;
    case DecodeParadigm::FullVerbalization:
      if (m > 0) segs.push_back({TokenRole::Reasoning, m, 0});
      if (n > 0) segs.push_back({TokenRole::Response, n, 0});
      return segs;
    case DecodeParadigm::SilentReasoning:
      if (m > 0) segs.push_back({TokenRole::Reasoning, m, 0});
      if (n > 0) segs.push_back({TokenRole::Response, n, 1});
      return segs;
  }
  return segs;
}

// Index of the audio token whose arrival completes the decode window that
// first covers audio token j. Clamped to the final audio token.
inline std::size_t window_gate(std::size_t j, std::size_t total, std::size_t len,
                               std::size_t hop) noexcept {
  std::size_t end = j;
  if (len > 0) {
    if (j < len) {
      end = len - 1;
    } else {
      const std::size_t steps = (j - len + 1 + hop - 1) / hop;
      end = len - 1 + steps * hop;
    }
  }
  return std::min(end, total - 1);
}

struct PlaybackUnits {
  std::size_t per_token = 1;
  double duration = 0.0;
  std::size_t window_len = 0;
  std::size_t window_hop = 1;
};

inline PlaybackUnits playback_units(const RateModel& rate) {
  PlaybackUnits u;
  if (rate.talker_fanout_f == 0) {
    u.duration = 1.0 / rate.playback_rate_c;
    return u;
  }
  u.per_token = rate.talker_fanout_f;
  u.duration = 1.0 / (rate.playback_rate_c * static_cast<double>(rate.talker_fanout_f));
  u.window_len = rate.window_len;
  u.window_hop = rate.window_len > 0 ? rate.window_hop : 1;
  return u;
}

inline void fill_rates(LatencyReport& r, DecodeParadigm paradigm, const InterleaveConfig& config,
                       const RateModel& rate) {
  const double g = rate.generation_rate_g;
  if (paradigm == DecodeParadigm::ThinkingInSpeaking) {
    const double p = static_cast<double>(config.p);
    const double q = static_cast<double>(config.q);
    const double k = static_cast<double>(config.padding_per_cycle);
    r.emission_rate_padding_excluded = g * p / (p + q);
    r.emission_rate_padding_counted = g * p / (p + q + k);
  } else {
    r.emission_rate_padding_excluded = g;
    r.emission_rate_padding_counted = g;
  }
}

}  // namespace detail

/// Analytic latency for a deterministic rate model.
inline LatencyReport closed_form_latency(DecodeParadigm paradigm, std::size_t m, std::size_t n,
                                         const InterleaveConfig& config, const RateModel& rate) {
  rate.validate();
  if (rate.jitter && rate.jitter->sigma > 0.0) {
    throw std::invalid_argument("closed_form_latency: jittered rate models need simulate_events");
  }
  if (paradigm == DecodeParadigm::ThinkingInSpeaking) config.validate();

  const double g = rate.generation_rate_g;
  const auto segs = detail::paradigm_segments(paradigm, m, n, config);

  LatencyReport r;
  r.paradigm = paradigm;
  r.accounting = rate.accounting;
  detail::fill_rates(r, paradigm, config, rate);
  r.response_emission_rate = rate.accounting == PaddingAccounting::Counted
                                 ? r.emission_rate_padding_counted
                                 : r.emission_rate_padding_excluded;

  // Arrival time of each verbalized token: (cost units up to and including
  // it) / g. Within a content segment the cost grows by one per token.
  std::vector<double> arrivals;
  std::uint64_t cost = 0;
  for (const auto& s : segs) {
    if (is_control(s.role)) {
      r.control_token_count += s.length;
    } else {
      r.total_generated_tokens += s.length;
    }
    const bool spends = detail::costs_time(s.role, rate.accounting);
    if (detail::verbalized(paradigm, s.role)) {
      for (std::size_t i = 1; i <= s.length; ++i) {
        arrivals.push_back(static_cast<double>(cost + i) / g);
      }
    }
    if (spends) cost += s.length;
  }
  r.generation_time_s = static_cast<double>(cost) / g;
  r.spoken_token_count = arrivals.size();
  r.completion_time_s = r.generation_time_s;
  if (arrivals.empty()) return r;

  r.first_audio_latency_s = arrivals.front();

  // Expand to playback units and gate them on decode windows.
  const auto units = detail::playback_units(rate);
  const std::size_t total_units = arrivals.size() * units.per_token;
  auto unit_ready = [&](std::size_t j) {
    const std::size_t gate = detail::window_gate(j, total_units, units.window_len, units.window_hop);
    return arrivals[gate / units.per_token];
  };

  // Max-plus form: unit j finishes at max over i <= j of ready(i) + (j-i+1)*d.
  // A stall precedes unit j when ready(j) exceeds the previous finish.
  const double d = units.duration;
  double best = -std::numeric_limits<double>::infinity();  // max(ready(i) - i*d)
  double prev_finish = 0.0;
  for (std::size_t j = 0; j < total_units; ++j) {
    const double ready = unit_ready(j);
    if (j == 0) r.first_playback_s = ready;
    if (j > 0 && ready > prev_finish + 1e-9) {
      r.underrun_events.push_back({prev_finish, (ready - prev_finish) * rate.playback_rate_c});
    }
    best = std::max(best, ready - static_cast<double>(j) * d);
    prev_finish = best + static_cast<double>(j + 1) * d;
  }
  r.completion_time_s = std::max(r.generation_time_s, prev_finish);
  return r;
}

/// Discrete-event simulation of generation, talker buffering and playback.
inline LatencyReport simulate_events(DecodeParadigm paradigm, std::size_t m, std::size_t n,
                                     const InterleaveConfig& config, const RateModel& rate,
                                     std::uint64_t seed) {
  rate.validate();
  if (paradigm == DecodeParadigm::ThinkingInSpeaking) config.validate();

  const double g = rate.generation_rate_g;
  const double sigma = rate.jitter ? rate.jitter->sigma : 0.0;
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> noise(-0.5 * sigma * sigma, sigma);

  const auto segs = detail::paradigm_segments(paradigm, m, n, config);
  std::vector<detail::EmissionToken> order;
  for (const auto& s : segs) {
    for (std::size_t i = 0; i < s.length; ++i) order.push_back({s.role, s.cycle});
  }

  LatencyReport r;
  r.paradigm = paradigm;
  r.accounting = rate.accounting;
  detail::fill_rates(r, paradigm, config, rate);

  std::size_t verbal_total = 0;
  for (const auto& t : order) {
    if (detail::verbalized(paradigm, t.role)) ++verbal_total;
    if (is_control(t.role)) {
      ++r.control_token_count;
    } else {
      ++r.total_generated_tokens;
    }
  }
  r.spoken_token_count = verbal_total;

  const auto units = detail::playback_units(rate);
  const std::size_t total_units = verbal_total * units.per_token;

  enum class Kind : std::uint8_t { Generated = 0, PlaybackDone = 1 };
  struct Event {
    double time;
    Kind kind;
    std::size_t seq;
    std::size_t token;  // index into order for Generated events
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.kind != b.kind) return a.kind > b.kind;  // arrivals before completions
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> events;
  std::size_t seq = 0;

  // Generation process: schedule the completion time of every token. Costless
  // tokens complete at the current generation clock.
  std::uint64_t cost = 0;
  double clock = 0.0;
  std::vector<double> group_start;   // generation start of each group
  std::vector<double> group_end;     // last costful completion in each group
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& t = order[i];
    if (group_start.size() <= t.group) {
      group_start.resize(t.group + 1, -1.0);
      group_end.resize(t.group + 1, -1.0);
    }
    if (group_start[t.group] < 0.0) group_start[t.group] = clock;
    if (detail::costs_time(t.role, rate.accounting)) {
      ++cost;
      if (sigma > 0.0) {
        clock += noise(rng) / g;
      } else {
        clock = static_cast<double>(cost) / g;
      }
      group_end[t.group] = clock;
    }
    events.push({clock, Kind::Generated, seq++, i});
  }
  r.generation_time_s = clock;

  // Talker buffer and playback process.
  std::size_t produced_units = 0;
  std::size_t released_units = 0;
  std::size_t played_units = 0;
  bool playing = false;
  bool starved = false;
  double starved_at = 0.0;
  double last_playback_end = 0.0;
  std::size_t verbal_seen = 0;
  std::optional<std::size_t> first_group;
  std::size_t last_group = 0;
  double last_verbal_time = 0.0;

  auto try_start_playback = [&](double now) {
    if (playing || played_units >= released_units) return;
    if (starved) {
      if (now - starved_at > 1e-9) {
        r.underrun_events.push_back({starved_at, (now - starved_at) * rate.playback_rate_c});
      }
      starved = false;
    }
    if (played_units == 0) r.first_playback_s = now;
    playing = true;
    events.push({now + units.duration, Kind::PlaybackDone, seq++, 0});
  };

  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    if (ev.kind == Kind::Generated) {
      const auto& t = order[ev.token];
      if (!detail::verbalized(paradigm, t.role)) continue;
      if (verbal_seen == 0) {
        r.first_audio_latency_s = ev.time;
        first_group = t.group;
      }
      last_group = t.group;
      last_verbal_time = ev.time;
      ++verbal_seen;
      produced_units += units.per_token;
      if (verbal_seen == verbal_total) {
        released_units = produced_units;  // final flush
      } else if (units.window_len == 0) {
        released_units = produced_units;
      } else if (produced_units >= units.window_len) {
        released_units = units.window_len +
                         (produced_units - units.window_len) / units.window_hop * units.window_hop;
      }
      try_start_playback(ev.time);
    } else {
      playing = false;
      ++played_units;
      last_playback_end = ev.time;
      if (played_units < total_units && played_units >= released_units) {
        starved = true;
        starved_at = ev.time;
      }
      try_start_playback(ev.time);
    }
  }

  r.completion_time_s = std::max(r.generation_time_s, last_playback_end);

  // Effective emission rate over the window that carries speech: whole
  // cycles for interleaved output, the verbalized run otherwise.
  if (verbal_total > 0 && first_group) {
    const double start = group_start[*first_group];
    const double end = paradigm == DecodeParadigm::ThinkingInSpeaking ? group_end[last_group]
                                                                       : last_verbal_time;
    const double span = end - start;
    r.response_emission_rate = span > 0.0 ? static_cast<double>(verbal_total) / span : g;
  }
  return r;
}

}  // namespace thinkspeak

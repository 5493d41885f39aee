#pragma once

// Online decode scheduler.
//
// The scheduler owns the interleaving protocol at inference time: it asks a
// role-agnostic producer for the next content token of a given stream, stamps
// the expected role on it, injects split markers and padding itself, and
// forwards response tokens to a talker sink.
//
// Each step() appends exactly one token to the transcript, except the step
// that discovers both streams are finished, which appends nothing and moves
// to Done. Stream lengths are unknown up front, so at a block boundary the
// scheduler may fetch the first token of the next block early and hold it
// until its slot comes up. That lookahead never changes how many content
// tokens are requested and keeps the transcript identical to the codec's
// output for the same streams.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "thinkspeak/core_types.hpp"
#include "thinkspeak/interleave_codec.hpp"
#include "thinkspeak/latency_sim.hpp"

namespace thinkspeak {

/// next() returns the next content token of the requested stream, or
/// std::nullopt as the end signal for that stream.
template <typename P>
concept TokenProducer = requires(P& producer, TokenRole role, std::span<const Token> context) {
  { producer.next(role, context) } -> std::same_as<std::optional<Token>>;
};

/// accept() returns false to reject a token; rejection is a sink failure.
template <typename S>
concept TalkerSink = requires(S& sink, const Token& token, double time) {
  { sink.accept(token, time) } -> std::convertible_to<bool>;
};

class ProducerFailure : public std::runtime_error {
 public:
  ProducerFailure(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (transcript position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class SinkFailure : public std::runtime_error {
 public:
  SinkFailure(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (transcript position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

enum class SchedulerPhase : std::uint8_t { InResponse, InReasoning, InPadding, Done };

namespace detail {

struct StreamCursor {
  bool ended = false;
  std::optional<Token> held;  // fetched ahead of its slot
  std::size_t delivered = 0;  // content tokens received from the producer
};

}  // namespace detail

/// Scheduler state. position_in_segment counts the tokens already appended
/// in the current phase; a phase's segment includes its trailing split
/// marker when markers are enabled.
struct SchedulerState {
  SchedulerPhase phase = SchedulerPhase::InResponse;
  std::size_t position_in_segment = 0;
  std::size_t cycle = 0;
  InterleavedSequence transcript;

  detail::StreamCursor response;
  detail::StreamCursor reasoning;
  std::size_t block_content = 0;   // content tokens in the current block
  bool block_bounded = true;       // block is capped at p (response) or q (reasoning)
  bool block_closed = false;       // content done, trailing marker pending
  bool next_reasoning_bounded = true;
  std::size_t padding_emitted = 0;

  bool done() const noexcept { return phase == SchedulerPhase::Done; }
};

namespace detail {

template <TokenProducer Producer>
bool peek(StreamCursor& cursor, TokenRole role, Producer& producer, const SchedulerState& state) {
  if (cursor.held) return true;
  if (cursor.ended) return false;
  std::optional<Token> got;
  try {
    got = producer.next(role, std::span<const Token>(state.transcript.tokens));
  } catch (const std::exception& e) {
    throw ProducerFailure(std::string("producer failed: ") + e.what(), state.transcript.size());
  }
  if (!got) {
    cursor.ended = true;
    return false;
  }
  try {
    cursor.held = got->with_role(role);
  } catch (const std::invalid_argument& e) {
    throw ProducerFailure(std::string("producer returned an unusable token: ") + e.what(),
                          state.transcript.size());
  }
  ++cursor.delivered;
  return true;
}

template <TokenProducer Producer>
std::optional<Token> take(StreamCursor& cursor, TokenRole role, Producer& producer,
                          const SchedulerState& state) {
  if (!peek(cursor, role, producer, state)) return std::nullopt;
  std::optional<Token> out = std::move(cursor.held);
  cursor.held.reset();
  return out;
}

template <TalkerSink Sink>
void append(SchedulerState& state, Token token, Sink& sink, const InterleaveConfig& config,
            double clock) {
  const TokenRole role = token.role();
  const std::size_t position = state.transcript.size();
  if (role == TokenRole::Response) {
    bool ok = false;
    try {
      ok = static_cast<bool>(sink.accept(token, clock));
    } catch (const std::exception& e) {
      throw SinkFailure(std::string("talker sink failed: ") + e.what(), position);
    }
    if (!ok) throw SinkFailure("talker sink rejected token", position);
  }
  state.transcript.push(std::move(token), state.cycle, loss_mask_for(role, config));
  ++state.position_in_segment;
}

inline void enter(SchedulerState& state, SchedulerPhase phase) {
  state.phase = phase;
  state.position_in_segment = 0;
  state.block_content = 0;
  state.block_closed = false;
  state.padding_emitted = 0;
}

template <TokenProducer Producer>
bool finished(SchedulerState& state, Producer& producer) {
  return !peek(state.response, TokenRole::Response, producer, state) &&
         !peek(state.reasoning, TokenRole::Reasoning, producer, state);
}

template <TokenProducer Producer, TalkerSink Sink>
void step_contiguous(SchedulerState& s, Producer& producer, Sink& sink,
                     const InterleaveConfig& config, double clock) {
  for (;;) {
    switch (s.phase) {
      case SchedulerPhase::Done: return;

      case SchedulerPhase::InResponse: {
        if (!s.block_closed) {
          if (s.block_content == 0 && s.position_in_segment == 0) {
            if (!peek(s.response, TokenRole::Response, producer, s)) {
              // Empty response block: only the reasoning remainder is left.
              if (!peek(s.reasoning, TokenRole::Reasoning, producer, s)) {
                s.phase = SchedulerPhase::Done;
                return;
              }
              s.block_closed = true;
              s.next_reasoning_bounded = false;
              continue;
            }
            s.block_bounded = !s.reasoning.ended;
            s.next_reasoning_bounded = true;
          }
          if (s.block_bounded && s.block_content == config.p) {
            // Boundary: the block ends here unless reasoning is exhausted,
            // in which case the rest of the response follows contiguously.
            if (peek(s.reasoning, TokenRole::Reasoning, producer, s)) {
              s.block_closed = true;
              continue;
            }
            s.block_bounded = false;
          }
          if (auto tok = take(s.response, TokenRole::Response, producer, s)) {
            append(s, std::move(*tok), sink, config, clock);
            ++s.block_content;
            return;
          }
          s.block_closed = true;
          continue;
        }
        if (config.emit_markers && s.position_in_segment == s.block_content) {
          append(s, Token::split_marker(), sink, config, clock);
          const bool bounded = s.next_reasoning_bounded;
          enter(s, SchedulerPhase::InReasoning);
          s.block_bounded = bounded;
          return;
        }
        const bool bounded = s.next_reasoning_bounded;
        enter(s, SchedulerPhase::InReasoning);
        s.block_bounded = bounded;
        continue;
      }

      case SchedulerPhase::InReasoning: {
        if (s.block_content == 0 && !peek(s.reasoning, TokenRole::Reasoning, producer, s)) {
          s.phase = SchedulerPhase::Done;
          return;
        }
        if (!(s.block_bounded && s.block_content == config.q)) {
          if (auto tok = take(s.reasoning, TokenRole::Reasoning, producer, s)) {
            append(s, std::move(*tok), sink, config, clock);
            ++s.block_content;
            return;
          }
        }
        enter(s, SchedulerPhase::InPadding);
        continue;
      }

      case SchedulerPhase::InPadding: {
        if (s.padding_emitted < config.padding_per_cycle) {
          append(s, Token::padding(), sink, config, clock);
          ++s.padding_emitted;
          return;
        }
        if (config.emit_markers && !s.block_closed) {
          append(s, Token::split_marker(), sink, config, clock);
          s.block_closed = true;
          return;
        }
        ++s.cycle;
        enter(s, SchedulerPhase::InResponse);
        continue;
      }
    }
  }
}

template <TokenProducer Producer, TalkerSink Sink>
void step_pad_to_cycle(SchedulerState& s, Producer& producer, Sink& sink,
                       const InterleaveConfig& config, double clock) {
  for (;;) {
    switch (s.phase) {
      case SchedulerPhase::Done: return;

      case SchedulerPhase::InResponse: {
        if (s.position_in_segment == 0 && finished(s, producer)) {
          s.phase = SchedulerPhase::Done;
          return;
        }
        if (s.position_in_segment < config.p) {
          auto tok = take(s.response, TokenRole::Response, producer, s);
          append(s, tok ? std::move(*tok) : Token::padding(), sink, config, clock);
          return;
        }
        if (config.emit_markers && s.position_in_segment == config.p) {
          append(s, Token::split_marker(), sink, config, clock);
          enter(s, SchedulerPhase::InReasoning);
          return;
        }
        enter(s, SchedulerPhase::InReasoning);
        continue;
      }

      case SchedulerPhase::InReasoning: {
        if (s.position_in_segment < config.q) {
          auto tok = take(s.reasoning, TokenRole::Reasoning, producer, s);
          append(s, tok ? std::move(*tok) : Token::padding(), sink, config, clock);
          return;
        }
        enter(s, SchedulerPhase::InPadding);
        continue;
      }

      case SchedulerPhase::InPadding: {
        if (s.padding_emitted < config.padding_per_cycle) {
          append(s, Token::padding(), sink, config, clock);
          ++s.padding_emitted;
          return;
        }
        if (config.emit_markers && s.position_in_segment == config.padding_per_cycle) {
          append(s, Token::split_marker(), sink, config, clock);
          return;
        }
        ++s.cycle;
        enter(s, SchedulerPhase::InResponse);
        continue;
      }
    }
  }
}

}  // namespace detail

/// Advances the scheduler by one token. clock is the timestamp handed to the
/// sink if the appended token is a response token.
template <TokenProducer Producer, TalkerSink Sink>
SchedulerState& step(SchedulerState& state, Producer& producer, Sink& sink,
                     const InterleaveConfig& config, double clock) {
  if (state.done()) throw std::logic_error("step: scheduler already done");
  config.validate();
  if (config.tail_policy == TailPolicy::PadToCycle) {
    detail::step_pad_to_cycle(state, producer, sink, config, clock);
  } else {
    detail::step_contiguous(state, producer, sink, config, clock);
  }
  return state;
}

/// Boundary rule the scheduler applies: whether it injects a special token at
/// a given point of a cycle, independent of the producer.
struct BoundaryRule {
  InterleaveConfig config;

  // Special tokens injected right after `content_in_block` content tokens of
  // a block with role `block`, assuming the block is complete.
  std::vector<TokenRole> injection_after(TokenRole block, std::size_t content_in_block) const {
    std::vector<TokenRole> out;
    if (block == TokenRole::Response && content_in_block == config.p) {
      if (config.emit_markers) out.push_back(TokenRole::SplitMarker);
    } else if (block == TokenRole::Reasoning && content_in_block == config.q) {
      out.assign(config.padding_per_cycle, TokenRole::Padding);
      if (config.emit_markers) out.push_back(TokenRole::SplitMarker);
    }
    return out;
  }
};

inline BoundaryRule inject_markers_policy(const InterleaveConfig& config) {
  config.validate();
  if (!config.emit_markers) {
    throw std::invalid_argument("inject_markers_policy: markers are disabled in this config");
  }
  return BoundaryRule{config};
}

// ---------------------------------------------------------------------------
// Producers and sinks

/// Replays a fixed StreamPair.
class ScriptedProducer {
 public:
  explicit ScriptedProducer(StreamPair pair) : pair_(std::move(pair)) {}

  std::optional<Token> next(TokenRole role, std::span<const Token> /*context*/) {
    ++calls_;
    if (role == TokenRole::Response) {
      if (resp_ < pair_.response().size()) return pair_.response()[resp_++];
    } else if (role == TokenRole::Reasoning) {
      if (reason_ < pair_.reasoning().size()) return pair_.reasoning()[reason_++];
    }
    ++end_signals_;
    return std::nullopt;
  }

  std::size_t calls() const noexcept { return calls_; }
  std::size_t content_calls() const noexcept { return calls_ - end_signals_; }
  std::size_t end_signals() const noexcept { return end_signals_; }

 private:
  StreamPair pair_;
  std::size_t resp_ = 0;
  std::size_t reason_ = 0;
  std::size_t calls_ = 0;
  std::size_t end_signals_ = 0;
};

/// Emits n_response / n_reasoning tokens with random ids from a seeded engine.
class RandomProducer {
 public:
  RandomProducer(std::size_t n_response, std::size_t n_reasoning, TokenId vocab_size,
                 std::uint64_t seed)
      : left_response_(n_response), left_reasoning_(n_reasoning), rng_(seed),
        ids_(0, vocab_size == 0 ? 0 : vocab_size - 1) {}

  std::optional<Token> next(TokenRole role, std::span<const Token> /*context*/) {
    std::size_t& left = role == TokenRole::Response ? left_response_ : left_reasoning_;
    if (left == 0) return std::nullopt;
    --left;
    const TokenId id = ids_(rng_);
    return Token::content(id, "t" + std::to_string(id), role);
  }

 private:
  std::size_t left_response_;
  std::size_t left_reasoning_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<TokenId> ids_;
};

/// Records every accepted token with its timestamp.
class RecordingSink {
 public:
  struct Delivery {
    Token token;
    double time;
  };

  bool accept(const Token& token, double time) {
    deliveries_.push_back({token, time});
    return true;
  }

  const std::vector<Delivery>& deliveries() const noexcept { return deliveries_; }

 private:
  std::vector<Delivery> deliveries_;
};

// ---------------------------------------------------------------------------

struct DecodeResult {
  InterleavedSequence transcript;
  LatencyReport report;
};

namespace detail {

// Generation clock: content tokens cost one interval, padding costs one
// interval only under counted accounting, markers are free.
class GenerationClock {
 public:
  GenerationClock(const RateModel& rate, std::uint64_t seed)
      : rate_(rate), rng_(seed),
        noise_(-0.5 * sigma() * sigma(), sigma()) {}

  // Timestamp the next costful token would carry.
  double peek() {
    if (!pending_) {
      if (sigma() > 0.0) {
        pending_ = now_ + noise_(rng_) / rate_.generation_rate_g;
      } else {
        pending_ = static_cast<double>(cost_ + 1) / rate_.generation_rate_g;
      }
    }
    return *pending_;
  }

  void commit(TokenRole role) {
    if (!costs_time(role, rate_.accounting)) return;
    now_ = peek();
    pending_.reset();
    ++cost_;
  }

  double now() const noexcept { return now_; }

 private:
  double sigma() const noexcept { return rate_.jitter ? rate_.jitter->sigma : 0.0; }

  RateModel rate_;
  std::mt19937_64 rng_;
  std::lognormal_distribution<double> noise_;
  std::optional<double> pending_;
  double now_ = 0.0;
  std::uint64_t cost_ = 0;
};

// Tracks sink deliveries so the report reflects what the talker was given.
template <TalkerSink Sink>
class CountingSink {
 public:
  explicit CountingSink(Sink& inner) : inner_(inner) {}

  bool accept(const Token& token, double time) {
    const bool ok = static_cast<bool>(inner_.accept(token, time));
    if (ok) times_.push_back(time);
    return ok;
  }

  const std::vector<double>& times() const noexcept { return times_; }

 private:
  Sink& inner_;
  std::vector<double> times_;
};

}  // namespace detail

/// Drives a full generation under the given paradigm and reports latency.
///
/// ThinkingInSpeaking uses the interleaving scheduler. The other paradigms
/// generate sequentially: reasoning then response (SilentReasoning and
/// FullVerbalization), or response only (SpeakingWithoutThinking, which never
/// asks for reasoning). The latency report is derived from the closed-form
/// model for the observed stream lengths when jitter is off, and from the
/// event simulation with the same seed otherwise.
template <TokenProducer Producer, TalkerSink Sink>
DecodeResult run_decode(Producer& producer, Sink& sink, const InterleaveConfig& config,
                        DecodeParadigm paradigm, const RateModel& rate, std::uint64_t seed = 0) {
  rate.validate();
  config.validate();
  detail::GenerationClock clock(rate, seed);
  detail::CountingSink<Sink> counting(sink);

  DecodeResult result;
  SchedulerState state;
  std::size_t n_response = 0;
  std::size_t n_reasoning = 0;

  if (paradigm == DecodeParadigm::ThinkingInSpeaking) {
    while (!state.done()) {
      const std::size_t before = state.transcript.size();
      step(state, producer, counting, config, clock.peek());
      if (state.transcript.size() > before) clock.commit(state.transcript.tokens.back().role());
    }
    n_response = state.response.delivered;
    n_reasoning = state.reasoning.delivered;
    result.transcript = std::move(state.transcript);
  } else {
    auto& transcript = result.transcript;
    auto drain = [&](TokenRole role, std::size_t group, bool speak) {
      std::size_t count = 0;
      for (;;) {
        std::optional<Token> got;
        try {
          got = producer.next(role, std::span<const Token>(transcript.tokens));
        } catch (const std::exception& e) {
          throw ProducerFailure(std::string("producer failed: ") + e.what(), transcript.size());
        }
        if (!got) return count;
        Token tok = got->with_role(role);
        const double t = clock.peek();
        if (speak) {
          bool ok = false;
          try {
            ok = counting.accept(tok, t);
          } catch (const std::exception& e) {
            throw SinkFailure(std::string("talker sink failed: ") + e.what(), transcript.size());
          }
          if (!ok) throw SinkFailure("talker sink rejected token", transcript.size());
        }
        clock.commit(role);
        transcript.push(std::move(tok), group, true);
        ++count;
      }
    };
    if (paradigm != DecodeParadigm::SpeakingWithoutThinking) {
      n_reasoning = drain(TokenRole::Reasoning, 0,
                          paradigm == DecodeParadigm::FullVerbalization);
    }
    n_response = drain(TokenRole::Response, paradigm == DecodeParadigm::SilentReasoning ? 1 : 0,
                       true);
  }

  RateModel report_rate = rate;
  if (rate.jitter && rate.jitter->sigma > 0.0) {
    result.report = simulate_events(paradigm, n_reasoning, n_response, config, report_rate, seed);
  } else {
    result.report = closed_form_latency(paradigm, n_reasoning, n_response, config, report_rate);
  }
  // What the talker actually received is authoritative for these fields.
  const auto& times = counting.times();
  result.report.spoken_token_count = times.size();
  result.report.first_audio_latency_s = times.empty() ? kNoAudio : times.front();
  return result;
}

}  // namespace thinkspeak

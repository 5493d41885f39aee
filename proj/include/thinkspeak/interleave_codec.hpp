#pragma once

// Deterministic conversion between a StreamPair and its interleaved form.
//
// One cycle with markers enabled is laid out as
//
//   Response x p | SplitMarker | Reasoning x q | Padding x k | SplitMarker
//
// where k = padding_per_cycle. Cycles repeat while both streams still hold
// tokens (the last one may be short on either side). What happens after one
// stream runs out is decided by the tail policy:
//
//   ContiguousRemainder  the leftover stream is one final block; a leftover
//                        response block is "Response x r | SplitMarker", a
//                        leftover reasoning block keeps its empty response
//                        block's marker: "SplitMarker | Reasoning x r |
//                        Padding x k | SplitMarker".
//   PadToCycle           full cycles continue until both streams are empty;
//                        slots of the exhausted stream are filled with padding.
//
// Without markers the same layout is used with every SplitMarker removed.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "thinkspeak/core_types.hpp"

namespace thinkspeak {

struct SegmentDescriptor {
  TokenRole role;
  std::size_t length;
  std::size_t cycle;

  friend bool operator==(const SegmentDescriptor&, const SegmentDescriptor&) = default;
};

struct PatternViolation {
  std::size_t position;
  TokenRole expected;  // End here means "the sequence should have ended"
  TokenRole found;     // End here means "the sequence ended early"
  std::size_t cycle;

  friend bool operator==(const PatternViolation&, const PatternViolation&) = default;
};

class PatternError : public std::runtime_error {
 public:
  explicit PatternError(std::vector<PatternViolation> violations)
      : std::runtime_error(describe(violations)), violations_(std::move(violations)) {}

  const std::vector<PatternViolation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<PatternViolation>& v) {
    if (v.empty()) return "interleave pattern violation";
    const auto& first = v.front();
    return "interleave pattern violation at position " + std::to_string(first.position) +
           " (cycle " + std::to_string(first.cycle) + "): expected " +
           std::string(role_name(first.expected)) + ", found " +
           std::string(role_name(first.found));
  }

  std::vector<PatternViolation> violations_;
};

namespace detail {

class ScheduleBuilder {
 public:
  void add(TokenRole role, std::size_t length, std::size_t cycle) {
    if (length == 0) return;
    if (!out_.empty() && out_.back().role == role && out_.back().cycle == cycle) {
      out_.back().length += length;
    } else {
      out_.push_back({role, length, cycle});
    }
  }

  std::vector<SegmentDescriptor> take() && { return std::move(out_); }

 private:
  std::vector<SegmentDescriptor> out_;
};

}  // namespace detail

inline std::vector<SegmentDescriptor> build_schedule(const InterleaveConfig& config,
                                                     std::size_t n_response,
                                                     std::size_t n_reasoning) {
  config.validate();
  detail::ScheduleBuilder b;
  const std::size_t marker = config.emit_markers ? 1 : 0;
  const std::size_t pad = config.padding_per_cycle;
  std::size_t resp = n_response;
  std::size_t reason = n_reasoning;
  std::size_t cycle = 0;

  if (config.tail_policy == TailPolicy::PadToCycle) {
    while (resp > 0 || reason > 0) {
      const std::size_t a = std::min(config.p, resp);
      const std::size_t r = std::min(config.q, reason);
      b.add(TokenRole::Response, a, cycle);
      b.add(TokenRole::Padding, config.p - a, cycle);
      b.add(TokenRole::SplitMarker, marker, cycle);
      b.add(TokenRole::Reasoning, r, cycle);
      b.add(TokenRole::Padding, (config.q - r) + pad, cycle);
      b.add(TokenRole::SplitMarker, marker, cycle);
      resp -= a;
      reason -= r;
      ++cycle;
    }
    return std::move(b).take();
  }

  while (resp > 0 && reason > 0) {
    const std::size_t a = std::min(config.p, resp);
    const std::size_t r = std::min(config.q, reason);
    b.add(TokenRole::Response, a, cycle);
    b.add(TokenRole::SplitMarker, marker, cycle);
    b.add(TokenRole::Reasoning, r, cycle);
    b.add(TokenRole::Padding, pad, cycle);
    b.add(TokenRole::SplitMarker, marker, cycle);
    resp -= a;
    reason -= r;
    ++cycle;
  }
  if (resp > 0) {
    b.add(TokenRole::Response, resp, cycle);
    b.add(TokenRole::SplitMarker, marker, cycle);
  } else if (reason > 0) {
    b.add(TokenRole::SplitMarker, marker, cycle);
    b.add(TokenRole::Reasoning, reason, cycle);
    b.add(TokenRole::Padding, pad, cycle);
    b.add(TokenRole::SplitMarker, marker, cycle);
  }
  return std::move(b).take();
}

inline std::size_t schedule_length(const std::vector<SegmentDescriptor>& schedule) {
  std::size_t n = 0;
  for (const auto& s : schedule) n += s.length;
  return n;
}

inline InterleavedSequence interleave(const StreamPair& pair, const InterleaveConfig& config) {
  const auto& response = pair.response();
  const auto& reasoning = pair.reasoning();
  const auto schedule = build_schedule(config, response.size(), reasoning.size());

  InterleavedSequence out;
  const std::size_t total = schedule_length(schedule);
  out.tokens.reserve(total);
  out.cycle_index.reserve(total);
  out.loss_mask.reserve(total);

  std::size_t ri = 0;
  std::size_t ti = 0;
  for (const auto& seg : schedule) {
    const bool mask = loss_mask_for(seg.role, config);
    for (std::size_t i = 0; i < seg.length; ++i) {
      switch (seg.role) {
        case TokenRole::Response: out.push(response[ri++], seg.cycle, mask); break;
        case TokenRole::Reasoning: out.push(reasoning[ti++], seg.cycle, mask); break;
        default: out.push(Token::special(seg.role), seg.cycle, mask); break;
      }
    }
  }
  return out;
}

/// Checks a sequence's role string against the schedule implied by its own
/// content counts. The first divergence is reported; after it, positions no
/// longer line up, so nothing further is meaningful.
inline std::vector<PatternViolation> validate_pattern(const InterleavedSequence& seq,
                                                      const InterleaveConfig& config) {
  std::size_t n_response = 0;
  std::size_t n_reasoning = 0;
  for (const auto& t : seq.tokens) {
    if (t.role() == TokenRole::Response) ++n_response;
    if (t.role() == TokenRole::Reasoning) ++n_reasoning;
  }
  const auto schedule = build_schedule(config, n_response, n_reasoning);

  std::size_t pos = 0;
  for (const auto& seg : schedule) {
    for (std::size_t i = 0; i < seg.length; ++i, ++pos) {
      if (pos >= seq.size()) {
        // Ran out of tokens: report against the last position in range.
        const std::size_t at = seq.empty() ? 0 : seq.size() - 1;
        return {{at, seg.role, TokenRole::End, seg.cycle}};
      }
      const TokenRole found = seq.tokens[pos].role();
      if (found != seg.role) return {{pos, seg.role, found, seg.cycle}};
    }
  }
  if (pos < seq.size()) {
    const std::size_t cycle = schedule.empty() ? 0 : schedule.back().cycle + 1;
    return {{pos, TokenRole::End, seq.tokens[pos].role(), cycle}};
  }
  return {};
}

inline StreamPair deinterleave(const InterleavedSequence& seq, const InterleaveConfig& config) {
  auto violations = validate_pattern(seq, config);
  if (!violations.empty()) throw PatternError(std::move(violations));

  std::vector<Token> reasoning;
  std::vector<Token> response;
  for (const auto& t : seq.tokens) {
    if (t.role() == TokenRole::Response) response.push_back(t);
    if (t.role() == TokenRole::Reasoning) reasoning.push_back(t);
  }
  return StreamPair(std::move(reasoning), std::move(response));
}

inline std::vector<Token> spoken_projection(const InterleavedSequence& seq) {
  std::vector<Token> out;
  for (const auto& t : seq.tokens) {
    if (t.role() == TokenRole::Response) out.push_back(t);
  }
  return out;
}

}  // namespace thinkspeak

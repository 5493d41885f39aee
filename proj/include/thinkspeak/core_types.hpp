#pragma once

// Token vocabulary, interleaving configuration and the stream containers
// shared by the codec, the scheduler, the simulator and the data pipeline.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace thinkspeak {

enum class TokenRole : std::uint8_t {
  Prompt,
  Response,
  Reasoning,
  SplitMarker,
  Padding,
  End,
};

constexpr bool is_control(TokenRole role) noexcept {
  return role == TokenRole::SplitMarker || role == TokenRole::Padding;
}

constexpr bool is_content(TokenRole role) noexcept {
  return role == TokenRole::Prompt || role == TokenRole::Response ||
         role == TokenRole::Reasoning;
}

constexpr std::string_view role_name(TokenRole role) noexcept {
  switch (role) {
    case TokenRole::Prompt: return "prompt";
    case TokenRole::Response: return "response";
    case TokenRole::Reasoning: return "reasoning";
    case TokenRole::SplitMarker: return "split-marker";
    case TokenRole::Padding: return "padding";
    case TokenRole::End: return "end";
  }
  return "?";
}

// One-character role codes used by the line-delimited record format.
constexpr char role_code(TokenRole role) noexcept {
  switch (role) {
    case TokenRole::Prompt: return 'Q';
    case TokenRole::Response: return 'A';
    case TokenRole::Reasoning: return 'T';
    case TokenRole::SplitMarker: return '|';
    case TokenRole::Padding: return '_';
    case TokenRole::End: return '$';
  }
  return '?';
}

inline std::optional<TokenRole> role_from_code(char code) noexcept {
  switch (code) {
    case 'Q': return TokenRole::Prompt;
    case 'A': return TokenRole::Response;
    case 'T': return TokenRole::Reasoning;
    case '|': return TokenRole::SplitMarker;
    case '_': return TokenRole::Padding;
    case '$': return TokenRole::End;
    default: return std::nullopt;
  }
}

using TokenId = std::uint32_t;

// Special tokens live at the top of the id space. Content ids must stay
// strictly below kFirstReservedId.
inline constexpr TokenId kSplitMarkerId = std::numeric_limits<TokenId>::max();
inline constexpr TokenId kPaddingId = kSplitMarkerId - 1;
inline constexpr TokenId kEndId = kSplitMarkerId - 2;
inline constexpr TokenId kFirstReservedId = kSplitMarkerId - 15;

constexpr bool is_reserved_id(TokenId id) noexcept { return id >= kFirstReservedId; }

/// A single atom of the generation stream.
///
/// Content tokens (prompt, response, reasoning) are built with content() and
/// must use ids below kFirstReservedId. Split markers, padding and the end
/// token have fixed reserved ids and an empty surface.
class Token {
 public:
  static Token content(TokenId id, std::string surface, TokenRole role) {
    if (!is_content(role)) {
      throw std::invalid_argument("Token::content: role '" + std::string(role_name(role)) +
                                  "' is not a content role");
    }
    if (is_reserved_id(id)) {
      throw std::invalid_argument("Token::content: id " + std::to_string(id) +
                                  " is reserved for control tokens");
    }
    return Token(id, std::move(surface), role);
  }

  static Token split_marker() { return Token(kSplitMarkerId, {}, TokenRole::SplitMarker); }
  static Token padding() { return Token(kPaddingId, {}, TokenRole::Padding); }
  static Token end() { return Token(kEndId, {}, TokenRole::End); }

  static Token special(TokenRole role) {
    switch (role) {
      case TokenRole::SplitMarker: return split_marker();
      case TokenRole::Padding: return padding();
      case TokenRole::End: return end();
      default: throw std::invalid_argument("Token::special: not a special role");
    }
  }

  // Same id and surface, new content role. The scheduler uses this to stamp
  // the role it expected onto whatever a producer returned.
  Token with_role(TokenRole role) const { return content(id_, surface_, role); }

  TokenId id() const noexcept { return id_; }
  TokenRole role() const noexcept { return role_; }
  const std::string& surface() const noexcept { return surface_; }

  // Detokenized text. Special tokens are string-invisible.
  std::string_view text() const noexcept {
    return is_content(role_) ? std::string_view(surface_) : std::string_view();
  }

  friend bool operator==(const Token&, const Token&) = default;

 private:
  Token(TokenId id, std::string surface, TokenRole role)
      : id_(id), surface_(std::move(surface)), role_(role) {}

  TokenId id_;
  std::string surface_;
  TokenRole role_;
};

inline std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.text();
  return out;
}

enum class TailPolicy : std::uint8_t {
  // Once one stream runs out, the rest of the other is one contiguous block.
  ContiguousRemainder,
  // Keep full cycles until both streams run out; empty slots become padding.
  PadToCycle,
};

constexpr std::string_view tail_policy_name(TailPolicy policy) noexcept {
  return policy == TailPolicy::PadToCycle ? "pad-to-cycle" : "contiguous-remainder";
}

inline std::optional<TailPolicy> tail_policy_from_name(std::string_view name) noexcept {
  if (name == "contiguous-remainder") return TailPolicy::ContiguousRemainder;
  if (name == "pad-to-cycle") return TailPolicy::PadToCycle;
  return std::nullopt;
}

struct InterleaveConfig {
  std::size_t p = 2;  // response tokens per cycle
  std::size_t q = 8;  // reasoning tokens per cycle
  std::size_t padding_per_cycle = 8;
  bool emit_markers = true;
  TailPolicy tail_policy = TailPolicy::ContiguousRemainder;
  bool mask_control_in_loss = true;

  void validate() const {
    if (p == 0) throw std::invalid_argument("InterleaveConfig: p must be >= 1");
    if (q == 0) throw std::invalid_argument("InterleaveConfig: q must be >= 1");
  }

  friend bool operator==(const InterleaveConfig&, const InterleaveConfig&) = default;
};

inline InterleaveConfig default_config() { return InterleaveConfig{}; }

/// The two content streams of one generation: reasoning (length M) and
/// response (length N). Both are role-pure.
class StreamPair {
 public:
  StreamPair() = default;

  StreamPair(std::vector<Token> reasoning, std::vector<Token> response)
      : reasoning_(std::move(reasoning)), response_(std::move(response)) {
    require_role(reasoning_, TokenRole::Reasoning, "reasoning");
    require_role(response_, TokenRole::Response, "response");
  }

  const std::vector<Token>& reasoning() const noexcept { return reasoning_; }
  const std::vector<Token>& response() const noexcept { return response_; }

  friend bool operator==(const StreamPair&, const StreamPair&) = default;

 private:
  static void require_role(const std::vector<Token>& stream, TokenRole role, const char* what) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
      if (stream[i].role() != role) {
        throw std::invalid_argument(std::string("StreamPair: ") + what + " stream holds a '" +
                                    std::string(role_name(stream[i].role())) +
                                    "' token at index " + std::to_string(i));
      }
    }
  }

  std::vector<Token> reasoning_;
  std::vector<Token> response_;
};

/// A token sequence with per-token cycle index and loss mask.
struct InterleavedSequence {
  std::vector<Token> tokens;
  std::vector<std::size_t> cycle_index;
  std::vector<bool> loss_mask;  // true = contributes to training loss

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  void push(Token token, std::size_t cycle, bool in_loss) {
    tokens.push_back(std::move(token));
    cycle_index.push_back(cycle);
    loss_mask.push_back(in_loss);
  }

  std::string role_string() const {
    std::string s;
    s.reserve(tokens.size());
    for (const auto& t : tokens) s.push_back(role_code(t.role()));
    return s;
  }

  friend bool operator==(const InterleavedSequence&, const InterleavedSequence&) = default;
};

inline bool loss_mask_for(TokenRole role, const InterleaveConfig& config) noexcept {
  return !(config.mask_control_in_loss && is_control(role));
}

}  // namespace thinkspeak

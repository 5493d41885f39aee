#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "thinkspeak/latency_sim.hpp"

using namespace thinkspeak;

namespace {

RateModel rate_g(double g, PaddingAccounting a = PaddingAccounting::Excluded) {
  RateModel r;
  r.generation_rate_g = g;
  r.accounting = a;
  return r;
}

}  // namespace

TEST(ClosedForm, EmissionRateTwentyWithPaddingExcluded) {
  const auto r = closed_form_latency(DecodeParadigm::ThinkingInSpeaking, 800, 200, default_config(), rate_g(100));
  EXPECT_NEAR(r.response_emission_rate, 20.0, 1e-9);
  EXPECT_NEAR(r.emission_rate_padding_excluded, 20.0, 1e-9);
  EXPECT_NEAR(r.emission_rate_padding_counted, 100.0 * 2.0 / 18.0, 1e-9);
}

TEST(ClosedForm, CountedAccountingReportsSlowerRate) {
  const auto r = closed_form_latency(DecodeParadigm::ThinkingInSpeaking, 800, 200, default_config(),
                                     rate_g(100, PaddingAccounting::Counted));
  EXPECT_NEAR(r.response_emission_rate, 11.111111111, 1e-6);
}

TEST(ClosedForm, SilentReasoningFirstAudio) {
  const auto r = closed_form_latency(DecodeParadigm::SilentReasoning, 200, 40, default_config(), rate_g(100));
  EXPECT_NEAR(r.first_audio_latency_s, 2.01, 1e-12);
}

TEST(ClosedForm, FirstAudioOneIntervalForOtherParadigms) {
  for (auto p : {DecodeParadigm::ThinkingInSpeaking, DecodeParadigm::FullVerbalization,
                 DecodeParadigm::SpeakingWithoutThinking}) {
    EXPECT_NEAR(closed_form_latency(p, 200, 40, default_config(), rate_g(100)).first_audio_latency_s, 0.01, 1e-12);
  }
}

TEST(ClosedForm, EmptyResponseHasInfiniteFirstAudio) {
  const auto r = closed_form_latency(DecodeParadigm::SpeakingWithoutThinking, 0, 0, default_config(), rate_g(100));
  EXPECT_TRUE(std::isinf(r.first_audio_latency_s));
  EXPECT_EQ(r.spoken_token_count, 0u);
  EXPECT_EQ(r.completion_time_s, 0.0);
}

TEST(ClosedForm, RejectsJitter) {
  RateModel r;
  r.jitter = JitterSpec{0.1};
  EXPECT_THROW(closed_form_latency(DecodeParadigm::ThinkingInSpeaking, 10, 5, default_config(), r),
               std::invalid_argument);
}

TEST(ClosedForm, SpokenCounts) {
  const auto c = default_config();
  EXPECT_EQ(closed_form_latency(DecodeParadigm::ThinkingInSpeaking, 80, 40, c, rate_g(100)).spoken_token_count, 40u);
  EXPECT_EQ(closed_form_latency(DecodeParadigm::FullVerbalization, 80, 40, c, rate_g(100)).spoken_token_count, 120u);
  EXPECT_EQ(closed_form_latency(DecodeParadigm::SilentReasoning, 80, 40, c, rate_g(100)).spoken_token_count, 40u);
  const auto tis = closed_form_latency(DecodeParadigm::ThinkingInSpeaking, 80, 40, c, rate_g(100));
  const auto fv = closed_form_latency(DecodeParadigm::FullVerbalization, 80, 40, c, rate_g(100));
  EXPECT_EQ(fv.spoken_token_count, 3 * tis.spoken_token_count);
}

TEST(ClosedForm, CompletionIncludesPlaybackDrain) {
  // 40 response tokens at 12.5 tok/s need 3.2 s of playback after 0.01 s.
  const auto r = closed_form_latency(DecodeParadigm::SpeakingWithoutThinking, 0, 40, default_config(), rate_g(100));
  EXPECT_NEAR(r.completion_time_s, 3.21, 1e-9);
  EXPECT_NEAR(r.generation_time_s, 0.40, 1e-12);
}

TEST(BreakEven, Values) {
  const auto be = break_even_rate(default_config(), RateModel{});
  EXPECT_DOUBLE_EQ(be.padding_excluded, 62.5);
  EXPECT_DOUBLE_EQ(be.padding_counted, 112.5);
  InterleaveConfig pure;
  pure.p = 1;
  pure.q = 0;
  pure.padding_per_cycle = 0;
  RateModel r;
  r.playback_rate_c = 7.0;
  EXPECT_DOUBLE_EQ(break_even_rate(pure, r).padding_excluded, 7.0);
}

TEST(Simulate, MatchesClosedFormWithoutJitter) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 400; ++i) {
    InterleaveConfig c;
    c.p = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    c.q = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    c.padding_per_cycle = std::uniform_int_distribution<std::size_t>(0, 16)(rng);
    c.tail_policy = i % 3 == 0 ? TailPolicy::PadToCycle : TailPolicy::ContiguousRemainder;
    RateModel r;
    r.generation_rate_g = std::uniform_real_distribution<double>(20, 300)(rng);
    r.playback_rate_c = std::uniform_real_distribution<double>(5, 40)(rng);
    r.accounting = i % 2 ? PaddingAccounting::Counted : PaddingAccounting::Excluded;
    if (i % 4 == 1) {
      r.talker_fanout_f = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
      r.window_len = std::uniform_int_distribution<std::size_t>(0, 12)(rng);
      r.window_hop = r.window_len == 0 ? 0 : std::uniform_int_distribution<std::size_t>(1, r.window_len)(rng);
    }
    const auto m = std::uniform_int_distribution<std::size_t>(0, 400)(rng);
    const auto n = std::uniform_int_distribution<std::size_t>(0, 150)(rng);
    for (auto p : kAllParadigms) {
      const auto cf = closed_form_latency(p, m, n, c, r);
      const auto sim = simulate_events(p, m, n, c, r, 1);
      const double g = r.generation_rate_g;
      ASSERT_EQ(cf.spoken_token_count, sim.spoken_token_count);
      ASSERT_EQ(cf.total_generated_tokens, sim.total_generated_tokens);
      ASSERT_EQ(cf.control_token_count, sim.control_token_count);
      if (std::isinf(cf.first_audio_latency_s)) {
        ASSERT_TRUE(std::isinf(sim.first_audio_latency_s));
      } else {
        ASSERT_LE(std::abs(cf.first_audio_latency_s - sim.first_audio_latency_s), 1.0 / g);
        ASSERT_LE(std::abs(cf.first_playback_s - sim.first_playback_s), 1.0 / g);
      }
      ASSERT_LE(std::abs(cf.completion_time_s - sim.completion_time_s), 2.0 / g);
      ASSERT_EQ(cf.underrun_events.size(), sim.underrun_events.size());
    }
  }
}

TEST(Simulate, EmissionRateTwentyOnFullCycles) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = simulate_events(DecodeParadigm::ThinkingInSpeaking, 40000, 10000, default_config(), rate_g(100), 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_NEAR(r.response_emission_rate, 20.0, 5e-4);
  EXPECT_LT(secs, 1.0);
}

TEST(Simulate, NoUnderrunsAtDefaultRates) {
  for (std::size_t n : {1u, 10u, 100u, 1000u, 10000u}) {
    for (std::size_t m : {n, 2 * n, 4 * n}) {
      const auto r = simulate_events(DecodeParadigm::ThinkingInSpeaking, m, n, default_config(), rate_g(100), 0);
      EXPECT_TRUE(r.underrun_events.empty()) << "n=" << n << " m=" << m;
    }
  }
}

TEST(Simulate, CountedAccountingUnderrunsAtDefaultRate) {
  const auto r = simulate_events(DecodeParadigm::ThinkingInSpeaking, 800, 200, default_config(),
                                 rate_g(100, PaddingAccounting::Counted), 0);
  EXPECT_FALSE(r.underrun_events.empty());
}

TEST(Simulate, BreakEvenTransition) {
  const auto below = simulate_events(DecodeParadigm::ThinkingInSpeaking, 40000, 10000, default_config(), rate_g(62), 0);
  const auto at = simulate_events(DecodeParadigm::ThinkingInSpeaking, 40000, 10000, default_config(), rate_g(62.5), 0);
  const auto above = simulate_events(DecodeParadigm::ThinkingInSpeaking, 40000, 10000, default_config(), rate_g(63), 0);
  EXPECT_GE(below.underrun_events.size(), 1u);
  EXPECT_TRUE(at.underrun_events.empty());
  EXPECT_TRUE(above.underrun_events.empty());
}

TEST(Simulate, UnderrunDichotomyGrid) {
  const auto c = default_config();
  for (auto acc : {PaddingAccounting::Excluded, PaddingAccounting::Counted}) {
    const double be = break_even_rate(c, RateModel{}).for_accounting(acc);
    for (double g = 30.0; g <= 200.0; g += 2.5) {
      const auto r = simulate_events(DecodeParadigm::ThinkingInSpeaking, 800, 200, c, rate_g(g, acc), 0);
      EXPECT_EQ(r.underrun_events.empty(), g >= be) << "g=" << g << " " << accounting_name(acc);
    }
  }
}

TEST(Simulate, DeterministicForSeed) {
  RateModel r;
  r.jitter = JitterSpec{0.4};
  const auto a = simulate_events(DecodeParadigm::ThinkingInSpeaking, 400, 100, default_config(), r, 17);
  const auto b = simulate_events(DecodeParadigm::ThinkingInSpeaking, 400, 100, default_config(), r, 17);
  const auto d = simulate_events(DecodeParadigm::ThinkingInSpeaking, 400, 100, default_config(), r, 18);
  EXPECT_EQ(a.completion_time_s, b.completion_time_s);
  EXPECT_EQ(a.underrun_events, b.underrun_events);
  EXPECT_NE(a.completion_time_s, d.completion_time_s);
}

TEST(Simulate, WindowGatesFirstPlayback) {
  RateModel r;
  r.talker_fanout_f = 4;
  r.window_len = 10;
  r.window_hop = 5;
  // Audio token 9 belongs to verbalized token 2 (0-based), generated at 3/g.
  const auto cf = closed_form_latency(DecodeParadigm::SpeakingWithoutThinking, 0, 20, default_config(), r);
  const auto sim = simulate_events(DecodeParadigm::SpeakingWithoutThinking, 0, 20, default_config(), r, 0);
  EXPECT_NEAR(cf.first_audio_latency_s, 0.01, 1e-12);
  EXPECT_NEAR(cf.first_playback_s, 0.03, 1e-12);
  EXPECT_NEAR(sim.first_playback_s, 0.03, 1e-12);
}

TEST(Properties, SilentMonotoneInMAndInterleavedConstant) {
  const auto c = default_config();
  double prev = -1.0;
  for (std::size_t m = 0; m <= 1000; m += 10) {
    const double s = closed_form_latency(DecodeParadigm::SilentReasoning, m, 40, c, rate_g(100)).first_audio_latency_s;
    const double t = closed_form_latency(DecodeParadigm::ThinkingInSpeaking, m, 40, c, rate_g(100)).first_audio_latency_s;
    EXPECT_GT(s, prev);
    EXPECT_DOUBLE_EQ(t, 0.01);
    prev = s;
  }
}

TEST(Properties, InterleavedNeverLaterThanSilent) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto m = std::uniform_int_distribution<std::size_t>(0, 1000)(rng);
    const auto n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    const double g = std::uniform_real_distribution<double>(10, 500)(rng);
    const double t = closed_form_latency(DecodeParadigm::ThinkingInSpeaking, m, n, default_config(), rate_g(g)).first_audio_latency_s;
    const double s = closed_form_latency(DecodeParadigm::SilentReasoning, m, n, default_config(), rate_g(g)).first_audio_latency_s;
    if (m == 0) {
      EXPECT_DOUBLE_EQ(t, s);
    } else {
      EXPECT_LT(t, s);
    }
  }
}

TEST(Properties, ReportInvariants) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto m = std::uniform_int_distribution<std::size_t>(0, 300)(rng);
    const auto n = std::uniform_int_distribution<std::size_t>(0, 100)(rng);
    for (auto p : kAllParadigms) {
      const auto r = closed_form_latency(p, m, n, default_config(), RateModel{});
      EXPECT_LE(r.spoken_token_count, r.total_generated_tokens);
      if (r.spoken_token_count > 0) EXPECT_LE(r.first_audio_latency_s, r.completion_time_s);
    }
  }
}

TEST(RateModel, Validation) {
  RateModel r;
  r.generation_rate_g = 0;
  EXPECT_THROW(r.validate(), std::invalid_argument);
  r = RateModel{};
  r.playback_rate_c = -1;
  EXPECT_THROW(r.validate(), std::invalid_argument);
  r = RateModel{};
  r.talker_fanout_f = 2;
  r.window_len = 4;
  r.window_hop = 5;
  EXPECT_THROW(r.validate(), std::invalid_argument);
  r.window_hop = 4;
  EXPECT_NO_THROW(r.validate());
}

TEST(Paradigm, NamesRoundTrip) {
  for (auto p : kAllParadigms) EXPECT_EQ(paradigm_from_name(paradigm_name(p)), p);
  EXPECT_FALSE(paradigm_from_name("nope").has_value());
}

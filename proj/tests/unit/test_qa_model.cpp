#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "scqa/qa_model.hpp"
#include "scqa/text.hpp"

namespace scqa {
namespace {

Conversation fixture() {
  Conversation c;
  c.id = "c1";
  c.domain = "test";
  c.document_clean = text::split_words("the cat sat on the mat near a red door");
  c.document_asr = text::split_words("the cat sad on the mat near red door");
  const auto turn = [](int id, const char* q, const char* qa, const char* a, Span r, Span ra) {
    Turn t;
    t.turn_id = id;
    t.question_clean = text::split_words(q);
    t.question_asr = text::split_words(qa);
    t.answer_text = a;
    t.rationale_clean = r;
    t.rationale_asr = ra;
    return t;
  };
  c.turns = {turn(1, "who sat", "who sad", "the cat", {0, 1}, {0, 1}),
             turn(2, "on what", "on what", "the mat", {4, 5}, {4, 5}),
             turn(3, "near what", "near what", "a red door", {7, 9}, {7, 8})};
  return c;
}

Corpus fixture_corpus() {
  Corpus corpus;
  corpus.id = "fixture";
  corpus.conversations = {fixture()};
  return corpus;
}

std::vector<int> words_to_ids(const Vocab& v, const char* s) {
  std::vector<int> out;
  for (const auto& w : text::split_words(s)) out.push_back(v.id(w));
  return out;
}

std::vector<int> slice(const std::vector<int>& v, std::size_t b, std::size_t e) {
  return {v.begin() + static_cast<long>(b), v.begin() + static_cast<long>(e)};
}

ModelConfig small_config(FusionMechanism f, const Vocab& vocab, const SpeechConfig& speech) {
  ModelConfig m;
  m.d = 8;
  m.heads = 2;
  m.d_ff = 16;
  m.max_len = 32;
  m.text_vocab = vocab.size();
  m.speech_vocab = static_cast<std::size_t>(speech_vocab_size(speech));
  m.fusion = f;
  return m;
}

TEST(Vocab, SpecialsAndNormalization) {
  const Vocab v = Vocab::build(fixture_corpus());
  EXPECT_EQ(v.tokens()[0], "[PAD]");
  EXPECT_EQ(v.tokens()[4], "[A]");
  EXPECT_EQ(v.id("Cat,"), v.id("cat"));
  EXPECT_EQ(v.id("zebra"), Vocab::kUnk);
  EXPECT_NE(v.id("sad"), Vocab::kUnk);
  EXPECT_EQ(Vocab().size(), 5u);
}

TEST(BuildInput, FirstTurnHasEmptyHistory) {
  const Vocab v = Vocab::build(fixture_corpus());
  const auto in = build_input(fixture(), 1, View::clean, v, {}, {});
  EXPECT_EQ(in.history_turns, 0u);
  EXPECT_EQ(in.doc_len, 10u);
  const std::vector<int> tail{Vocab::kSep, Vocab::kQ, v.id("who"), v.id("sat")};
  EXPECT_EQ(slice(in.text, 10, in.text.size()), tail);
}

TEST(BuildInput, ThirdTurnCarriesTwoPriorTurnsInOrder) {
  const Vocab v = Vocab::build(fixture_corpus());
  InputConfig cfg;
  cfg.k_history = 2;
  const auto in = build_input(fixture(), 3, View::asr, v, {}, cfg);
  EXPECT_EQ(in.history_turns, 2u);
  std::vector<int> expect = words_to_ids(v, "the cat sad on the mat near red door");
  expect.push_back(Vocab::kSep);
  for (auto [q, a] : {std::pair{"who sad", "the cat"}, std::pair{"on what", "the mat"}}) {
    expect.push_back(Vocab::kQ);
    for (int id : words_to_ids(v, q)) expect.push_back(id);
    expect.push_back(Vocab::kA);
    for (int id : words_to_ids(v, a)) expect.push_back(id);
  }
  expect.push_back(Vocab::kQ);
  for (int id : words_to_ids(v, "near what")) expect.push_back(id);
  EXPECT_EQ(in.text, expect);
  ASSERT_EQ(in.text_segments.size(), in.text.size());
  EXPECT_EQ(in.text_segments[0], QAInput::kSegDocument);
  EXPECT_EQ(in.text_segments[9], QAInput::kSegHistory);
  EXPECT_EQ(in.text_segments.back(), QAInput::kSegQuestion);
}

TEST(BuildInput, HistoryWindowRespectsK) {
  const Vocab v = Vocab::build(fixture_corpus());
  InputConfig cfg;
  cfg.k_history = 1;
  EXPECT_EQ(build_input(fixture(), 3, View::clean, v, {}, cfg).history_turns, 1u);
  cfg.k_history = 0;
  EXPECT_EQ(build_input(fixture(), 3, View::clean, v, {}, cfg).history_turns, 0u);
}

TEST(BuildInput, HistoryAnswersComeFromCleanText) {
  Conversation c = fixture();
  c.turns[0].answer_text = "mat";  // present only as a clean answer string
  const Vocab v = Vocab::build(fixture_corpus());
  const auto in = build_input(c, 2, View::asr, v, {}, {});
  EXPECT_NE(std::find(in.text.begin() + 10, in.text.end(), v.id("mat")), in.text.end());
}

TEST(BuildInput, OverlengthDropsOldestHistoryThenTrimsQuestion) {
  const Vocab v = Vocab::build(fixture_corpus());
  InputConfig cfg;
  cfg.k_history = 2;
  const std::size_t full = build_input(fixture(), 3, View::clean, v, {}, cfg).text.size();
  // Turn-1 block is [Q] who sat [A] the cat: 6 tokens.
  cfg.max_len = full - 1;
  auto in = build_input(fixture(), 3, View::clean, v, {}, cfg);
  EXPECT_EQ(in.history_turns, 1u);
  EXPECT_EQ(in.doc_len, 10u);
  const std::vector<int> kept{Vocab::kSep, Vocab::kQ, v.id("on"), v.id("what"), Vocab::kA};
  EXPECT_EQ(slice(in.text, 10, 15), kept);
  cfg.max_len = 13;  // document + [SEP] + [Q] + one question word
  in = build_input(fixture(), 3, View::clean, v, {}, cfg);
  EXPECT_EQ(in.history_turns, 0u);
  EXPECT_EQ(in.text.size(), 13u);
  EXPECT_EQ(in.text.back(), v.id("near"));
  cfg.max_len = 11;
  EXPECT_THROW(build_input(fixture(), 3, View::clean, v, {}, cfg), InputError);
}

TEST(BuildInput, TurnOutOfRange) {
  const Vocab v = Vocab::build(fixture_corpus());
  EXPECT_THROW(build_input(fixture(), 0, View::clean, v, {}, {}), InputError);
  EXPECT_THROW(build_input(fixture(), 4, View::clean, v, {}, {}), InputError);
}

TEST(BuildInput, Pure) {
  const Vocab v = Vocab::build(fixture_corpus());
  for (View view : {View::clean, View::asr})
    for (std::size_t turn = 1; turn <= 3; ++turn) {
      const auto a = build_input(fixture(), turn, view, v, {}, {});
      const auto b = build_input(fixture(), turn, view, v, {}, {});
      EXPECT_EQ(a.text, b.text);
      EXPECT_EQ(a.speech, b.speech);
      EXPECT_EQ(a.speech_segments, b.speech_segments);
    }
}

TEST(BuildInput, SpeechStreamRendersCleanWordsWithNoiseOnAsrSide) {
  const Vocab v = Vocab::build(fixture_corpus());
  SpeechConfig sp;
  sp.noise = 0.0;
  const auto clean = build_input(fixture(), 2, View::clean, v, sp, {});
  const auto asr = build_input(fixture(), 2, View::asr, v, sp, {});
  EXPECT_EQ(clean.speech, asr.speech);
  sp.noise = 0.5;
  const auto noisy = build_input(fixture(), 2, View::asr, v, sp, {});
  EXPECT_EQ(noisy.speech.size(), clean.speech.size());
  EXPECT_NE(noisy.speech, clean.speech);
  EXPECT_NE(std::find(clean.speech.begin(), clean.speech.end(), kSpeechSep), clean.speech.end());
}

TEST(GoldSpan, PerView) {
  const auto c = fixture();
  EXPECT_EQ(gold_span(c, 3, View::clean).end, 9u);
  EXPECT_EQ(gold_span(c, 3, View::asr).end, 8u);
  Conversation unfiltered = c;
  unfiltered.turns[2].rationale_asr.reset();
  EXPECT_THROW(gold_span(unfiltered, 3, View::asr), ContractError);
}

class ForwardByFusion : public ::testing::TestWithParam<FusionMechanism> {};

TEST_P(ForwardByFusion, ScoresCoverDocumentAndAreDeterministic) {
  const Vocab v = Vocab::build(fixture_corpus());
  const SpeechConfig sp;
  Rng rng(0);
  const Model m = Model::init(small_config(GetParam(), v, sp), rng);
  const auto in = build_input(fixture(), 2, View::asr, v, sp, {});
  const auto a = forward(m, in), b = forward(m, in);
  ASSERT_EQ(a.start.size(), 9u);
  ASSERT_EQ(a.end.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(a.start[i], b.start[i]);
    EXPECT_EQ(a.end[i], b.end[i]);
    EXPECT_TRUE(std::isfinite(a.start[i]));
  }
  EXPECT_EQ(m.w_start.rows(), GetParam() == FusionMechanism::con_fusion ? 24u : 16u);
}

TEST_P(ForwardByFusion, HeadGradientMatchesFiniteDifferences) {
  const Vocab v = Vocab::build(fixture_corpus());
  const SpeechConfig sp;
  Rng rng(1);
  const Model m = Model::init(small_config(GetParam(), v, sp), rng);
  const auto in = build_input(fixture(), 3, View::clean, v, sp, {});
  const GoldSpan gold = gold_span(fixture(), 3, View::clean);
  const auto loss = [&] { return span_loss(forward(m, in), gold); };
  EXPECT_LE(oracle::gradient_rel_error(loss, {m.w_start, m.w_end}), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllMechanisms, ForwardByFusion,
                         ::testing::Values(FusionMechanism::dual_attention, FusionMechanism::con_fusion,
                                           FusionMechanism::speech_only, FusionMechanism::text_only),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Forward, TextOnlyIgnoresSpeechStream) {
  const Vocab v = Vocab::build(fixture_corpus());
  const SpeechConfig sp;
  Rng rng(2);
  const Model m = Model::init(small_config(FusionMechanism::text_only, v, sp), rng);
  auto in = build_input(fixture(), 1, View::asr, v, sp, {});
  const auto a = forward(m, in);
  in.speech.assign(in.speech.size(), kSpeechFirstPhoneme);
  const auto b = forward(m, in);
  for (std::size_t i = 0; i < a.start.size(); ++i) EXPECT_EQ(a.start[i], b.start[i]);
}

TEST(SpanLoss, UniformLogitsGiveTwoLogN) {
  for (std::size_t n : {1u, 2u, 7u, 30u}) {
    const SpanLogits z{Tensor::zeros({n}), Tensor::zeros({n})};
    EXPECT_NEAR(span_loss(z, {0, n - 1, ""}).item(), 2 * std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(SpanLoss, LargeMarginDrivesLossToZero) {
  std::vector<double> s(51, 0.0), e(51, 0.0);
  s[10] = 20.0;
  e[12] = 20.0;
  const double loss = span_loss({Tensor::vector(s), Tensor::vector(e)}, {10, 12, ""}).item();
  // Closed form: 2 ln(1 + 50 e^-20).
  const double closed = 2 * std::log1p(50 * std::exp(-20.0));
  EXPECT_NEAR(loss, closed, 1e-6 * closed);
  EXPECT_LT(loss, 2.1e-7);
  EXPECT_GT(loss, 0.0);
}

TEST(SpanLoss, GoldOutOfRange) {
  const SpanLogits z{Tensor::zeros({4}), Tensor::zeros({4})};
  EXPECT_THROW(span_loss(z, {2, 4, ""}), ContractError);
  EXPECT_THROW(span_loss(z, {3, 2, ""}), ContractError);
}

TEST(SpanLossProperty, NonNegativePermutationCovariantAndShiftInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 20;
    std::vector<double> s(n), e(n);
    for (auto& x : s) x = u(rng);
    for (auto& x : e) x = u(rng);
    std::uniform_int_distribution<std::size_t> pos(0, n - 1);
    std::size_t gs = pos(rng), ge = pos(rng);
    if (gs > ge) std::swap(gs, ge);
    const double base = span_loss({Tensor::vector(s), Tensor::vector(e)}, {gs, ge, ""}).item();
    EXPECT_GE(base, 0.0);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(n), pe(n);
    std::size_t ns = 0, ne = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ps[perm[i]] = s[i];
      pe[perm[i]] = e[i];
    }
    ns = perm[gs];
    ne = perm[ge];
    // The loss only needs the two gold positions; their order is irrelevant to it.
    const Tensor lps = pick(log_softmax_temp(Tensor::vector(ps), 1.0), ns);
    const Tensor lpe = pick(log_softmax_temp(Tensor::vector(pe), 1.0), ne);
    EXPECT_NEAR(-(lps.item() + lpe.item()), base, 1e-12);

    const double c = u(rng) * 20.0;
    std::vector<double> shifted = s;
    for (auto& x : shifted) x += c;
    EXPECT_NEAR(span_loss({Tensor::vector(shifted), Tensor::vector(e)}, {gs, ge, ""}).item(), base, 1e-12);
    EXPECT_EQ(decode_span(shifted, e, 30), decode_span(s, e, 30));
  }
}

TEST(DecodeSpan, Examples) {
  EXPECT_EQ(decode_span(std::vector<double>{1.5}, std::vector<double>{-2.0}, 30),
            (std::pair<std::size_t, std::size_t>{0, 0}));
  const std::vector<double> s{0, 5, 0}, e{0, 0, 5};
  EXPECT_EQ(decode_span(s, e, 3), (std::pair<std::size_t, std::size_t>{1, 2}));
  EXPECT_EQ(decode_span(s, e, 1), (std::pair<std::size_t, std::size_t>{1, 1}));
  EXPECT_EQ(oracle::exhaustive_decode(s, e, 3), (std::pair<std::size_t, std::size_t>{1, 2}));
  EXPECT_EQ(oracle::exhaustive_decode(s, e, 1), (std::pair<std::size_t, std::size_t>{1, 1}));
}

TEST(DecodeSpan, Errors) {
  EXPECT_THROW(decode_span(std::vector<double>{}, std::vector<double>{}, 3), ContractError);
  EXPECT_THROW(decode_span(std::vector<double>{1}, std::vector<double>{1}, 0), ContractError);
}

TEST(DecodeSpan, TiesGoToSmallestStartThenEnd) {
  const std::vector<double> zeros(6, 0.0);
  EXPECT_EQ(decode_span(zeros, zeros, 4), (std::pair<std::size_t, std::size_t>{0, 0}));
  const std::vector<double> s{1, 0, 1, 0}, e{0, 2, 0, 2};
  EXPECT_EQ(decode_span(s, e, 4), (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(DecodeSpanProperty, AgreesWithExhaustiveSearch) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(-2, 2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 30;
    const std::size_t max_len = 1 + static_cast<std::size_t>(trial * 7) % 12;
    std::vector<double> s(n), e(n);
    // Every third instance uses coarse integer scores so ties are common.
    const bool ties = trial % 3 == 0;
    for (auto& x : s) x = ties ? small(rng) : u(rng);
    for (auto& x : e) x = ties ? small(rng) : u(rng);
    EXPECT_EQ(decode_span(s, e, max_len), oracle::exhaustive_decode(s, e, max_len))
        << "trial " << trial << " n " << n;
  }
}

}  // namespace
}  // namespace scqa

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "scqa/metrics.hpp"
#include "scqa/text.hpp"

namespace scqa {
namespace {

// Random ASCII answer text: mixed case, attached punctuation, articles,
// irregular whitespace.
std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pool = {"orange", "white", "The", "a", "An", "cat", "Cotton's",
                                                "5", "sisters", "and", "THE", "mommy", "stripes", "tiger",
                                                "an", "x", "anthem", "theater", "a.m.", "U.S."};
  static const std::string punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  std::uniform_int_distribution<std::size_t> len(0, 7), word(0, pool.size() - 1), p(0, punct.size() - 1);
  std::uniform_int_distribution<int> coin(0, 5);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    out += coin(rng) == 0 ? "  " : (coin(rng) == 0 ? "\t" : " ");
    if (coin(rng) == 0) out += punct[p(rng)];
    out += pool[word(rng)];
    if (coin(rng) == 0) out += punct[p(rng)];
  }
  if (coin(rng) == 0) out += " ";
  return out;
}

TEST(ExactMatch, Examples) {
  EXPECT_EQ(exact_match("orange and white", "orange and white"), 1);
  EXPECT_EQ(exact_match("Orange!", "orange"), 1);
  EXPECT_EQ(oracle::squad_exact("Orange!", "orange"), 1);
  EXPECT_EQ(exact_match("orange", "white"), 0);
  EXPECT_EQ(exact_match("the  Cat.", "a cat"), 1);
}

TEST(Normalize, SquadRules) {
  EXPECT_EQ(normalize_answer("  The Cat's   hat, an APPLE! "), "cats hat apple");
  EXPECT_EQ(normalize_answer("theater anthem"), "theater anthem");
  EXPECT_EQ(normalize_answer("a the an"), "");
}

TEST(F1Token, Examples) {
  EXPECT_DOUBLE_EQ(f1_token("orange and white", "orange and white"), 1.0);
  EXPECT_DOUBLE_EQ(f1_token("orange", "orange and white"), 0.5);
  EXPECT_DOUBLE_EQ(f1_token("orange", "white"), 0.0);
  EXPECT_DOUBLE_EQ(f1_token("", ""), 1.0);
  EXPECT_DOUBLE_EQ(f1_token("the", "a"), 1.0);
  EXPECT_DOUBLE_EQ(f1_token("", "cat"), 0.0);
  EXPECT_DOUBLE_EQ(f1_token("cat", "the"), 0.0);
}

TEST(MetricsOracle, AgreesWithReferenceOnRandomPairs) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const std::string pred = random_text(rng);
    // Half of the golds are perturbations of the prediction so matches occur.
    const std::string gold = i % 2 ? random_text(rng) : pred + (i % 4 ? "" : " the");
    EXPECT_EQ(normalize_answer(pred), oracle::squad_normalize(pred)) << pred;
    EXPECT_EQ(exact_match(pred, gold), oracle::squad_exact(pred, gold)) << pred << " | " << gold;
    EXPECT_NEAR(f1_token(pred, gold), oracle::squad_f1(pred, gold), 1e-12) << pred << " | " << gold;
  }
}

TEST(F1TokenProperty, MatchesMultisetIntersectionOnRandomBags) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(0, 8), tok(0, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> a, b;
    for (int i = len(rng); i > 0; --i) a.push_back("t" + std::to_string(tok(rng)));
    for (int i = len(rng); i > 0; --i) b.push_back("t" + std::to_string(tok(rng)));
    std::multiset<std::string> ma(a.begin(), a.end()), mb(b.begin(), b.end());
    std::vector<std::string> common;
    std::set_intersection(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(common));
    double expect;
    if (a.empty() || b.empty())
      expect = a.empty() && b.empty() ? 1.0 : 0.0;
    else
      expect = 2.0 * static_cast<double>(common.size()) / static_cast<double>(a.size() + b.size());
    EXPECT_NEAR(f1_token(text::join_words(a), text::join_words(b)), expect, 1e-12);
  }
}

TEST(MetricsProperty, BoundsAndImplications) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 300; ++i) {
    const auto p = random_text(rng), g = random_text(rng);
    const int em = exact_match(p, g);
    const double f1 = f1_token(p, g);
    EXPECT_TRUE(em == 0 || em == 1);
    EXPECT_GE(f1, 0.0);
    EXPECT_LE(f1, 1.0);
    if (em) EXPECT_EQ(f1, 1.0);
    EXPECT_EQ(exact_match(p, p), 1);
  }
}

TEST(Aos, Examples) {
  EXPECT_EQ(aos({3, 6}, {3, 6}), 1.0);
  EXPECT_EQ(aos({0, 1}, {4, 7}), 0.0);
  EXPECT_DOUBLE_EQ(aos({2, 5}, {4, 7}), 1.0 / 3.0);
  EXPECT_THROW(aos({5, 2}, {1, 1}), ContractError);
  EXPECT_THROW(aos({1, 1}, {5, 2}), ContractError);
}

TEST(FrameF1, Examples) {
  EXPECT_EQ(frame_f1({3, 6}, {3, 6}), 1.0);
  EXPECT_DOUBLE_EQ(frame_f1({2, 5}, {4, 7}), 0.5);
  EXPECT_EQ(frame_f1({0, 1}, {4, 7}), 0.0);
  EXPECT_THROW(frame_f1({5, 2}, {1, 1}), ContractError);
}

TEST(SpanMetricsProperty, BoundsSymmetryAndIouBelowDice) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> pos(0, 40);
  for (int i = 0; i < 1000; ++i) {
    std::size_t a = pos(rng), b = pos(rng), c = pos(rng), d = pos(rng);
    const Span s{std::min(a, b), std::max(a, b)}, g{std::min(c, d), std::max(c, d)};
    // Set-arithmetic oracle over explicit position sets.
    std::set<std::size_t> ps, gs, inter, uni;
    for (std::size_t x = s.start; x <= s.end; ++x) ps.insert(x);
    for (std::size_t x = g.start; x <= g.end; ++x) gs.insert(x);
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(inter, inter.end()));
    std::set_union(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(uni, uni.end()));
    const double iou = static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    const double dice = 2.0 * static_cast<double>(inter.size()) / static_cast<double>(ps.size() + gs.size());
    EXPECT_NEAR(aos(s, g), iou, 1e-15);
    EXPECT_NEAR(frame_f1(s, g), dice, 1e-15);
    EXPECT_EQ(aos(s, g), aos(g, s));
    EXPECT_EQ(frame_f1(s, g), frame_f1(g, s));
    EXPECT_GE(aos(s, g), 0.0);
    EXPECT_LE(frame_f1(s, g), 1.0);
    EXPECT_LE(aos(s, g), frame_f1(s, g) + 1e-15);
  }
}

Corpus three_example_corpus() {
  Corpus c;
  c.id = "three";
  Conversation conv;
  conv.id = "c";
  conv.document_clean = text::split_words("the orange cat and the white dog slept");
  conv.document_asr = conv.document_clean;
  const auto turn = [](int id, const char* answer, Span r) {
    Turn t;
    t.turn_id = id;
    t.answer_text = answer;
    t.rationale_clean = r;
    t.rationale_asr = r;
    return t;
  };
  conv.turns = {turn(1, "orange cat", {1, 2}), turn(2, "white dog", {5, 6}), turn(3, "slept", {7, 7})};
  c.conversations = {conv};
  return c;
}

TEST(Evaluate, GoldPredictionsScoreHundred) {
  const Corpus c = three_example_corpus();
  std::vector<Prediction> preds;
  for (const auto& t : c.conversations[0].turns) preds.push_back({"c", t.turn_id, t.rationale_clean});
  const auto r = evaluate(preds, c, View::clean);
  EXPECT_EQ(r.em, 100.0);
  EXPECT_EQ(r.f1, 100.0);
  EXPECT_EQ(r.aos, 100.0);
  EXPECT_EQ(r.frame_f1, 100.0);
}

TEST(Evaluate, AggregatesEqualHandComputedMeans) {
  const Corpus c = three_example_corpus();
  // 1: "orange" vs "orange cat": EM 0, F1 2/3, spans (1,1) vs (1,2): AOS 1/2, FF1 2/3.
  // 2: "white dog" exact: all 1.
  // 3: "dog slept" vs "slept": EM 0, F1 2/3, spans (6,7) vs (7,7): AOS 1/2, FF1 2/3.
  const std::vector<Prediction> preds{{"c", 1, {1, 1}}, {"c", 2, {5, 6}}, {"c", 3, {6, 7}}};
  const auto r = evaluate(preds, c, View::asr, {"m", "three", View::clean, 4});
  EXPECT_NEAR(r.em, 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.f1, 100.0 * (2.0 / 3 + 1 + 2.0 / 3) / 3, 1e-9);
  EXPECT_NEAR(r.aos, 100.0 * (0.5 + 1 + 0.5) / 3, 1e-9);
  EXPECT_NEAR(r.frame_f1, 100.0 * (2.0 / 3 + 1 + 2.0 / 3) / 3, 1e-9);
  EXPECT_EQ(r.run.view, View::asr);
  EXPECT_EQ(r.examples[2].predicted_text, "dog slept");
  double sum = 0;
  for (const auto& e : r.examples) sum += e.f1;
  EXPECT_NEAR(r.f1, 100.0 * sum / 3.0, 1e-9);
}

TEST(Evaluate, Misalignment) {
  const Corpus c = three_example_corpus();
  EXPECT_THROW(evaluate({{"c", 1, {1, 1}}}, c, View::clean), ContractError);
  EXPECT_THROW(evaluate({{"c", 1, {1, 1}}, {"c", 3, {1, 1}}, {"c", 2, {1, 1}}}, c, View::clean),
               ContractError);
  EXPECT_THROW(evaluate({{"c", 1, {1, 1}}, {"c", 2, {1, 1}}, {"c", 3, {1, 8}}}, c, View::clean),
               ContractError);
  Corpus unfiltered = c;
  unfiltered.conversations[0].turns[1].rationale_asr.reset();
  EXPECT_THROW(evaluate({{"c", 1, {1, 1}}, {"c", 2, {1, 1}}, {"c", 3, {1, 1}}}, unfiltered, View::asr),
               ContractError);
}

TEST(Report, JsonRoundTripAndCsv) {
  const Corpus c = three_example_corpus();
  const std::vector<Prediction> preds{{"c", 1, {1, 1}}, {"c", 2, {5, 6}}, {"c", 3, {6, 7}}};
  const auto r = evaluate(preds, c, View::clean, {"model-1", "three", View::clean, 9});
  const auto j = to_json(r);
  const auto back = report_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.run.model_id, "model-1");
  EXPECT_EQ(back.examples.size(), 3u);
  EXPECT_EQ(report_csv(r),
            "model,corpus,view,seed,n,em,f1,aos,frame_f1\n"
            "model-1,three,clean,9,3,33.3333,77.7778,66.6667,77.7778\n");
}

TEST(Evaluate, Deterministic) {
  const Corpus c = fixture::noisy_corpus(5, 4, 12, 0.2, 2);
  std::vector<Prediction> preds;
  for (const auto& conv : c.conversations)
    for (const auto& t : conv.turns) preds.push_back({conv.id, t.turn_id, {0, 1}});
  EXPECT_EQ(to_json(evaluate(preds, c, View::asr)), to_json(evaluate(preds, c, View::asr)));
}

}  // namespace
}  // namespace scqa

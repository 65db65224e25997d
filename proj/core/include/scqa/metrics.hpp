#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scqa/corpus.hpp"

namespace scqa {

/// SQuAD answer normalization: lowercase, drop punctuation, drop the articles
/// a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

/// 1 iff the normalized strings are equal.
int exact_match(std::string_view pred, std::string_view gold);

/// Bag-of-tokens F1 over normalized tokens. Both empty -> 1, one empty -> 0.
double f1_token(std::string_view pred, std::string_view gold);

/// Intersection over union of two inclusive token-index intervals (the token
/// index stands in for time). Throws ContractError when start > end.
double aos(Span pred, Span gold);

/// F1 over the position sets of two inclusive intervals.
double frame_f1(Span pred, Span gold);

struct Prediction {
  std::string conversation;
  int turn_id = 0;
  Span span;
};

struct ExampleScore {
  std::string conversation;
  int turn_id = 0;
  std::string predicted_text;
  int em = 0;
  double f1 = 0.0;
  double aos = 0.0;
  double frame_f1 = 0.0;
};

struct RunInfo {
  std::string model_id;
  std::string corpus_id;
  View view = View::asr;
  std::uint64_t seed = 0;
};

struct EvalReport {
  RunInfo run;
  std::vector<ExampleScore> examples;
  // Percentages: arithmetic mean of the per-example values times 100.
  double em = 0.0;
  double f1 = 0.0;
  double aos = 0.0;
  double frame_f1 = 0.0;
};

/// Scores predictions aligned one-to-one (same order) with the corpus turns.
/// EM/F1 compare the predicted document words with answer_text; AOS and
/// frame F1 compare spans with the rationale in the evaluated view.
EvalReport evaluate(const std::vector<Prediction>& predictions, const Corpus& corpus, View view,
                    RunInfo run = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
/// Header plus one summary row: model,corpus,view,seed,n,em,f1,aos,frame_f1.
std::string report_csv(const EvalReport& report);

}  // namespace scqa

#include "scqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>

#include "scqa/error.hpp"
#include "scqa/text.hpp"

namespace scqa {

using nlohmann::json;

std::string normalize_answer(std::string_view s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    lowered.push_back(static_cast<char>(std::tolower(u)));
  }
  std::string out;
  for (const auto& w : text::split_words(lowered)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

int exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

double f1_token(std::string_view pred, std::string_view gold) {
  const auto p = text::split_words(normalize_answer(pred));
  const auto g = text::split_words(normalize_answer(gold));
  return text::bag_f1(p, g);
}

namespace {

void check_span(Span s, const char* what) {
  if (s.start > s.end)
    throw ContractError(std::string(what) + " span has start " + std::to_string(s.start) +
                        " after end " + std::to_string(s.end));
}

std::size_t overlap(Span a, Span b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi >= lo ? hi - lo + 1 : 0;
}

}  // namespace

double aos(Span pred, Span gold) {
  check_span(pred, "predicted");
  check_span(gold, "gold");
  const auto inter = overlap(pred, gold);
  const auto uni = pred.length() + gold.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double frame_f1(Span pred, Span gold) {
  check_span(pred, "predicted");
  check_span(gold, "gold");
  const auto inter = overlap(pred, gold);
  if (inter == 0) return 0.0;
  const double p = static_cast<double>(inter) / static_cast<double>(pred.length());
  const double r = static_cast<double>(inter) / static_cast<double>(gold.length());
  return 2.0 * p * r / (p + r);
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const Corpus& corpus, View view,
                    RunInfo run) {
  if (predictions.size() != corpus.turn_count())
    throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(corpus.turn_count()) + " turns");
  EvalReport report;
  report.run = std::move(run);
  report.run.view = view;
  std::size_t k = 0;
  for (const auto& conv : corpus.conversations) {
    const auto& doc = conv.document(view);
    for (const auto& turn : conv.turns) {
      const auto& pred = predictions[k++];
      if (pred.conversation != conv.id || pred.turn_id != turn.turn_id)
        throw ContractError("evaluate: prediction " + std::to_string(k - 1) + " is for " +
                            pred.conversation + "#" + std::to_string(pred.turn_id) + ", expected " +
                            conv.id + "#" + std::to_string(turn.turn_id));
      if (pred.span.end >= doc.size())
        throw ContractError("evaluate: predicted span leaves the document of " + conv.id);
      std::optional<Span> gold = view == View::clean ? std::optional(turn.rationale_clean)
                                                     : turn.rationale_asr;
      if (!gold)
        throw ContractError("evaluate: " + conv.id + "#" + std::to_string(turn.turn_id) +
                            " has no ASR rationale; run the filter first");
      ExampleScore s;
      s.conversation = conv.id;
      s.turn_id = turn.turn_id;
      s.predicted_text = text::join_words(std::span(doc).subspan(pred.span.start, pred.span.length()));
      s.em = exact_match(s.predicted_text, turn.answer_text);
      s.f1 = f1_token(s.predicted_text, turn.answer_text);
      s.aos = aos(pred.span, *gold);
      s.frame_f1 = frame_f1(pred.span, *gold);
      report.examples.push_back(std::move(s));
    }
  }
  if (!report.examples.empty()) {
    double em = 0, f1 = 0, ao = 0, ff = 0;
    for (const auto& e : report.examples) {
      em += e.em;
      f1 += e.f1;
      ao += e.aos;
      ff += e.frame_f1;
    }
    const double n = static_cast<double>(report.examples.size());
    report.em = 100.0 * em / n;
    report.f1 = 100.0 * f1 / n;
    report.aos = 100.0 * ao / n;
    report.frame_f1 = 100.0 * ff / n;
  }
  return report;
}

json to_json(const EvalReport& report) {
  json examples = json::array();
  for (const auto& e : report.examples)
    examples.push_back({{"conversation", e.conversation},
                        {"turn", e.turn_id},
                        {"prediction", e.predicted_text},
                        {"em", e.em},
                        {"f1", e.f1},
                        {"aos", e.aos},
                        {"frame_f1", e.frame_f1}});
  return json{{"run",
               {{"model", report.run.model_id},
                {"corpus", report.run.corpus_id},
                {"view", to_string(report.run.view)},
                {"seed", report.run.seed}}},
              {"aggregate",
               {{"em", report.em}, {"f1", report.f1}, {"aos", report.aos}, {"frame_f1", report.frame_f1}}},
              {"examples", std::move(examples)}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    const auto& run = j.at("run");
    r.run.model_id = run.at("model").get<std::string>();
    r.run.corpus_id = run.at("corpus").get<std::string>();
    r.run.view = parse_view(run.at("view").get<std::string>());
    r.run.seed = run.at("seed").get<std::uint64_t>();
    const auto& agg = j.at("aggregate");
    r.em = agg.at("em").get<double>();
    r.f1 = agg.at("f1").get<double>();
    r.aos = agg.at("aos").get<double>();
    r.frame_f1 = agg.at("frame_f1").get<double>();
    for (const auto& e : j.at("examples")) {
      ExampleScore s;
      s.conversation = e.at("conversation").get<std::string>();
      s.turn_id = e.at("turn").get<int>();
      s.predicted_text = e.at("prediction").get<std::string>();
      s.em = e.at("em").get<int>();
      s.f1 = e.at("f1").get<double>();
      s.aos = e.at("aos").get<double>();
      s.frame_f1 = e.at("frame_f1").get<double>();
      r.examples.push_back(std::move(s));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError("", std::string("eval report: ") + e.what());
  }
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "model,corpus,view,seed,n,em,f1,aos,frame_f1\n";
  os << report.run.model_id << ',' << report.run.corpus_id << ',' << to_string(report.run.view) << ','
     << report.run.seed << ',' << report.examples.size() << std::fixed << std::setprecision(4) << ','
     << report.em << ',' << report.f1 << ',' << report.aos << ',' << report.frame_f1 << '\n';
  return os.str();
}

}  // namespace scqa

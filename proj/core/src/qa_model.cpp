#include "scqa/qa_model.hpp"

#include <algorithm>
#include <set>

#include "scqa/error.hpp"
#include "scqa/text.hpp"

namespace scqa {

namespace {

const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[SEP]", "[Q]", "[A]"};

void append_words(std::vector<int>& out, const std::vector<std::string>& words, const Vocab& vocab) {
  for (const auto& w : words) out.push_back(vocab.id(w));
}

}  // namespace

Vocab::Vocab() : tokens_(kSpecials) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  for (auto& t : tokens) {
    if (v.index_.count(t)) continue;
    v.index_[t] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocab Vocab::build(const Corpus& corpus) {
  std::set<std::string> words;
  auto add = [&](const std::vector<std::string>& ws) {
    for (const auto& w : ws) {
      auto n = text::normalize_token(w);
      if (!n.empty()) words.insert(std::move(n));
    }
  };
  for (const auto& conv : corpus.conversations) {
    add(conv.document_clean);
    add(conv.document_asr);
    for (const auto& t : conv.turns) {
      add(t.question_clean);
      add(t.question_asr);
      add(text::split_words(t.answer_text));
    }
  }
  return from_tokens({words.begin(), words.end()});
}

int Vocab::id(const std::string& word) const {
  const auto it = index_.find(text::normalize_token(word));
  return it == index_.end() ? kUnk : it->second;
}

QAInput build_input(const Conversation& conv, std::size_t turn, View view, const Vocab& vocab,
                    const SpeechConfig& speech, const InputConfig& config) {
  if (turn < 1 || turn > conv.turns.size())
    throw InputError("build_input: turn " + std::to_string(turn) + " outside 1.." +
                     std::to_string(conv.turns.size()) + " of " + conv.id);
  const auto& doc = conv.document(view);
  if (doc.empty())
    throw InputError("build_input: " + conv.id + " has an empty " + to_string(view) + " document");
  const std::size_t fixed = doc.size() + 2;  // [SEP] and the current [Q]
  if (fixed > config.max_len)
    throw InputError("build_input: document of " + conv.id + " (" + std::to_string(doc.size()) +
                     " words) does not fit max_len " + std::to_string(config.max_len));

  const Turn& current = conv.turns[turn - 1];
  std::vector<int> question;
  append_words(question, current.question(view), vocab);

  std::vector<std::vector<int>> history;
  const std::size_t first = turn - 1 - std::min(config.k_history, turn - 1);
  for (std::size_t i = first; i + 1 < turn; ++i) {
    std::vector<int> h{Vocab::kQ};
    append_words(h, conv.turns[i].question(view), vocab);
    h.push_back(Vocab::kA);
    append_words(h, text::split_words(conv.turns[i].answer_text), vocab);
    history.push_back(std::move(h));
  }
  auto history_len = [&] {
    std::size_t n = 0;
    for (const auto& h : history) n += h.size();
    return n;
  };
  while (!history.empty() && fixed + history_len() + question.size() > config.max_len)
    history.erase(history.begin());
  if (fixed + history_len() + question.size() > config.max_len)
    question.resize(config.max_len - fixed - history_len());

  QAInput in;
  in.turn = static_cast<int>(turn);
  in.doc_len = doc.size();
  in.history_turns = history.size();
  append_words(in.text, doc, vocab);
  in.text_segments.assign(in.text.size(), QAInput::kSegDocument);
  in.text.push_back(Vocab::kSep);
  for (const auto& h : history) in.text.insert(in.text.end(), h.begin(), h.end());
  in.text_segments.resize(in.text.size(), QAInput::kSegHistory);
  in.text.push_back(Vocab::kQ);
  in.text.insert(in.text.end(), question.begin(), question.end());
  in.text_segments.resize(in.text.size(), QAInput::kSegQuestion);

  // The speech stream renders the clean words; the ASR side hears them with
  // acoustic noise.
  const std::uint64_t stream =
      text::mix_seed(text::mix_seed(speech.seed, text::fnv1a(conv.id)), turn);
  const bool noisy = view == View::asr;
  in.speech = speech_tokens(conv.document_clean, speech, noisy, stream);
  in.speech_segments.assign(in.speech.size(), QAInput::kSegDocument);
  in.speech.push_back(kSpeechSep);
  const auto q = speech_tokens(current.question_clean, speech, noisy, text::mix_seed(stream, 1));
  in.speech.insert(in.speech.end(), q.begin(), q.end());
  in.speech_segments.resize(in.speech.size(), QAInput::kSegQuestion);
  if (in.speech.size() > config.max_len) {
    in.speech.resize(config.max_len);
    in.speech_segments.resize(config.max_len);
  }
  return in;
}

GoldSpan gold_span(const Conversation& conv, std::size_t turn, View view) {
  if (turn < 1 || turn > conv.turns.size())
    throw InputError("gold_span: turn " + std::to_string(turn) + " outside " + conv.id);
  const Turn& t = conv.turns[turn - 1];
  const std::optional<Span> s = view == View::clean ? std::optional(t.rationale_clean) : t.rationale_asr;
  if (!s)
    throw ContractError("gold_span: " + conv.id + "#" + std::to_string(t.turn_id) +
                        " has no ASR rationale; run the filter first");
  return GoldSpan{s->start, s->end, t.answer_text};
}

Model Model::init(const ModelConfig& config, Rng& rng) {
  if (config.text_vocab == 0 || config.speech_vocab == 0)
    throw InputError("model: vocabulary sizes must be set");
  Model m;
  m.config = config;
  m.text_encoder = EncoderParams::init(Modality::text, config.text_vocab, config.max_len, config.d,
                                       config.heads, config.d_ff, rng);
  m.speech_encoder = EncoderParams::init(Modality::speech, config.speech_vocab, config.max_len,
                                         config.d, config.heads, config.d_ff, rng);
  m.fusion = FusionParams::init(config.d, config.heads, config.d_ff, config.shared_w1, rng);
  const std::size_t width = m.encoding_width();
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  std::vector<double> a(width), b(width);
  for (auto& x : a) x = dist(rng);
  for (auto& x : b) x = dist(rng);
  m.w_start = Tensor::matrix(width, 1, std::move(a), true);
  m.w_end = Tensor::matrix(width, 1, std::move(b), true);
  return m;
}

std::size_t Model::encoding_width() const {
  return config.fusion == FusionMechanism::con_fusion ? 3 * config.d : 2 * config.d;
}

NamedTensors Model::named() const {
  NamedTensors out = text_encoder.named("text");
  for (auto& p : speech_encoder.named("speech")) out.push_back(std::move(p));
  for (auto& p : fusion.named("fusion")) out.push_back(std::move(p));
  out.emplace_back("head.start", w_start);
  out.emplace_back("head.end", w_end);
  return out;
}

namespace {

std::vector<int> padded(const std::vector<int>& ids, std::size_t len, int pad) {
  std::vector<int> out = ids;
  out.resize(len, pad);
  return out;
}

}  // namespace

SpanLogits forward(const Model& model, const QAInput& input) {
  const std::size_t n = model.config.max_len;
  if (input.text.size() > n || input.speech.size() > n)
    throw InputError("forward: input exceeds max_len " + std::to_string(n));
  if (input.doc_len == 0 || input.doc_len > input.text.size())
    throw InputError("forward: document length " + std::to_string(input.doc_len) + " is invalid");
  const auto text_ids = padded(input.text, n, Vocab::kPad);
  const auto text_segments = padded(input.text_segments, n, QAInput::kSegDocument);
  const Tensor et = encode(text_ids, model.text_encoder, text_segments);

  const auto fusion = model.config.fusion;
  Tensor fused;
  if (fusion == FusionMechanism::text_only) {
    fused = unimodal(et, fusion);
  } else {
    const auto speech_ids = padded(input.speech, n, kSpeechPad);
    const auto speech_segments = padded(input.speech_segments, n, QAInput::kSegDocument);
    const Tensor es = encode(speech_ids, model.speech_encoder, speech_segments);
    switch (fusion) {
      case FusionMechanism::dual_attention: fused = dual_attention(es, et, model.fusion); break;
      case FusionMechanism::con_fusion: fused = con_fusion(es, et); break;
      default: fused = unimodal(es, fusion); break;
    }
  }
  const Tensor doc = slice_rows(encoding_layer(et, fused), 0, input.doc_len);
  return SpanLogits{reshape(matmul(doc, model.w_start), {input.doc_len}),
                    reshape(matmul(doc, model.w_end), {input.doc_len})};
}

Tensor span_loss(const SpanLogits& logits, const GoldSpan& gold) {
  const std::size_t n = logits.start.size();
  if (logits.end.size() != n) throw DimensionError("span_loss: start and end lengths differ");
  if (gold.start > gold.end || gold.end >= n)
    throw ContractError("span_loss: gold span (" + std::to_string(gold.start) + "," +
                        std::to_string(gold.end) + ") outside a document of " + std::to_string(n));
  const Tensor ls = pick(log_softmax_temp(logits.start, 1.0), gold.start);
  const Tensor le = pick(log_softmax_temp(logits.end, 1.0), gold.end);
  return scale(add(ls, le), -1.0);
}

std::pair<std::size_t, std::size_t> decode_span(std::span<const double> start,
                                                std::span<const double> end,
                                                std::size_t max_span_len) {
  if (start.empty()) throw ContractError("decode_span: empty document");
  if (end.size() != start.size()) throw DimensionError("decode_span: start and end lengths differ");
  if (max_span_len == 0) throw ContractError("decode_span: max_span_len must be at least 1");
  const std::size_t n = start.size();
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_score = start[0] + end[0];
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t last = std::min(n - 1, s + max_span_len - 1);
    for (std::size_t e = s; e <= last; ++e) {
      const double score = start[s] + end[e];
      if (score > best_score) {
        best_score = score;
        best = {s, e};
      }
    }
  }
  return best;
}

std::pair<std::size_t, std::size_t> decode_span(const SpanLogits& logits, std::size_t max_span_len) {
  return decode_span(logits.start.data(), logits.end.data(), max_span_len);
}

}  // namespace scqa

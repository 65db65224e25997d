#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scqa/corpus.hpp"
#include "scqa/fusion.hpp"

namespace scqa {

/// Word vocabulary of the text modality. Ids 0..4 are the specials
/// [PAD], [UNK], [SEP], [Q], [A]; words are stored normalized.
class Vocab {
 public:
  static constexpr int kPad = 0, kUnk = 1, kSep = 2, kQ = 3, kA = 4;

  Vocab();
  /// Every normalized word of both views of the corpus, sorted.
  static Vocab build(const Corpus& corpus);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(const std::string& word) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct InputConfig {
  std::size_t max_len = 64;      // text and speech streams are both padded to this
  std::size_t k_history = 2;
};

/// One model input. Text layout: document, [SEP], history turns as
/// [Q] question [A] answer, [Q], current question. The document occupies
/// positions 0..doc_len-1 of the text stream. Segment ids mark document,
/// separator plus history, and the current question.
struct QAInput {
  static constexpr int kSegDocument = 0, kSegHistory = 1, kSegQuestion = 2;
  std::vector<int> text;    // unpadded
  std::vector<int> speech;  // unpadded
  std::vector<int> text_segments;
  std::vector<int> speech_segments;
  std::size_t doc_len = 0;
  std::size_t history_turns = 0;
  int turn = 0;             // L, 1-based
};

/// `turn` is the 1-based position L within the conversation's turn list.
/// History answers always come from the clean answer text. Overlength input
/// drops history oldest-first, then trims the question; the document is never
/// cut (InputError if it cannot fit).
QAInput build_input(const Conversation& conv, std::size_t turn, View view, const Vocab& vocab,
                    const SpeechConfig& speech, const InputConfig& config);

struct SpanLogits {
  Tensor start;  // doc_len
  Tensor end;    // doc_len
};

struct GoldSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string answer;
};

/// Rationale of turn L in the given view. ContractError if it has none.
GoldSpan gold_span(const Conversation& conv, std::size_t turn, View view);

struct ModelConfig {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
  std::size_t text_vocab = 0;
  std::size_t speech_vocab = 0;
  FusionMechanism fusion = FusionMechanism::dual_attention;
  bool shared_w1 = true;
  std::size_t max_span_len = 30;
};

struct Model {
  ModelConfig config;
  EncoderParams text_encoder;
  EncoderParams speech_encoder;
  FusionParams fusion;
  Tensor w_start;  // width × 1
  Tensor w_end;    // width × 1

  static Model init(const ModelConfig& config, Rng& rng);
  /// Every trainable tensor with a stable name. Unused parts (the speech path
  /// under text_only, fusion weights outside dual_attention) are included.
  NamedTensors named() const;
  /// Width of the encoding layer output for the configured mechanism.
  std::size_t encoding_width() const;
};

SpanLogits forward(const Model& model, const QAInput& input);

/// -log p(start) - log p(end) under softmax (tau = 1).
Tensor span_loss(const SpanLogits& logits, const GoldSpan& gold);

/// argmax of start[s] + end[e] over s <= e <= s + max_span_len - 1, ties to
/// the smallest s, then the smallest e.
std::pair<std::size_t, std::size_t> decode_span(std::span<const double> start,
                                                std::span<const double> end,
                                                std::size_t max_span_len);
std::pair<std::size_t, std::size_t> decode_span(const SpanLogits& logits, std::size_t max_span_len);

}  // namespace scqa

#pragma once

// Conversational spoken-QA data model and everything that produces or
// inspects it: JSON load/save, the synthetic generator, the word-level ASR
// noisy channel, the pseudo-phoneme speech channel, word error rate, the
// answer-availability filter and per-domain statistics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace scqa {

enum class View { clean, asr };
const char* to_string(View v);
View parse_view(const std::string& s);

/// Inclusive word-index interval.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - start + 1; }
  bool operator==(const Span&) const = default;
};

struct Turn {
  int turn_id = 0;  // 1-based, strictly increasing within a conversation
  std::vector<std::string> question_clean;
  std::vector<std::string> question_asr;
  std::string answer_text;
  Span rationale_clean;
  std::optional<Span> rationale_asr;
  std::optional<int> depends_on;  // turn_id of an earlier turn

  const std::vector<std::string>& question(View v) const {
    return v == View::clean ? question_clean : question_asr;
  }
  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::string id;
  std::string domain;
  std::vector<std::string> document_clean;
  std::vector<std::string> document_asr;
  std::vector<Turn> turns;

  const std::vector<std::string>& document(View v) const {
    return v == View::clean ? document_clean : document_asr;
  }
  bool has_asr() const { return !document_asr.empty(); }
  bool operator==(const Conversation&) const = default;
};

/// Pseudo-phoneme stand-in for the audio modality. Each normalized word maps
/// deterministically to 1..max_tokens_per_word phoneme ids; the ASR-side
/// stream additionally substitutes each phoneme with probability `noise`.
struct SpeechConfig {
  int inventory = 96;
  int max_tokens_per_word = 3;
  double noise = 0.1;
  std::uint64_t seed = 0;
  bool operator==(const SpeechConfig&) const = default;
};

inline constexpr int kSpeechPad = 0;
inline constexpr int kSpeechSep = 1;
inline constexpr int kSpeechFirstPhoneme = 2;

struct Corpus {
  static constexpr int kSchemaVersion = 1;
  std::string id;
  SpeechConfig speech;
  std::vector<Conversation> conversations;

  std::size_t turn_count() const;
  bool operator==(const Corpus&) const = default;
};

// ---- persistence --------------------------------------------------------------

nlohmann::json to_json(const Corpus& corpus);
/// Throws ParseError carrying a JSON pointer to the offending node.
Corpus corpus_from_json(const nlohmann::json& j);
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// ---- synthetic generator ---------------------------------------------------------

struct SynthConfig {
  std::size_t vocab_size = 200;
  std::size_t conversations = 500;
  std::size_t turns = 10;
  std::size_t doc_length = 24;
  std::size_t min_span = 1;
  std::size_t max_span = 4;
  double depends_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Word used for synthetic vocabulary entry i ("w017").
std::string synth_word(std::size_t i);
std::vector<std::string> synth_vocabulary(std::size_t vocab_size);

/// Clean views only. Questions carry the first and last word of their
/// rationale after a wh-word; dependent turns continue right after the
/// previous rationale and carry only its last word.
Corpus synth(const SynthConfig& config);

// ---- noisy channels ------------------------------------------------------------

struct NoiseConfig {
  double target_wer = 0.159;
  double substitution = 0.6;
  double deletion = 0.2;
  double insertion = 0.2;
  std::vector<std::string> confusion;  // substitution / insertion candidates
  std::uint64_t seed = 0;

  /// Throws DomainError on rates outside [0,1) or weights not summing to 1.
  void validate() const;
};

/// Independent per-word edits whose expected minimum-edit WER is target_wer.
std::vector<std::string> asr_channel(const std::vector<std::string>& words,
                                     const NoiseConfig& noise);

/// Fills document_asr / question_asr of every conversation. Each sequence uses
/// its own stream seed derived from noise.seed, the conversation id and field.
Corpus apply_asr_channel(const Corpus& corpus, const NoiseConfig& noise);

/// Phoneme stream for a word sequence; `noisy` applies the acoustic noise with
/// stream seed `stream`.
std::vector<int> speech_tokens(const std::vector<std::string>& words, const SpeechConfig& config,
                               bool noisy, std::uint64_t stream);
int speech_vocab_size(const SpeechConfig& config);

// ---- word error rate ---------------------------------------------------------------

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t total() const { return substitutions + deletions + insertions; }
};

/// Minimum unit-cost edit distance between word sequences (verbatim comparison).
EditCounts edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

/// (S + D + I) / |ref|. Throws DomainError for an empty reference.
double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

/// For each hyp position, the ref position it is aligned to along one optimal
/// edit path (match or substitution), or -1 for an insertion.
std::vector<long> align_to_reference(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp);

// ---- filtering --------------------------------------------------------------------

struct FilterConfig {
  double fuzzy_threshold = 0.8;
};

enum class RemovalReason { span_missing, dependency_cascade };
const char* to_string(RemovalReason r);

struct Removal {
  std::string conversation;
  int turn_id = 0;
  RemovalReason reason = RemovalReason::span_missing;
  bool operator==(const Removal&) const = default;
};

struct FilterResult {
  Corpus corpus;
  std::vector<Removal> removals;
};

/// Locates a clean rationale inside the ASR document: exact word match
/// (normalized tokens) nearest to the clean position, else the best fuzzy
/// window with token-F1 >= threshold.
std::optional<Span> locate_rationale(const std::vector<std::string>& rationale,
                                     const std::vector<std::string>& asr_document,
                                     std::size_t clean_start, double fuzzy_threshold);

/// Removes turns whose rationale cannot be found in the ASR document, then
/// turns depending on a removed turn, and populates rationale_asr of the rest.
/// Conversations left without turns are dropped.
FilterResult filter(const Corpus& corpus, const FilterConfig& config = {});

std::string removals_to_jsonl(const std::vector<Removal>& removals);

// ---- statistics -----------------------------------------------------------------------

struct StatsRow {
  std::string domain;
  std::size_t passages = 0;
  std::size_t qa_pairs = 0;
  double mean_passage_length = 0.0;
  double mean_turns = 0.0;
};

/// One row per domain (sorted by name) followed by an "Overall" row.
std::vector<StatsRow> stats(const Corpus& corpus);
std::string stats_csv(const std::vector<StatsRow>& rows);
std::string stats_table(const std::vector<StatsRow>& rows);

// ---- splitting ---------------------------------------------------------------------

struct CorpusSplit {
  Corpus train;
  Corpus test;
};

/// Seeded shuffle of conversations; the first round(test_fraction * n) go to test.
CorpusSplit split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed);

}  // namespace scqa

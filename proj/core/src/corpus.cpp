#include "scqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "scqa/error.hpp"
#include "scqa/random.hpp"
#include "scqa/text.hpp"

namespace scqa {

using nlohmann::json;

const char* to_string(View v) { return v == View::clean ? "clean" : "asr"; }

View parse_view(const std::string& s) {
  if (s == "clean") return View::clean;
  if (s == "asr") return View::asr;
  throw InputError("unknown view '" + s + "' (expected clean or asr)");
}

const char* to_string(RemovalReason r) {
  return r == RemovalReason::span_missing ? "span_missing" : "dependency_cascade";
}

std::size_t Corpus::turn_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.turns.size();
  return n;
}

// ---- persistence ------------------------------------------------------------------

namespace {

std::string ptr_join(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string ptr_join(const std::string& base, std::size_t index) {
  return base + "/" + std::to_string(index);
}

const json& member(const json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.is_object()) throw ParseError(ptr, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(ptr_join(ptr, key), "required field is missing");
  return *it;
}

std::string get_string(const json& obj, const std::string& key, const std::string& ptr) {
  const auto& v = member(obj, key, ptr);
  if (!v.is_string()) throw ParseError(ptr_join(ptr, key), "expected a string");
  return v.get<std::string>();
}

long get_int(const json& obj, const std::string& key, const std::string& ptr) {
  const auto& v = member(obj, key, ptr);
  if (!v.is_number_integer()) throw ParseError(ptr_join(ptr, key), "expected an integer");
  return v.get<long>();
}

std::optional<long> opt_int(const json& obj, const std::string& key, const std::string& ptr) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw ParseError(ptr_join(ptr, key), "expected an integer");
  return it->get<long>();
}

std::optional<std::string> opt_string(const json& obj, const std::string& key,
                                      const std::string& ptr) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(ptr_join(ptr, key), "expected a string");
  return it->get<std::string>();
}

std::optional<std::size_t> find_words(const std::vector<std::string>& haystack,
                                      const std::vector<std::string>& needle,
                                      std::size_t preferred) {
  if (needle.empty() || needle.size() > haystack.size()) return std::nullopt;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (!std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<long>(i))) continue;
    const auto dist = [&](std::size_t x) { return x > preferred ? x - preferred : preferred - x; };
    if (!best || dist(i) < dist(*best)) best = i;
  }
  return best;
}

// Index of the word containing (or first starting after) a character offset.
std::size_t word_at_char(const std::string& story, long offset) {
  std::size_t word = 0;
  bool in_word = false;
  for (long i = 0; i < static_cast<long>(story.size()) && i < offset; ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(story[static_cast<std::size_t>(i)]));
    if (!space && !in_word) ++word;
    in_word = !space;
  }
  return word > 0 && in_word ? word - 1 : word;
}

Span read_span(long start, long end, std::size_t doc_len, const std::string& ptr,
               const std::string& what) {
  if (start < 0 || end < start || static_cast<std::size_t>(end) >= doc_len)
    throw ParseError(ptr, what + " [" + std::to_string(start) + ", " + std::to_string(end) +
                              "] is outside a document of " + std::to_string(doc_len) + " words");
  return Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
}

}  // namespace

json to_json(const Corpus& corpus) {
  json data = json::array();
  for (const auto& c : corpus.conversations) {
    json questions = json::array();
    json answers = json::array();
    for (const auto& t : c.turns) {
      json q = {{"turn_id", t.turn_id}, {"input_text", text::join_words(t.question_clean)}};
      if (!t.question_asr.empty()) q["input_text_asr"] = text::join_words(t.question_asr);
      if (t.depends_on) q["depends_on"] = *t.depends_on;
      questions.push_back(std::move(q));
      std::vector<std::string> rationale(
          c.document_clean.begin() + static_cast<long>(t.rationale_clean.start),
          c.document_clean.begin() + static_cast<long>(t.rationale_clean.end) + 1);
      json a = {{"turn_id", t.turn_id},
                {"input_text", t.answer_text},
                {"span_text", text::join_words(rationale)},
                {"rationale_start", t.rationale_clean.start},
                {"rationale_end", t.rationale_clean.end}};
      if (t.rationale_asr) {
        a["rationale_start_asr"] = t.rationale_asr->start;
        a["rationale_end_asr"] = t.rationale_asr->end;
      }
      answers.push_back(std::move(a));
    }
    json conv = {{"id", c.id},
                 {"source", c.domain},
                 {"story", text::join_words(c.document_clean)},
                 {"questions", std::move(questions)},
                 {"answers", std::move(answers)}};
    if (c.has_asr()) conv["story_asr"] = text::join_words(c.document_asr);
    data.push_back(std::move(conv));
  }
  return json{{"schema_version", Corpus::kSchemaVersion},
              {"id", corpus.id},
              {"speech",
               {{"inventory", corpus.speech.inventory},
                {"max_tokens_per_word", corpus.speech.max_tokens_per_word},
                {"noise", corpus.speech.noise},
                {"seed", corpus.speech.seed}}},
              {"data", std::move(data)}};
}

Corpus corpus_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("", "corpus must be a JSON object");
  Corpus corpus;
  if (auto v = opt_int(j, "schema_version", ""); v && *v != Corpus::kSchemaVersion)
    throw ParseError("/schema_version", "unsupported schema version " + std::to_string(*v));
  corpus.id = opt_string(j, "id", "").value_or("");
  if (auto it = j.find("speech"); it != j.end()) {
    const std::string ptr = "/speech";
    if (!it->is_object()) throw ParseError(ptr, "expected an object");
    corpus.speech.inventory = static_cast<int>(opt_int(*it, "inventory", ptr).value_or(96));
    corpus.speech.max_tokens_per_word =
        static_cast<int>(opt_int(*it, "max_tokens_per_word", ptr).value_or(3));
    if (auto n = it->find("noise"); n != it->end()) {
      if (!n->is_number()) throw ParseError(ptr + "/noise", "expected a number");
      corpus.speech.noise = n->get<double>();
    }
    if (auto s = it->find("seed"); s != it->end()) {
      if (!s->is_number_unsigned() && !s->is_number_integer())
        throw ParseError(ptr + "/seed", "expected an integer");
      corpus.speech.seed = s->get<std::uint64_t>();
    }
    if (corpus.speech.inventory < 1 || corpus.speech.max_tokens_per_word < 1)
      throw ParseError(ptr, "inventory and max_tokens_per_word must be positive");
  }

  const auto& data = member(j, "data", "");
  if (!data.is_array()) throw ParseError("/data", "expected an array");
  for (std::size_t ci = 0; ci < data.size(); ++ci) {
    const std::string cptr = ptr_join("/data", ci);
    const auto& cj = data[ci];
    Conversation conv;
    conv.id = get_string(cj, "id", cptr);
    conv.domain = opt_string(cj, "source", cptr).value_or("unknown");
    const std::string story = get_string(cj, "story", cptr);
    conv.document_clean = text::split_words(story);
    if (conv.document_clean.empty()) throw ParseError(ptr_join(cptr, "story"), "story is empty");
    if (auto asr = opt_string(cj, "story_asr", cptr)) conv.document_asr = text::split_words(*asr);

    const auto& qs = member(cj, "questions", cptr);
    const auto& as = member(cj, "answers", cptr);
    if (!qs.is_array()) throw ParseError(ptr_join(cptr, "questions"), "expected an array");
    if (!as.is_array()) throw ParseError(ptr_join(cptr, "answers"), "expected an array");
    if (qs.size() != as.size())
      throw ParseError(ptr_join(cptr, "answers"),
                       "has " + std::to_string(as.size()) + " entries for " +
                           std::to_string(qs.size()) + " questions");

    const auto norm_story = text::normalize_tokens(conv.document_clean);
    for (std::size_t ti = 0; ti < qs.size(); ++ti) {
      const std::string qptr = ptr_join(ptr_join(cptr, "questions"), ti);
      const std::string aptr = ptr_join(ptr_join(cptr, "answers"), ti);
      Turn turn;
      turn.turn_id = static_cast<int>(get_int(qs[ti], "turn_id", qptr));
      if (get_int(as[ti], "turn_id", aptr) != turn.turn_id)
        throw ParseError(ptr_join(aptr, "turn_id"),
                         "does not match question turn " + std::to_string(turn.turn_id));
      if (!conv.turns.empty() && turn.turn_id <= conv.turns.back().turn_id)
        throw ParseError(ptr_join(qptr, "turn_id"), "turn ids must be strictly increasing");
      turn.question_clean = text::split_words(get_string(qs[ti], "input_text", qptr));
      if (auto qa = opt_string(qs[ti], "input_text_asr", qptr))
        turn.question_asr = text::split_words(*qa);
      if (auto dep = opt_int(qs[ti], "depends_on", qptr)) {
        if (*dep >= turn.turn_id)
          throw ParseError(ptr_join(qptr, "depends_on"),
                           "turn " + std::to_string(turn.turn_id) +
                               " depends on a turn that does not precede it");
        turn.depends_on = static_cast<int>(*dep);
      }
      turn.answer_text = get_string(as[ti], "input_text", aptr);

      const auto rs = opt_int(as[ti], "rationale_start", aptr);
      const auto re = opt_int(as[ti], "rationale_end", aptr);
      if (rs && re) {
        turn.rationale_clean = read_span(*rs, *re, conv.document_clean.size(), aptr,
                                         "turn " + std::to_string(turn.turn_id) + " rationale");
      } else if (auto span_text = opt_string(as[ti], "span_text", aptr)) {
        const auto needle = text::normalize_tokens(text::split_words(*span_text));
        std::size_t preferred = 0;
        if (auto off = opt_int(as[ti], "span_start", aptr)) preferred = word_at_char(story, *off);
        auto at = find_words(norm_story, needle, preferred);
        if (!at)
          throw ParseError(ptr_join(aptr, "span_text"),
                           "turn " + std::to_string(turn.turn_id) +
                               ": rationale text does not occur in the story");
        turn.rationale_clean = Span{*at, *at + needle.size() - 1};
      } else {
        throw ParseError(aptr, "turn " + std::to_string(turn.turn_id) +
                                   " has no rationale span (rationale_start/rationale_end or "
                                   "span_text)");
      }
      const auto ras = opt_int(as[ti], "rationale_start_asr", aptr);
      const auto rae = opt_int(as[ti], "rationale_end_asr", aptr);
      if (ras && rae)
        turn.rationale_asr = read_span(*ras, *rae, conv.document_asr.size(), aptr,
                                       "turn " + std::to_string(turn.turn_id) + " ASR rationale");
      conv.turns.push_back(std::move(turn));
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("", path.string() + ": " + e.what());
  }
  return corpus_from_json(j);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write corpus file " + path.string());
  out << to_json(corpus).dump(1) << '\n';
}

// ---- synthetic generator ----------------------------------------------------------------

std::string synth_word(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "w%03zu", i);
  return buf;
}

std::vector<std::string> synth_vocabulary(std::size_t vocab_size) {
  std::vector<std::string> v;
  v.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) v.push_back(synth_word(i));
  return v;
}

Corpus synth(const SynthConfig& cfg) {
  if (cfg.vocab_size == 0 || cfg.conversations == 0 || cfg.turns == 0 || cfg.doc_length == 0 ||
      cfg.min_span == 0)
    throw InputError("synth: all counts must be positive");
  if (cfg.max_span < cfg.min_span) throw InputError("synth: max_span < min_span");
  if (cfg.doc_length < cfg.max_span)
    throw InputError("synth: doc_length " + std::to_string(cfg.doc_length) +
                     " is shorter than the longest rationale " + std::to_string(cfg.max_span));
  static const std::vector<std::string> kDomains = {"children", "literature", "mid-high_school",
                                                    "news", "wikipedia"};
  static const std::vector<std::string> kWh = {"what", "who", "where", "when", "which", "how"};

  Rng rng(cfg.seed);
  const auto vocab = synth_vocabulary(cfg.vocab_size);
  std::uniform_int_distribution<std::size_t> word(0, cfg.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> span_len(cfg.min_span, cfg.max_span);
  std::uniform_int_distribution<std::size_t> wh(0, kWh.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Corpus corpus;
  corpus.id = "synth-v" + std::to_string(cfg.vocab_size) + "-c" + std::to_string(cfg.conversations) +
              "-t" + std::to_string(cfg.turns) + "-s" + std::to_string(cfg.seed);
  corpus.speech.seed = cfg.seed;
  for (std::size_t c = 0; c < cfg.conversations; ++c) {
    Conversation conv;
    char id[32];
    std::snprintf(id, sizeof id, "c%05zu", c);
    conv.id = id;
    conv.domain = kDomains[c % kDomains.size()];
    for (std::size_t i = 0; i < cfg.doc_length; ++i) conv.document_clean.push_back(vocab[word(rng)]);

    for (std::size_t t = 0; t < cfg.turns; ++t) {
      Turn turn;
      turn.turn_id = static_cast<int>(t + 1);
      const std::size_t len = span_len(rng);
      bool dependent = false;
      std::size_t start = 0;
      if (t > 0 && unit(rng) < cfg.depends_fraction) {
        const Span prev = conv.turns.back().rationale_clean;
        if (prev.end + len < cfg.doc_length) {
          dependent = true;
          start = prev.end + 1;
        }
      }
      if (!dependent)
        start = std::uniform_int_distribution<std::size_t>(0, cfg.doc_length - len)(rng);
      turn.rationale_clean = Span{start, start + len - 1};
      const auto& first = conv.document_clean[start];
      const auto& last = conv.document_clean[start + len - 1];
      if (dependent) {
        turn.depends_on = conv.turns.back().turn_id;
        turn.question_clean = {"and", "then", last};
      } else {
        turn.question_clean = {kWh[wh(rng)], first};
        if (len > 1) turn.question_clean.push_back(last);
      }
      std::vector<std::string> answer(conv.document_clean.begin() + static_cast<long>(start),
                                      conv.document_clean.begin() + static_cast<long>(start + len));
      turn.answer_text = text::join_words(answer);
      conv.turns.push_back(std::move(turn));
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

// ---- noisy channels ----------------------------------------------------------------------

void NoiseConfig::validate() const {
  if (!(target_wer >= 0.0 && target_wer < 1.0))
    throw DomainError("target WER must lie in [0, 1), got " + std::to_string(target_wer));
  if (substitution < 0 || deletion < 0 || insertion < 0)
    throw DomainError("edit-type weights must be nonnegative");
  if (std::abs(substitution + deletion + insertion - 1.0) > 1e-9)
    throw DomainError("edit-type weights must sum to 1");
}

std::vector<std::string> asr_channel(const std::vector<std::string>& words,
                                     const NoiseConfig& noise) {
  noise.validate();
  if (noise.target_wer == 0.0) return words;
  Rng rng(noise.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // An insertion after word i followed by deleting word i+1 aligns as a
  // single substitution, so the per-word rate r solves r - a r^2 = target.
  const double a = noise.insertion * noise.deletion;
  const double t = noise.target_wer;
  const double r =
      std::min(1.0, a > 0.0 ? (1.0 - std::sqrt(1.0 - 4.0 * a * t)) / (2.0 * a) : t);
  const double p_sub = r * noise.substitution;
  const double p_del = r * noise.deletion;
  const double p_ins = r * noise.insertion;
  auto confusable = [&](const std::string& avoid) {
    if (noise.confusion.empty()) return std::string("<unk>");
    std::uniform_int_distribution<std::size_t> pick(0, noise.confusion.size() - 1);
    for (int attempt = 0; attempt < 16; ++attempt) {
      const auto& w = noise.confusion[pick(rng)];
      if (w != avoid) return w;
    }
    return std::string("<unk>");
  };
  std::vector<std::string> out;
  out.reserve(words.size() + words.size() / 4);
  for (const auto& w : words) {
    const double u = unit(rng);
    if (u < p_sub) {
      out.push_back(confusable(w));
    } else if (u < p_sub + p_del) {
      continue;
    } else if (u < p_sub + p_del + p_ins) {
      out.push_back(w);
      out.push_back(confusable(w));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

Corpus apply_asr_channel(const Corpus& corpus, const NoiseConfig& noise) {
  Corpus out = corpus;
  for (auto& conv : out.conversations) {
    const std::uint64_t base = text::mix_seed(noise.seed, text::fnv1a(conv.id));
    NoiseConfig n = noise;
    n.seed = text::mix_seed(base, 0);
    conv.document_asr = asr_channel(conv.document_clean, n);
    for (auto& t : conv.turns) {
      n.seed = text::mix_seed(base, static_cast<std::uint64_t>(t.turn_id));
      t.question_asr = asr_channel(t.question_clean, n);
      t.rationale_asr.reset();
    }
  }
  return out;
}

int speech_vocab_size(const SpeechConfig& config) { return config.inventory + kSpeechFirstPhoneme; }

std::vector<int> speech_tokens(const std::vector<std::string>& words, const SpeechConfig& cfg,
                               bool noisy, std::uint64_t stream) {
  Rng rng(stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> phone(0, cfg.inventory - 1);
  std::vector<int> out;
  for (const auto& w : words) {
    const std::uint64_t h = text::mix_seed(cfg.seed, text::fnv1a(text::normalize_token(w)));
    const auto count = 1 + static_cast<int>(h % static_cast<std::uint64_t>(cfg.max_tokens_per_word));
    for (int k = 0; k < count; ++k) {
      int p = static_cast<int>(text::mix_seed(h, static_cast<std::uint64_t>(k)) %
                               static_cast<std::uint64_t>(cfg.inventory));
      if (noisy && cfg.noise > 0.0 && unit(rng) < cfg.noise) p = phone(rng);
      out.push_back(p + kSpeechFirstPhoneme);
    }
  }
  return out;
}

// ---- word error rate -------------------------------------------------------------------------

namespace {

// Full DP table of minimum edit distances, (n+1) x (m+1).
std::vector<std::size_t> edit_table(const std::vector<std::string>& ref,
                                    const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i * (m + 1)] = i;
  for (std::size_t j = 0; j <= m; ++j) d[j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[(i - 1) * (m + 1) + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t del = d[(i - 1) * (m + 1) + j] + 1;
      const std::size_t ins = d[i * (m + 1) + j - 1] + 1;
      d[i * (m + 1) + j] = std::min({diag, del, ins});
    }
  return d;
}

enum class Step { match, substitution, deletion, insertion };

// Backtrace preferring diagonal moves, then deletions, then insertions.
template <typename Visit>
void backtrace(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
               Visit&& visit) {
  const auto d = edit_table(ref, hyp);
  const std::size_t m = hyp.size();
  std::size_t i = ref.size(), j = hyp.size();
  while (i > 0 || j > 0) {
    const std::size_t here = d[i * (m + 1) + j];
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (d[(i - 1) * (m + 1) + j - 1] + (same ? 0 : 1) == here) {
        visit(same ? Step::match : Step::substitution, i - 1, j - 1);
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && d[(i - 1) * (m + 1) + j] + 1 == here) {
      visit(Step::deletion, i - 1, j);
      --i;
      continue;
    }
    visit(Step::insertion, i, j - 1);
    --j;
  }
}

}  // namespace

EditCounts edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  EditCounts c;
  backtrace(ref, hyp, [&](Step s, std::size_t, std::size_t) {
    if (s == Step::substitution) ++c.substitutions;
    if (s == Step::deletion) ++c.deletions;
    if (s == Step::insertion) ++c.insertions;
  });
  return c;
}

double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw DomainError("wer: reference must be nonempty");
  const std::size_t m = hyp.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = std::min({prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(ref.size());
}

std::vector<long> align_to_reference(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp) {
  std::vector<long> map(hyp.size(), -1);
  backtrace(ref, hyp, [&](Step s, std::size_t i, std::size_t j) {
    if (s == Step::match || s == Step::substitution) map[j] = static_cast<long>(i);
  });
  return map;
}

// ---- filtering ---------------------------------------------------------------------------------

std::optional<Span> locate_rationale(const std::vector<std::string>& rationale,
                                     const std::vector<std::string>& asr_document,
                                     std::size_t clean_start, double fuzzy_threshold) {
  if (rationale.empty() || asr_document.empty()) return std::nullopt;
  const auto needle = text::normalize_tokens(rationale);
  const auto hay = text::normalize_tokens(asr_document);
  if (auto at = find_words(hay, needle, clean_start)) return Span{*at, *at + needle.size() - 1};

  const auto dist = [&](std::size_t x) { return x > clean_start ? x - clean_start : clean_start - x; };
  std::optional<Span> best;
  double best_f1 = -1.0;
  const std::size_t len = needle.size();
  for (std::size_t w = len > 1 ? len - 1 : 1; w <= len + 1; ++w) {
    if (w > hay.size()) break;
    for (std::size_t s = 0; s + w <= hay.size(); ++s) {
      const double f1 = text::bag_f1(std::span(hay).subspan(s, w), needle);
      if (f1 < fuzzy_threshold) continue;
      const bool better = !best || f1 > best_f1 ||
                          (f1 == best_f1 && (dist(s) < dist(best->start) ||
                                             (dist(s) == dist(best->start) && s < best->start)));
      if (better) {
        best = Span{s, s + w - 1};
        best_f1 = f1;
      }
    }
  }
  return best;
}

FilterResult filter(const Corpus& corpus, const FilterConfig& config) {
  FilterResult result;
  result.corpus.id = corpus.id;
  result.corpus.speech = corpus.speech;
  for (const auto& conv : corpus.conversations) {
    Conversation kept = conv;
    kept.turns.clear();
    std::set<int> survivors;
    for (const auto& turn : conv.turns) {
      std::vector<std::string> rationale(
          conv.document_clean.begin() + static_cast<long>(turn.rationale_clean.start),
          conv.document_clean.begin() + static_cast<long>(turn.rationale_clean.end) + 1);
      auto span = locate_rationale(rationale, conv.document_asr, turn.rationale_clean.start,
                                   config.fuzzy_threshold);
      if (!span) {
        result.removals.push_back({conv.id, turn.turn_id, RemovalReason::span_missing});
        continue;
      }
      if (turn.depends_on && !survivors.count(*turn.depends_on)) {
        result.removals.push_back({conv.id, turn.turn_id, RemovalReason::dependency_cascade});
        continue;
      }
      Turn t = turn;
      t.rationale_asr = span;
      survivors.insert(t.turn_id);
      kept.turns.push_back(std::move(t));
    }
    if (!kept.turns.empty()) result.corpus.conversations.push_back(std::move(kept));
  }
  return result;
}

std::string removals_to_jsonl(const std::vector<Removal>& removals) {
  std::string out;
  for (const auto& r : removals) {
    out += json{{"conversation", r.conversation}, {"turn", r.turn_id}, {"reason", to_string(r.reason)}}
               .dump();
    out += '\n';
  }
  return out;
}

// ---- statistics ----------------------------------------------------------------------------------

std::vector<StatsRow> stats(const Corpus& corpus) {
  std::map<std::string, std::pair<StatsRow, std::size_t>> by_domain;  // row, total length
  StatsRow overall{"Overall"};
  std::size_t overall_len = 0;
  for (const auto& c : corpus.conversations) {
    auto& [row, len] = by_domain[c.domain];
    row.domain = c.domain;
    ++row.passages;
    row.qa_pairs += c.turns.size();
    len += c.document_clean.size();
    ++overall.passages;
    overall.qa_pairs += c.turns.size();
    overall_len += c.document_clean.size();
  }
  std::vector<StatsRow> rows;
  auto finish = [](StatsRow& r, std::size_t len) {
    if (r.passages == 0) return;
    r.mean_passage_length = static_cast<double>(len) / static_cast<double>(r.passages);
    r.mean_turns = static_cast<double>(r.qa_pairs) / static_cast<double>(r.passages);
  };
  for (auto& [name, entry] : by_domain) {
    finish(entry.first, entry.second);
    rows.push_back(entry.first);
  }
  finish(overall, overall_len);
  rows.push_back(overall);
  return rows;
}

std::string stats_csv(const std::vector<StatsRow>& rows) {
  std::ostringstream os;
  os << "domain,passages,qa_pairs,passage_length,avg_turns\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    os << r.domain << ',' << r.passages << ',' << r.qa_pairs << ',' << r.mean_passage_length << ','
       << r.mean_turns << '\n';
  return os.str();
}

std::string stats_table(const std::vector<StatsRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "Domain" << std::right << std::setw(10) << "Passages"
     << std::setw(10) << "QA-Pairs" << std::setw(16) << "Passage Length" << std::setw(12)
     << "Avg.Turns" << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows)
    os << std::left << std::setw(18) << r.domain << std::right << std::setw(10) << r.passages
       << std::setw(10) << r.qa_pairs << std::setw(16) << r.mean_passage_length << std::setw(12)
       << r.mean_turns << '\n';
  return os.str();
}

CorpusSplit split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw DomainError("test fraction must lie in [0, 1)");
  std::vector<std::size_t> order(corpus.conversations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
  std::sort(order.begin(), order.begin() + static_cast<long>(n_test));
  std::sort(order.begin() + static_cast<long>(n_test), order.end());
  CorpusSplit split;
  split.train.id = corpus.id + "/train";
  split.test.id = corpus.id + "/test";
  split.train.speech = split.test.speech = corpus.speech;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_test ? split.test : split.train).conversations.push_back(corpus.conversations[order[k]]);
  return split;
}

}  // namespace scqa

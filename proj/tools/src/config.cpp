#include <charconv>
#include <functional>
#include <fstream>
#include <sstream>

#include "scqa/cli.hpp"
#include "scqa/error.hpp"
#include "scqa/text.hpp"

namespace scqa::cli {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

double parse_double(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;  // empty: not serialized
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Field size_field(std::string name, std::string help, T RunConfig::*outer, std::size_t T::*member) {
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [=](RunConfig& c, const std::string& v) { c.*outer.*member = parse_u64(v); }};
}

template <class T>
Field double_field(std::string name, std::string help, T RunConfig::*outer, double T::*member) {
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return fmt_double(c.*outer.*member); },
          [=](RunConfig& c, const std::string& v) { c.*outer.*member = parse_double(v); }};
}

Field path_field(std::string name, std::string help,
                 std::optional<std::filesystem::path> RunConfig::*member) {
  return {{std::move(name), std::move(help)},
          nullptr,
          [=](RunConfig& c, const std::string& v) { c.*member = std::filesystem::path(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({{"seed", "run seed; data, noise, split and training streams derive from it"},
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }});
    f.push_back({{"corpus", "JSON corpus to prepare instead of synthetic data"},
                 [](const RunConfig& c) { return c.corpus ? c.corpus->generic_string() : ""; },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty()) c.corpus.reset();
                   else c.corpus = std::filesystem::path(v);
                 }});
    f.push_back({{"fusion", "dual_attention, con_fusion, speech_only or text_only"},
                 [](const RunConfig& c) { return std::string(to_string(c.train.model.fusion)); },
                 [](RunConfig& c, const std::string& v) { c.train.model.fusion = parse_fusion(v); }});
    f.push_back({{"view", "evaluation / plain training view: clean or asr"},
                 [](const RunConfig& c) { return std::string(to_string(c.view)); },
                 [](RunConfig& c, const std::string& v) { c.view = parse_view(v); }});
    f.push_back({{"split", "evaluation split: train, test or all"},
                 [](const RunConfig& c) { return c.split; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "train" && v != "test" && v != "all")
                     throw std::invalid_argument("expected train, test or all, got '" + v + "'");
                   c.split = v;
                 }});
    f.push_back({{"test_fraction", "share of conversations held out for testing"},
                 [](const RunConfig& c) { return fmt_double(c.test_fraction); },
                 [](RunConfig& c, const std::string& v) { c.test_fraction = parse_double(v); }});
    f.push_back(size_field("synth.conversations", "synthetic conversations", &RunConfig::synth,
                           &SynthConfig::conversations));
    f.push_back(size_field("synth.turns", "turns per synthetic conversation", &RunConfig::synth,
                           &SynthConfig::turns));
    f.push_back(size_field("synth.doc_length", "words per synthetic document", &RunConfig::synth,
                           &SynthConfig::doc_length));
    f.push_back(size_field("synth.vocab_size", "synthetic vocabulary size", &RunConfig::synth,
                           &SynthConfig::vocab_size));
    f.push_back(size_field("synth.min_span", "shortest rationale", &RunConfig::synth,
                           &SynthConfig::min_span));
    f.push_back(size_field("synth.max_span", "longest rationale", &RunConfig::synth,
                           &SynthConfig::max_span));
    f.push_back(double_field("synth.depends_fraction", "share of turns continuing the previous one",
                             &RunConfig::synth, &SynthConfig::depends_fraction));
    f.push_back(double_field("noise.wer", "target word error rate of the ASR channel", &RunConfig::noise,
                             &NoiseConfig::target_wer));
    f.push_back(double_field("noise.substitution", "substitution share of channel edits",
                             &RunConfig::noise, &NoiseConfig::substitution));
    f.push_back(double_field("noise.deletion", "deletion share of channel edits", &RunConfig::noise,
                             &NoiseConfig::deletion));
    f.push_back(double_field("noise.insertion", "insertion share of channel edits", &RunConfig::noise,
                             &NoiseConfig::insertion));
    f.push_back(double_field("filter.fuzzy_threshold", "token F1 needed for a fuzzy rationale match",
                             &RunConfig::filter, &FilterConfig::fuzzy_threshold));
    f.push_back({{"speech.inventory", "pseudo-phoneme inventory size"},
                 [](const RunConfig& c) { return std::to_string(c.speech.inventory); },
                 [](RunConfig& c, const std::string& v) { c.speech.inventory = static_cast<int>(parse_u64(v)); }});
    f.push_back({{"speech.max_tokens_per_word", "phonemes per word, at most"},
                 [](const RunConfig& c) { return std::to_string(c.speech.max_tokens_per_word); },
                 [](RunConfig& c, const std::string& v) {
                   c.speech.max_tokens_per_word = static_cast<int>(parse_u64(v));
                 }});
    f.push_back(double_field("speech.noise", "phoneme substitution rate of the ASR-side stream",
                             &RunConfig::speech, &SpeechConfig::noise));
    auto model = [](std::string name, std::string help, std::size_t ModelConfig::*m) {
      return Field{{std::move(name), std::move(help)},
                   [=](const RunConfig& c) { return std::to_string(c.train.model.*m); },
                   [=](RunConfig& c, const std::string& v) { c.train.model.*m = parse_u64(v); }};
    };
    f.push_back(model("model.d", "model width", &ModelConfig::d));
    f.push_back(model("model.heads", "attention heads", &ModelConfig::heads));
    f.push_back(model("model.d_ff", "feed-forward width", &ModelConfig::d_ff));
    f.push_back(model("model.max_span_len", "longest decoded answer span", &ModelConfig::max_span_len));
    f.push_back({{"model.shared_w1", "one W1 for both contextualized-attention branches"},
                 [](const RunConfig& c) { return std::string(c.train.model.shared_w1 ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.train.model.shared_w1 = parse_bool(v); }});
    f.push_back({{"input.max_len", "padded length of the text and speech streams"},
                 [](const RunConfig& c) { return std::to_string(c.train.input.max_len); },
                 [](RunConfig& c, const std::string& v) { c.train.input.max_len = parse_u64(v); }});
    f.push_back({{"input.k_history", "previous turns fed as history"},
                 [](const RunConfig& c) { return std::to_string(c.train.input.k_history); },
                 [](RunConfig& c, const std::string& v) { c.train.input.k_history = parse_u64(v); }});
    auto kd_d = [](std::string name, std::string help, double KDConfig::*m) {
      return Field{{std::move(name), std::move(help)},
                   [=](const RunConfig& c) { return fmt_double(c.train.kd.*m); },
                   [=](RunConfig& c, const std::string& v) { c.train.kd.*m = parse_double(v); }};
    };
    auto kd_n = [](std::string name, std::string help, std::size_t KDConfig::*m) {
      return Field{{std::move(name), std::move(help)},
                   [=](const RunConfig& c) { return std::to_string(c.train.kd.*m); },
                   [=](RunConfig& c, const std::string& v) { c.train.kd.*m = parse_u64(v); }};
    };
    f.push_back(kd_d("kd.alpha", "weight of the distillation term", &KDConfig::alpha));
    f.push_back(kd_d("kd.tau", "distillation temperature", &KDConfig::tau));
    f.push_back(kd_d("kd.learning_rate", "SGD step size", &KDConfig::learning_rate));
    f.push_back(kd_d("kd.clip_norm", "global gradient-norm clip", &KDConfig::clip_norm));
    f.push_back(kd_n("kd.steps", "training steps", &KDConfig::steps));
    f.push_back(kd_n("kd.batch", "examples per step", &KDConfig::batch));
    f.push_back({{"kd.teacher_steps", "teacher training steps; 0 uses kd.steps"},
                 [](const RunConfig& c) { return std::to_string(c.teacher_steps); },
                 [](RunConfig& c, const std::string& v) { c.teacher_steps = parse_u64(v); }});
    f.push_back({{"kd.average_start_end", "average instead of sum the start and end KL terms"},
                 [](const RunConfig& c) { return std::string(c.train.kd.average_start_end ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.train.kd.average_start_end = parse_bool(v); }});
    f.push_back({{"ablate.parallel", "run sweep arms on worker threads"},
                 [](const RunConfig& c) { return std::string(c.parallel ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.parallel = parse_bool(v); }});
    f.push_back({{"out", "output directory"},
                 nullptr,
                 [](RunConfig& c, const std::string& v) { c.out = v; }});
    f.push_back(path_field("data", "prepared corpus directory (default: out)", &RunConfig::data));
    f.push_back(path_field("teacher", "teacher checkpoint", &RunConfig::teacher));
    f.push_back(path_field("checkpoint", "checkpoint to evaluate", &RunConfig::model));
    return f;
  }();
  return all;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string where = "line " + std::to_string(n);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(where, "expected key = value, got '" + body + "'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.key.name == key) field = &f;
    if (!field) throw ParseError(where, "unknown key '" + key + "'");
    try {
      field->set(base, value);
    } catch (const std::exception& e) {
      throw ParseError(where, key + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ParseError& e) {
    throw ParseError(e.pointer(), path.string() + ": " + std::string(e.what()));
  }
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    if (!f.get) continue;
    out += f.key.name + " = " + f.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(text::fnv1a(to_text(config))));
  return buf;
}

RunConfig resolved(RunConfig config) {
  config.synth.seed = config.seed;
  config.noise.seed = config.seed;
  config.speech.seed = config.seed;
  config.train.kd.seed = config.seed;
  config.noise.validate();
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0))
    throw DomainError("test_fraction must lie in (0, 1)");
  return config;
}

}  // namespace scqa::cli

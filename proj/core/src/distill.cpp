#include "scqa/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "scqa/error.hpp"
#include "scqa/text.hpp"

namespace scqa {

using nlohmann::json;

const char* to_string(Role r) { return r == Role::teacher ? "teacher" : "student"; }

namespace {

void check_distribution(const Tensor& t, const char* name) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  if (std::abs(s - 1.0) > 1e-6)
    throw DomainError(std::string("kl_div: ") + name + " sums to " + std::to_string(s) + ", not 1");
}

}  // namespace

Tensor kl_div(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape())
    throw DimensionError("kl_div: " + to_string(p.shape()) + " vs " + to_string(q.shape()));
  check_distribution(p, "p");
  check_distribution(q, "q");
  return sub(sum(xlogy(p, p)), sum(xlogy(p, clamp_min(q, kTeacherProbabilityFloor))));
}

Tensor kd_loss(const SpanLogits& student, const SpanLogits& teacher, const GoldSpan& gold,
               double alpha, double tau, bool average_start_end) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw DomainError("kd_loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (!(tau > 0.0)) throw DomainError("kd_loss: tau must be positive, got " + std::to_string(tau));
  if (student.start.shape() != teacher.start.shape() || student.end.shape() != teacher.end.shape())
    throw DimensionError("kd_loss: student " + to_string(student.start.shape()) + " and teacher " +
                         to_string(teacher.start.shape()) + " logits differ");
  if (alpha == 0.0) return span_loss(student, gold);
  auto kl = [tau](const Tensor& zs, const Tensor& zt) {
    return kl_div(softmax_temp(zs, tau), softmax_temp(zt.detach(), tau));
  };
  Tensor distill = add(kl(student.start, teacher.start), kl(student.end, teacher.end));
  if (average_start_end) distill = scale(distill, 0.5);
  distill = scale(distill, alpha * tau * tau);
  if (alpha == 1.0) return distill;
  return add(distill, scale(span_loss(student, gold), 1.0 - alpha));
}

std::vector<double> project_scores(std::span<const double> clean_scores,
                                   const std::vector<std::string>& clean_doc,
                                   const std::vector<std::string>& asr_doc) {
  if (clean_scores.size() != clean_doc.size())
    throw DimensionError("project_scores: " + std::to_string(clean_scores.size()) + " scores for " +
                         std::to_string(clean_doc.size()) + " clean words");
  if (clean_scores.empty()) throw ContractError("project_scores: empty clean document");
  const double floor = *std::min_element(clean_scores.begin(), clean_scores.end());
  const auto align = align_to_reference(clean_doc, asr_doc);
  std::vector<double> out(asr_doc.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = align[j] < 0 ? floor : clean_scores[static_cast<std::size_t>(align[j])];
  return out;
}

namespace {

struct Example {
  const Conversation* conv = nullptr;
  std::size_t turn = 0;
  QAInput input;
  GoldSpan gold;
  std::vector<double> teacher_start, teacher_end;
};

std::vector<Tensor> parameters(const Model& m) {
  std::vector<Tensor> out;
  for (auto& [name, t] : m.named()) out.push_back(t);
  return out;
}

// Plain SGD on the globally clipped gradient.
void sgd_step(std::vector<Tensor>& params, double lr, double clip) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double factor = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    auto data = p.mutable_data();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * factor * grad[i];
  }
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TrainedModel train(const Corpus& corpus, View view, const TrainConfig& config,
                   const TrainedModel* teacher) {
  if (teacher && view != View::asr)
    throw ContractError("train: a teacher can only guide a student on the ASR view");
  const KDConfig& kd = config.kd;
  if (kd.batch == 0) throw InputError("train: batch size must be positive");
  if (!(kd.alpha >= 0.0 && kd.alpha <= 1.0)) throw DomainError("train: alpha outside [0, 1]");
  if (!(kd.tau > 0.0)) throw DomainError("train: tau must be positive");

  TrainedModel out;
  out.vocab = Vocab::build(corpus);
  out.input = config.input;
  out.speech = corpus.speech;
  out.kd = kd;
  out.view = view;
  out.role = (view == View::clean && !teacher) ? Role::teacher : Role::student;
  if (teacher) out.teacher_id = checkpoint_id(*teacher);

  std::vector<Example> examples;
  for (const auto& conv : corpus.conversations) {
    for (std::size_t l = 1; l <= conv.turns.size(); ++l) {
      const auto& turn = conv.turns[l - 1];
      if (view == View::asr && !turn.rationale_asr) continue;
      Example ex;
      ex.conv = &conv;
      ex.turn = l;
      ex.input = build_input(conv, l, view, out.vocab, out.speech, out.input);
      ex.gold = gold_span(conv, l, view);
      examples.push_back(std::move(ex));
    }
  }
  if (examples.empty()) throw InputError("train: corpus has no usable turns for the " +
                                         std::string(to_string(view)) + " view");

  if (teacher && kd.alpha > 0.0) {
    NoGrad guard;
    for (auto& ex : examples) {
      const auto in = build_input(*ex.conv, ex.turn, View::clean, teacher->vocab, teacher->speech,
                                  teacher->input);
      const auto z = forward(teacher->model, in);
      ex.teacher_start =
          project_scores(z.start.data(), ex.conv->document_clean, ex.conv->document_asr);
      ex.teacher_end = project_scores(z.end.data(), ex.conv->document_clean, ex.conv->document_asr);
    }
  }

  ModelConfig mc = config.model;
  mc.max_len = config.input.max_len;
  mc.text_vocab = out.vocab.size();
  mc.speech_vocab = static_cast<std::size_t>(speech_vocab_size(out.speech));
  Rng init_rng(text::mix_seed(kd.seed, 0));
  out.model = Model::init(mc, init_rng);
  auto params = parameters(out.model);

  Rng data_rng(text::mix_seed(kd.seed, 1));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), data_rng);
  std::size_t cursor = 0;

  const bool distilling = teacher && kd.alpha > 0.0;
  const double inv_batch = 1.0 / static_cast<double>(kd.batch);
  out.loss_curve.reserve(kd.steps);
  for (std::size_t step = 0; step < kd.steps; ++step) {
    for (auto& p : params) p.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < kd.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), data_rng);
        cursor = 0;
      }
      const Example& ex = examples[order[cursor++]];
      const SpanLogits z = forward(out.model, ex.input);
      Tensor loss;
      if (distilling) {
        const SpanLogits zt{Tensor::vector(ex.teacher_start), Tensor::vector(ex.teacher_end)};
        loss = kd_loss(z, zt, ex.gold, kd.alpha, kd.tau, kd.average_start_end);
      } else {
        loss = span_loss(z, ex.gold);
      }
      batch_loss += loss.item();
      backward(scale(loss, inv_batch));
    }
    sgd_step(params, kd.learning_rate, kd.clip_norm);
    out.loss_curve.push_back(batch_loss * inv_batch);
  }
  if (!out.loss_curve.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, out.loss_curve.size() / 10);
    out.final_loss = std::accumulate(out.loss_curve.end() - static_cast<long>(tail),
                                     out.loss_curve.end(), 0.0) /
                     static_cast<double>(tail);
  }
  return out;
}

std::vector<Prediction> infer(const TrainedModel& model, const Corpus& corpus, View view) {
  NoGrad guard;
  std::vector<Prediction> out;
  out.reserve(corpus.turn_count());
  for (const auto& conv : corpus.conversations) {
    for (std::size_t l = 1; l <= conv.turns.size(); ++l) {
      const auto in = build_input(conv, l, view, model.vocab, model.speech, model.input);
      const auto [s, e] = decode_span(forward(model.model, in), model.model.config.max_span_len);
      out.push_back(Prediction{conv.id, conv.turns[l - 1].turn_id, Span{s, e}});
    }
  }
  return out;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

json model_config_json(const ModelConfig& c) {
  return {{"d", c.d},
          {"heads", c.heads},
          {"d_ff", c.d_ff},
          {"max_len", c.max_len},
          {"text_vocab", c.text_vocab},
          {"speech_vocab", c.speech_vocab},
          {"fusion", to_string(c.fusion)},
          {"shared_w1", c.shared_w1},
          {"max_span_len", c.max_span_len}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.text_vocab = j.at("text_vocab").get<std::size_t>();
  c.speech_vocab = j.at("speech_vocab").get<std::size_t>();
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.shared_w1 = j.at("shared_w1").get<bool>();
  c.max_span_len = j.at("max_span_len").get<std::size_t>();
  return c;
}

json kd_json(const KDConfig& k) {
  return {{"alpha", k.alpha},
          {"tau", k.tau},
          {"learning_rate", k.learning_rate},
          {"clip_norm", k.clip_norm},
          {"steps", k.steps},
          {"batch", k.batch},
          {"average_start_end", k.average_start_end},
          {"seed", k.seed}};
}

KDConfig kd_from(const json& j) {
  KDConfig k;
  k.alpha = j.at("alpha").get<double>();
  k.tau = j.at("tau").get<double>();
  k.learning_rate = j.at("learning_rate").get<double>();
  k.clip_norm = j.at("clip_norm").get<double>();
  k.steps = j.at("steps").get<std::size_t>();
  k.batch = j.at("batch").get<std::size_t>();
  k.average_start_end = j.at("average_start_end").get<bool>();
  k.seed = j.at("seed").get<std::uint64_t>();
  return k;
}

}  // namespace

json to_json(const TrainedModel& m) {
  json params = json::object();
  for (const auto& [name, t] : m.model.named())
    params[name] = {{"shape", t.shape()}, {"data", values(t)}};
  json meta = {{"seed", m.kd.seed},
               {"steps", m.kd.steps},
               {"final_loss", m.final_loss},
               {"role", to_string(m.role)},
               {"view", to_string(m.view)},
               {"fusion", to_string(m.model.config.fusion)},
               {"loss_curve", m.loss_curve}};
  meta["teacher_id"] = m.teacher_id ? json(*m.teacher_id) : json(nullptr);
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"metadata", std::move(meta)},
          {"config",
           {{"model", model_config_json(m.model.config)},
            {"input", {{"max_len", m.input.max_len}, {"k_history", m.input.k_history}}},
            {"speech",
             {{"inventory", m.speech.inventory},
              {"max_tokens_per_word", m.speech.max_tokens_per_word},
              {"noise", m.speech.noise},
              {"seed", m.speech.seed}}},
            {"kd", kd_json(m.kd)}}},
          {"vocab", m.vocab.tokens()},
          {"params", std::move(params)}};
}

TrainedModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw ParseError("/format", "not an scqa checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("/version", "unsupported checkpoint version " + j.at("version").dump());
    TrainedModel m;
    const auto& cfg = j.at("config");
    const ModelConfig mc = model_config_from(cfg.at("model"));
    m.input.max_len = cfg.at("input").at("max_len").get<std::size_t>();
    m.input.k_history = cfg.at("input").at("k_history").get<std::size_t>();
    const auto& sp = cfg.at("speech");
    m.speech.inventory = sp.at("inventory").get<int>();
    m.speech.max_tokens_per_word = sp.at("max_tokens_per_word").get<int>();
    m.speech.noise = sp.at("noise").get<double>();
    m.speech.seed = sp.at("seed").get<std::uint64_t>();
    m.kd = kd_from(cfg.at("kd"));

    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    m.vocab = Vocab::from_tokens({tokens.begin() + std::min<std::size_t>(5, tokens.size()), tokens.end()});
    if (m.vocab.tokens() != tokens) throw ParseError("/vocab", "special tokens missing or reordered");

    const auto& meta = j.at("metadata");
    m.role = meta.at("role").get<std::string>() == "teacher" ? Role::teacher : Role::student;
    m.view = parse_view(meta.at("view").get<std::string>());
    m.final_loss = meta.at("final_loss").get<double>();
    m.loss_curve = meta.at("loss_curve").get<std::vector<double>>();
    if (!meta.at("teacher_id").is_null()) m.teacher_id = meta.at("teacher_id").get<std::string>();

    Rng rng(0);
    m.model = Model::init(mc, rng);
    const auto& params = j.at("params");
    for (auto& [name, t] : m.model.named()) {
      const std::string ptr = "/params/" + name;
      if (!params.contains(name)) throw ParseError(ptr, "missing parameter");
      const auto shape = params.at(name).at("shape").get<Shape>();
      const auto data = params.at(name).at("data").get<std::vector<double>>();
      if (shape != t.shape() || data.size() != t.size())
        throw ParseError(ptr, "shape " + to_string(shape) + " does not match " + to_string(t.shape()));
      std::copy(data.begin(), data.end(), t.mutable_data().begin());
    }
    if (params.size() != m.model.named().size())
      throw ParseError("/params", "unexpected extra parameters");
    return m;
  } catch (const json::exception& e) {
    throw ParseError("", std::string("checkpoint: ") + e.what());
  }
}

std::string checkpoint_id(const TrainedModel& model) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(text::fnv1a(to_json(model).dump())));
  return buf;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os << to_json(model).dump() << '\n';
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError("", "checkpoint " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace scqa

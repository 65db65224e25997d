#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scqa/corpus.hpp"
#include "scqa/metrics.hpp"
#include "scqa/qa_model.hpp"

namespace scqa {

/// Σ p ln(p / q) with 0 ln 0 := 0 and q floored at 1e-12. Both inputs must
/// be probability vectors (sum 1 ± 1e-6, DomainError otherwise).
Tensor kl_div(const Tensor& p, const Tensor& q);

inline constexpr double kTeacherProbabilityFloor = 1e-12;

/// α τ² [KL(p_τ(start_S), p_τ(start_T)) + KL(p_τ(end_S), p_τ(end_T))] + (1 − α) span_loss.
/// The teacher logits are detached. With average_start_end the two KL terms
/// are averaged instead of summed.
Tensor kd_loss(const SpanLogits& student, const SpanLogits& teacher, const GoldSpan& gold,
               double alpha, double tau, bool average_start_end = false);

struct KDConfig {
  double alpha = 0.9;
  double tau = 2.0;
  double learning_rate = 0.05;
  double clip_norm = 5.0;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  bool average_start_end = false;
  std::uint64_t seed = 0;
};

struct TrainConfig {
  ModelConfig model;  // vocab sizes are filled in by train()
  InputConfig input;
  KDConfig kd;
};

enum class Role { teacher, student };
const char* to_string(Role r);

struct TrainedModel {
  Model model;
  Vocab vocab;
  InputConfig input;
  SpeechConfig speech;
  KDConfig kd;
  Role role = Role::teacher;
  View view = View::clean;
  std::optional<std::string> teacher_id;
  std::vector<double> loss_curve;  // mean batch loss per step
  double final_loss = 0.0;         // mean of the last tenth of the curve
};

/// Plain span-loss training without a teacher, or KD training of a student on
/// the ASR view against a teacher that reads the clean view of the same turns.
/// Throws InputError for a corpus without usable turns and ContractError for
/// a teacher paired with the clean view.
TrainedModel train(const Corpus& corpus, View view, const TrainConfig& config,
                   const TrainedModel* teacher = nullptr);

/// One prediction per turn of the corpus, in corpus order.
std::vector<Prediction> infer(const TrainedModel& model, const Corpus& corpus, View view);

/// Teacher scores over the clean document moved onto ASR positions through
/// the word alignment; inserted ASR words receive the teacher's minimum score.
std::vector<double> project_scores(std::span<const double> clean_scores,
                                   const std::vector<std::string>& clean_doc,
                                   const std::vector<std::string>& asr_doc);

// ---- checkpoints ---------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "scqa-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
/// Hex FNV-1a of the serialized checkpoint.
std::string checkpoint_id(const TrainedModel& model);
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace scqa

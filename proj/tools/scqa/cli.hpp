#pragma once
// Command-line harness: prepare, train, eval, ablate and stats over seeded,
// reproducible runs. Every command writes only below its output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scqa/corpus.hpp"
#include "scqa/distill.hpp"

namespace scqa::cli {

/// Command-line misuse: missing required flag, unknown verb or sweep kind.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a command needs. Serialized as key-value text; see
/// config_keys() for the accepted keys.
struct RunConfig {
  std::string command;
  std::optional<std::filesystem::path> corpus;  // JSON corpus; synthetic data otherwise
  SynthConfig synth;
  NoiseConfig noise;
  FilterConfig filter;
  SpeechConfig speech;
  double test_fraction = 0.2;
  TrainConfig train;               // train.model.fusion is the --fusion choice
  std::size_t teacher_steps = 0;   // 0: same as train.kd.steps
  View view = View::asr;
  std::string split = "test";      // eval split: train, test or all
  std::filesystem::path out = "run";
  std::optional<std::filesystem::path> data;  // prepared corpus directory; defaults to out
  std::optional<std::filesystem::path> teacher;
  std::optional<std::filesystem::path> model;
  std::uint64_t seed = 0;
  bool parallel = false;  // ablation arms on worker threads
};

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// `key = value` lines, `#` starts a comment. Unknown keys and malformed
/// values throw ParseError with pointer "line N".
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Every key except command and the output/input paths, one per line in
/// config_keys() order. parse_config(to_text(c)) reproduces the run.
std::string to_text(const RunConfig& config);
std::string config_hash(const RunConfig& config);

/// Resolves the per-component seeds from config.seed.
RunConfig resolved(RunConfig config);

enum class TrainMode { teacher, student, plain, pipeline };
TrainMode parse_train_mode(const std::string& s);
const char* to_string(TrainMode m);

enum class AblationKind { temperature, fusion, wer };
AblationKind parse_ablation(const std::string& s);
const char* to_string(AblationKind k);

inline constexpr double kTemperatures[] = {1, 2, 4, 6, 8, 10};
inline constexpr FusionMechanism kFusionArms[] = {
    FusionMechanism::speech_only, FusionMechanism::text_only, FusionMechanism::con_fusion,
    FusionMechanism::dual_attention};
inline constexpr double kWerBuckets[] = {0.1, 0.2, 0.4};

struct AblationRow {
  std::string arm;
  FusionMechanism fusion = FusionMechanism::dual_attention;
  double tau = 0.0;
  double alpha = 0.0;  // 0 for arms trained without a teacher
  double wer = 0.0;
  std::size_t n = 0;
  double em = 0.0;
  double f1 = 0.0;
  double aos = 0.0;
  double frame_f1 = 0.0;
};
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// The prepared corpus: both views filtered, then split by the run seed.
struct PreparedData {
  Corpus corpus;
  std::vector<Removal> removals;
  CorpusSplit split;
};
/// Loads or synthesizes the clean corpus, applies the ASR channel unless
/// every conversation already carries an ASR view, filters and splits.
PreparedData prepare_data(const RunConfig& config);

/// Teacher on the clean view (teacher_steps), student on the ASR view with
/// KD, or a plain span-loss model on config.view.
TrainedModel train_teacher(const RunConfig& config, const Corpus& train);
TrainedModel train_student(const RunConfig& config, const Corpus& train, const TrainedModel& teacher);
TrainedModel train_plain(const RunConfig& config, const Corpus& train);
EvalReport evaluate_model(const TrainedModel& model, const Corpus& corpus, View view,
                          std::uint64_t seed);

// Commands. Each returns the files it wrote, relative to config.out.
std::vector<std::filesystem::path> cmd_prepare(const RunConfig& config);
std::vector<std::filesystem::path> cmd_train(const RunConfig& config, TrainMode mode);
std::vector<std::filesystem::path> cmd_eval(const RunConfig& config);
std::vector<std::filesystem::path> cmd_ablate(const RunConfig& config, AblationKind kind);
std::vector<std::filesystem::path> cmd_stats(const RunConfig& config);

/// Full command line. Returns 0 on success, 2 on usage errors and 1 on any
/// other failure; messages go to stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace scqa::cli

#include "scqa/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "scqa/error.hpp"
#include "scqa/text.hpp"

namespace scqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::teacher: return "teacher";
    case TrainMode::student: return "student";
    case TrainMode::plain: return "plain";
    case TrainMode::pipeline: return "pipeline";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  for (auto m : {TrainMode::teacher, TrainMode::student, TrainMode::plain, TrainMode::pipeline})
    if (s == to_string(m)) return m;
  throw UsageError("unknown train mode '" + s + "' (expected teacher, student, plain or pipeline)");
}

const char* to_string(AblationKind k) {
  switch (k) {
    case AblationKind::temperature: return "temperature";
    case AblationKind::fusion: return "fusion";
    case AblationKind::wer: return "wer";
  }
  return "?";
}

AblationKind parse_ablation(const std::string& s) {
  for (auto k : {AblationKind::temperature, AblationKind::fusion, AblationKind::wer})
    if (s == to_string(k)) return k;
  throw UsageError("unknown ablation '" + s + "' (expected temperature, fusion or wer)");
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects the files of one command and writes its manifest last.
class OutputDir {
 public:
  OutputDir(const RunConfig& config, std::string command)
      : config_(config), command_(std::move(command)), started_(utc_now()) {
    fs::create_directories(config.out);
  }

  void write(const fs::path& rel, const std::string& content) {
    const fs::path full = config_.out / rel;
    if (full.has_parent_path()) fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary);
    if (!out) throw InputError("cannot write " + full.string());
    out << content;
    if (!out) throw InputError("failed writing " + full.string());
    files_.emplace_back(rel, hex64(text::fnv1a(content)));
    spdlog::debug("wrote {}", full.string());
  }

  void save(const fs::path& rel, const TrainedModel& model) { write(rel, to_json(model).dump(1) + "\n"); }

  std::vector<fs::path> finish() {
    write(command_ + ".config", to_text(config_));
    json outputs = json::array();
    for (const auto& [path, hash] : files_)
      outputs.push_back({{"path", path.generic_string()}, {"fnv1a", hash}});
    const json manifest = {{"command", command_},
                           {"config_hash", config_hash(config_)},
                           {"config", to_text(config_)},
                           {"started", started_},
                           {"finished", utc_now()},
                           {"outputs", outputs}};
    write(command_ + ".manifest.json", manifest.dump(2) + "\n");
    std::vector<fs::path> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

 private:
  const RunConfig& config_;
  std::string command_;
  std::string started_;
  std::vector<std::pair<fs::path, std::string>> files_;
};

fs::path data_dir(const RunConfig& c) { return c.data.value_or(c.out); }

Corpus load_prepared(const RunConfig& c, const std::string& name) {
  const fs::path p = data_dir(c) / (name + ".json");
  if (!fs::exists(p)) throw InputError("missing prepared corpus " + p.string() + "; run prepare first");
  return load_corpus(p);
}

std::vector<std::string> corpus_vocabulary(const Corpus& corpus) {
  std::set<std::string> words;
  for (const auto& conv : corpus.conversations) {
    words.insert(conv.document_clean.begin(), conv.document_clean.end());
    for (const auto& t : conv.turns) words.insert(t.question_clean.begin(), t.question_clean.end());
  }
  return {words.begin(), words.end()};
}

Corpus clean_source(const RunConfig& c) {
  Corpus corpus = c.corpus ? load_corpus(*c.corpus) : synth(c.synth);
  corpus.speech = c.speech;
  return corpus;
}

PreparedData prepare_from(const RunConfig& c, const Corpus& source) {
  bool has_asr = !source.conversations.empty();
  for (const auto& conv : source.conversations) has_asr = has_asr && conv.has_asr();
  Corpus noisy = source;
  if (!has_asr) {
    NoiseConfig noise = c.noise;
    noise.confusion = c.corpus ? corpus_vocabulary(source) : synth_vocabulary(c.synth.vocab_size);
    noisy = apply_asr_channel(source, noise);
  }
  auto filtered = filter(noisy, c.filter);
  PreparedData d;
  d.split = split_corpus(filtered.corpus, c.test_fraction, c.seed);
  d.corpus = std::move(filtered.corpus);
  d.removals = std::move(filtered.removals);
  return d;
}

void require_asr(const Corpus& corpus, View view) {
  if (view != View::asr) return;
  for (const auto& conv : corpus.conversations) {
    if (!conv.has_asr()) throw InputError("conversation " + conv.id + " has no ASR view");
    for (const auto& t : conv.turns)
      if (!t.rationale_asr)
        throw InputError(conv.id + "#" + std::to_string(t.turn_id) +
                         " has no ASR rationale; evaluate a prepared (filtered) corpus");
  }
}

template <class Fn>
void run_arms(std::size_t n, bool parallel, Fn&& fn) {
  if (!parallel) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < n; ++i)
    workers.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string tau_label(double tau) {
  std::ostringstream s;
  s << tau;
  return s.str();
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) { return prepare_from(config, clean_source(config)); }

TrainedModel train_teacher(const RunConfig& config, const Corpus& train) {
  TrainConfig t = config.train;
  if (config.teacher_steps) t.kd.steps = config.teacher_steps;
  return scqa::train(train, View::clean, t);
}

TrainedModel train_student(const RunConfig& config, const Corpus& train, const TrainedModel& teacher) {
  return scqa::train(train, View::asr, config.train, &teacher);
}

TrainedModel train_plain(const RunConfig& config, const Corpus& train) {
  return scqa::train(train, config.view, config.train);
}

EvalReport evaluate_model(const TrainedModel& model, const Corpus& corpus, View view,
                          std::uint64_t seed) {
  require_asr(corpus, view);
  return evaluate(infer(model, corpus, view), corpus, view,
                  RunInfo{checkpoint_id(model), corpus.id, view, seed});
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "arm,fusion,tau,alpha,wer,n,em,f1,aos,frame_f1\n";
  for (const auto& r : rows)
    out += csv_field(r.arm) + "," + to_string(r.fusion) + "," + fixed4(r.tau) + "," + fixed4(r.alpha) +
           "," + fixed4(r.wer) + "," + std::to_string(r.n) + "," + fixed4(r.em) + "," + fixed4(r.f1) +
           "," + fixed4(r.aos) + "," + fixed4(r.frame_f1) + "\n";
  return out;
}

std::vector<fs::path> cmd_prepare(const RunConfig& config) {
  const RunConfig c = resolved(config);
  const PreparedData d = prepare_data(c);
  spdlog::info("prepared {} conversations, {} turns, {} removals", d.corpus.conversations.size(),
               d.corpus.turn_count(), d.removals.size());
  OutputDir out(c, "prepare");
  out.write("corpus.json", to_json(d.corpus).dump(1) + "\n");
  out.write("train.json", to_json(d.split.train).dump(1) + "\n");
  out.write("test.json", to_json(d.split.test).dump(1) + "\n");
  out.write("removals.jsonl", removals_to_jsonl(d.removals));
  const auto rows = stats(d.corpus);
  out.write("stats.csv", stats_csv(rows));
  out.write("stats.txt", stats_table(rows));
  return out.finish();
}

std::vector<fs::path> cmd_train(const RunConfig& config, TrainMode mode) {
  const RunConfig c = resolved(config);
  if (mode == TrainMode::student && !c.teacher)
    throw UsageError("train --mode student needs --teacher <checkpoint>");
  const Corpus train = load_prepared(c, "train");
  OutputDir out(c, "train");
  std::optional<TrainedModel> teacher;
  if (mode == TrainMode::teacher || mode == TrainMode::pipeline) {
    spdlog::info("training teacher on {} turns (clean view)", train.turn_count());
    teacher = train_teacher(c, train);
    out.save("teacher.ckpt.json", *teacher);
  }
  if (mode == TrainMode::student || mode == TrainMode::pipeline) {
    if (!teacher) teacher = load_checkpoint(*c.teacher);
    spdlog::info("training student on {} turns (asr view, alpha {}, tau {})", train.turn_count(),
                 c.train.kd.alpha, c.train.kd.tau);
    out.save("student.ckpt.json", train_student(c, train, *teacher));
  }
  if (mode == TrainMode::plain) {
    spdlog::info("training {} model on {} turns ({} view)", to_string(c.train.model.fusion),
                 train.turn_count(), to_string(c.view));
    out.save("model.ckpt.json", train_plain(c, train));
  }
  return out.finish();
}

std::vector<fs::path> cmd_eval(const RunConfig& config) {
  const RunConfig c = resolved(config);
  fs::path ckpt;
  if (c.model) {
    ckpt = *c.model;
  } else {
    for (const char* name : {"student.ckpt.json", "model.ckpt.json", "teacher.ckpt.json"})
      if (fs::exists(data_dir(c) / name)) {
        ckpt = data_dir(c) / name;
        break;
      }
    if (ckpt.empty()) throw InputError("no checkpoint in " + data_dir(c).string() + "; pass --checkpoint");
  }
  const TrainedModel model = load_checkpoint(ckpt);
  const Corpus corpus = load_prepared(c, c.split == "all" ? "corpus" : c.split);
  const EvalReport report = evaluate_model(model, corpus, c.view, c.seed);
  spdlog::info("{} on {} ({} view): EM {:.1f} F1 {:.1f}", ckpt.filename().string(), corpus.id,
               to_string(c.view), report.em, report.f1);
  OutputDir out(c, "eval");
  out.write("eval.json", to_json(report).dump(1) + "\n");
  out.write("eval.csv", report_csv(report));
  std::string rows = "conversation,turn,prediction,em,f1,aos,frame_f1\n";
  for (const auto& e : report.examples)
    rows += csv_field(e.conversation) + "," + std::to_string(e.turn_id) + "," + csv_field(e.predicted_text) +
            "," + std::to_string(e.em) + "," + fixed4(e.f1) + "," + fixed4(e.aos) + "," +
            fixed4(e.frame_f1) + "\n";
  out.write("eval_examples.csv", rows);
  return out.finish();
}

std::vector<fs::path> cmd_ablate(const RunConfig& config, AblationKind kind) {
  const RunConfig c = resolved(config);
  const std::string dir = std::string("ablate_") + to_string(kind);
  OutputDir out(c, dir);
  std::vector<AblationRow> rows;

  auto row_of = [](std::string arm, const RunConfig& rc, double alpha, const EvalReport& r) {
    AblationRow row;
    row.arm = std::move(arm);
    row.fusion = rc.train.model.fusion;
    row.tau = rc.train.kd.tau;
    row.alpha = alpha;
    row.wer = rc.noise.target_wer;
    row.n = r.examples.size();
    row.em = r.em;
    row.f1 = r.f1;
    row.aos = r.aos;
    row.frame_f1 = r.frame_f1;
    return row;
  };

  if (kind == AblationKind::wer) {
    // Each bucket re-noises the clean source, so it needs no prepared corpus.
    const Corpus source = clean_source(c);
    const std::size_t nb = std::size(kWerBuckets);
    std::vector<AblationRow> slots(2 * nb);
    std::vector<std::vector<std::pair<std::string, TrainedModel>>> models(nb);
    run_arms(nb, c.parallel, [&](std::size_t b) {
      RunConfig rc = c;
      rc.noise.target_wer = kWerBuckets[b];
      const PreparedData d = prepare_from(rc, source);
      const std::string bucket = "wer_" + fixed4(kWerBuckets[b]);
      spdlog::info("{}: {} train turns", bucket, d.split.train.turn_count());
      const TrainedModel teacher = train_teacher(rc, d.split.train);
      const TrainedModel kd = train_student(rc, d.split.train, teacher);
      RunConfig plain = rc;
      plain.view = View::asr;
      const TrainedModel nokd = train_plain(plain, d.split.train);
      slots[2 * b] = row_of("wer=" + fixed4(kWerBuckets[b]) + " kd", rc, rc.train.kd.alpha,
                            evaluate_model(kd, d.split.test, View::asr, c.seed));
      slots[2 * b + 1] =
          row_of("wer=" + fixed4(kWerBuckets[b]) + " no_kd", rc, 0.0,
                 evaluate_model(nokd, d.split.test, View::asr, c.seed));
      models[b] = {{bucket + "/teacher.ckpt.json", teacher},
                   {bucket + "/student_kd.ckpt.json", kd},
                   {bucket + "/student_no_kd.ckpt.json", nokd}};
    });
    rows = slots;
    for (const auto& bucket : models)
      for (const auto& [path, model] : bucket) out.save(dir + "/" + path, model);
  } else {
    const Corpus train = load_prepared(c, "train");
    const Corpus test = load_prepared(c, "test");
    TrainedModel teacher;
    if (c.teacher) {
      teacher = load_checkpoint(*c.teacher);
    } else {
      spdlog::info("training sweep teacher on {} turns", train.turn_count());
      teacher = train_teacher(c, train);
      out.save(dir + "/teacher.ckpt.json", teacher);
    }
    std::vector<RunConfig> arms;
    std::vector<std::string> labels;
    if (kind == AblationKind::temperature) {
      for (double tau : kTemperatures) {
        RunConfig rc = c;
        rc.train.kd.tau = tau;
        arms.push_back(rc);
        labels.push_back("tau=" + tau_label(tau));
      }
    } else {
      for (auto f : kFusionArms) {
        RunConfig rc = c;
        rc.train.model.fusion = f;
        arms.push_back(rc);
        labels.push_back(to_string(f));
      }
    }
    std::vector<AblationRow> slots(arms.size());
    std::vector<TrainedModel> students(arms.size());
    run_arms(arms.size(), c.parallel, [&](std::size_t i) {
      spdlog::info("arm {}", labels[i]);
      students[i] = train_student(arms[i], train, teacher);
      slots[i] = row_of(labels[i], arms[i], arms[i].train.kd.alpha,
                        evaluate_model(students[i], test, View::asr, c.seed));
    });
    rows = slots;
    for (std::size_t i = 0; i < arms.size(); ++i)
      out.save(dir + "/" + labels[i] + "/student.ckpt.json", students[i]);
  }
  out.write(dir + ".csv", ablation_csv(rows));
  return out.finish();
}

std::vector<fs::path> cmd_stats(const RunConfig& config) {
  const RunConfig c = resolved(config);
  const Corpus corpus = c.corpus ? load_corpus(*c.corpus) : load_prepared(c, "corpus");
  const auto rows = stats(corpus);
  std::fputs(stats_table(rows).c_str(), stdout);
  OutputDir out(c, "stats");
  out.write("stats.csv", stats_csv(rows));
  return out.finish();
}

namespace {

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("scqa");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("SCQA_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int run(int argc, const char* const* argv) {
  setup_logging();
  CLI::App app{"scqa: spoken conversational question answering lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir_flag, teacher_path, checkpoint_path, view, fusion;
  std::uint64_t seed = 0;
  double alpha = 0, tau = 0, wer_value = 0;
  std::vector<std::string> sets;
  bool parallel = false;
  std::string mode = "teacher", kind;

  std::vector<CLI::App*> subs;
  auto add = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "key-value config file")->check(CLI::ExistingFile);
    s->add_option("--seed", seed, "run seed");
    s->add_option("--out", out_dir, "output directory");
    s->add_option("--data", data_dir_flag, "prepared corpus directory (default: --out)");
    s->add_option("--teacher", teacher_path, "teacher checkpoint");
    s->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");
    s->add_option("--view", view, "clean or asr")->check(CLI::IsMember({"clean", "asr"}));
    s->add_option("--fusion", fusion, "fusion mechanism")
        ->check(CLI::IsMember({"dual_attention", "con_fusion", "speech_only", "text_only"}));
    s->add_option("--alpha", alpha, "distillation weight (default 0.9)");
    s->add_option("--tau", tau, "distillation temperature (default 2)");
    s->add_option("--wer", wer_value, "target word error rate of the ASR channel");
    s->add_option("--set", sets, "extra key=value config entries");
    s->add_flag("--parallel", parallel, "run sweep arms on worker threads");
    subs.push_back(s);
    return s;
  };
  add("prepare", "synthesize or load a corpus, apply the ASR channel, filter, split and describe it");
  add("train", "train a teacher, a KD student or a plain model")
      ->add_option("--mode", mode, "teacher, student, plain or pipeline")
      ->check(CLI::IsMember({"teacher", "student", "plain", "pipeline"}));
  add("eval", "score a checkpoint on a prepared split");
  add("ablate", "temperature, fusion or wer sweep")
      ->add_option("kind", kind, "temperature, fusion or wer")
      ->required()
      ->check(CLI::IsMember({"temperature", "fusion", "wer"}));
  add("stats", "per-domain corpus statistics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    RunConfig c;
    if (!config_path.empty()) c = load_config(config_path);
    for (const auto& s : sets) c = parse_config(s, c);
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--seed")) c.seed = seed;
    if (given("--out")) c.out = out_dir;
    if (given("--data")) c.data = fs::path(data_dir_flag);
    if (given("--teacher")) c.teacher = fs::path(teacher_path);
    if (given("--checkpoint")) c.model = fs::path(checkpoint_path);
    if (given("--view")) c.view = parse_view(view);
    if (given("--fusion")) c.train.model.fusion = parse_fusion(fusion);
    if (given("--alpha")) c.train.kd.alpha = alpha;
    if (given("--tau")) c.train.kd.tau = tau;
    if (given("--wer")) c.noise.target_wer = wer_value;
    if (parallel) c.parallel = true;
    c.command = sub->get_name();

    std::vector<fs::path> written;
    if (c.command == "prepare") written = cmd_prepare(c);
    else if (c.command == "train") written = cmd_train(c, parse_train_mode(mode));
    else if (c.command == "eval") written = cmd_eval(c);
    else if (c.command == "ablate") written = cmd_ablate(c, parse_ablation(kind));
    else written = cmd_stats(c);
    for (const auto& p : written) spdlog::debug("{}", (c.out / p).string());
    return 0;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n%s", e.what(), sub->help().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"scqa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace scqa::cli

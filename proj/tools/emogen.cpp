// Command-line driver for the emotion-conditioned melody pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "emogen/pipeline.hpp"

using namespace emogen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitEmpty = 2;

class EmptyResult : public Error {
 public:
  using Error::Error;
};

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  try {
    return read_jsonl(read_file(path));
  } catch (const FormatError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

CharLm load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model " + path);
  try {
    return CharLm::load(in);
  } catch (const FormatError& e) {
    throw IoError(path + ": " + e.what());
  }
}

QuadrantLabel parse_emotion(const std::string& text) {
  try {
    return QuadrantLabel::parse(text);
  } catch (const FormatError& e) {
    throw IoError(std::string("--emotion: ") + e.what());
  }
}

struct Settings {
  // ingest / label
  std::vector<std::string> inputs;
  std::string out;
  std::optional<double> threshold;
  unsigned threads = 0;
  std::string dataset;
  // balance
  int split_ratio = 10;
  std::uint64_t seed = 0;
  // analyze
  std::string table;
  // train
  std::string train;
  std::string test;
  int order = 6;
  double alpha = 0.01;
  bool plain = false;
  // generate / eval
  std::string model;
  std::string prompts;
  std::vector<std::string> emotions{"Q1", "Q2", "Q3", "Q4"};
  std::size_t count = 25;
  std::string ablate;
  double temperature = 0.7;
  bool guided = false;
  std::size_t max_chars = 2048;
  bool wav = false;
  std::size_t samples = 100;
};

int cmd_ingest(const Settings& s, Log& log) {
  IngestOptions options;
  options.threshold = s.threshold;
  options.threads = s.threads;
  IngestResult r = ingest(s.inputs, options, log);
  if (r.records.empty()) throw EmptyResult("no tune survived ingestion");
  write_atomic(fs::path(s.out) / "dataset.jsonl", write_jsonl(r.records));
  write_json(fs::path(s.out) / "manifest.json", r.manifest);
  return kExitOk;
}

int cmd_label(const Settings& s, Log& log) {
  const auto records = load_dataset(s.dataset);
  if (records.empty()) throw EmptyResult("dataset is empty");
  auto [labeled, threshold] = relabel(records, s.threshold);
  write_atomic(fs::path(s.out) / "dataset.jsonl", write_jsonl(labeled));
  write_json(fs::path(s.out) / "manifest.json",
             json{{"threshold", threshold},
                  {"threshold_source", s.threshold ? "override" : "median"},
                  {"source", s.dataset},
                  {"source_sha256", sha256_hex(read_file(s.dataset))},
                  {"records", labeled.size()},
                  {"quadrant_counts", counts_json(quadrant_counts(labeled))}});
  log.info("label", "done", {{"records", labeled.size()}, {"threshold", threshold}});
  return kExitOk;
}

int cmd_balance(const Settings& s, Log& log) {
  if (s.split_ratio < 1) throw IoError("--split-ratio must be at least 1");
  const auto records = load_dataset(s.dataset);
  if (records.empty()) throw EmptyResult("dataset is empty");
  BalancedSplit b = balance_and_split(records, s.split_ratio, derive_seed(s.seed, "split"), log);
  b.manifest["source"] = s.dataset;
  b.manifest["source_sha256"] = sha256_hex(read_file(s.dataset));
  b.manifest["root_seed"] = s.seed;
  write_atomic(fs::path(s.out) / "train.jsonl", write_jsonl(b.split.train));
  write_atomic(fs::path(s.out) / "test.jsonl", write_jsonl(b.split.test));
  write_json(fs::path(s.out) / "balance_manifest.json", b.manifest);
  log.info("balance", "done", {{"train", b.split.train.size()}, {"test", b.split.test.size()}});
  return kExitOk;
}

int cmd_features(const Settings& s, Log& log) {
  const auto rows = feature_rows(load_dataset(s.dataset), log);
  if (rows.empty()) throw EmptyResult("no feature rows");
  write_atomic(s.out, write_feature_table(rows));
  log.info("features", "done", {{"rows", rows.size()}});
  return kExitOk;
}

int cmd_analyze(const Settings& s, Log& log) {
  std::vector<FeatureRow> table;
  try {
    table = read_feature_table(read_file(s.table));
  } catch (const MalformedTable& e) {
    throw IoError(s.table + ": " + e.what());
  }
  if (table.empty()) throw EmptyResult("feature table has no rows");
  for (const auto& [name, content] : analyze(table, log)) write_atomic(fs::path(s.out) / name, content);
  log.info("analyze", "done", {{"rows", table.size()}});
  return kExitOk;
}

int cmd_train(const Settings& s, Log& log) {
  const auto train = load_dataset(s.train);
  if (train.empty()) throw EmptyResult("training set is empty");
  const CharLm model = CharLm::train(train, s.order, s.alpha, !s.plain, s.threads);
  std::ostringstream bytes;
  model.save(bytes);
  write_atomic(s.out, bytes.str());
  json manifest{{"order", model.order()},
                {"alpha", model.alpha()},
                {"metrical", model.metrical()},
                {"vocabulary_size", model.vocabulary().size()},
                {"contexts", model.context_count()},
                {"train", s.train},
                {"train_sha256", sha256_hex(read_file(s.train))},
                {"train_records", train.size()},
                {"train_cross_entropy", model.cross_entropy(train)},
                {"uniform_cross_entropy", std::log(static_cast<double>(model.vocabulary().size()))}};
  if (!s.test.empty()) {
    const auto test = load_dataset(s.test);
    if (!test.empty()) manifest["test_cross_entropy"] = model.cross_entropy(test);
    manifest["test_records"] = test.size();
  }
  write_json(fs::path(s.out).string() + ".json", manifest);
  log.info("train", "done", {{"contexts", model.context_count()}, {"train_cross_entropy", manifest["train_cross_entropy"]}});
  return kExitOk;
}

GenerateOptions generate_options(const Settings& s) {
  if (!(s.temperature > 0.0)) throw IoError("--temperature must be positive");
  GenerateOptions o;
  o.temperature = s.temperature;
  o.guided = s.guided;
  o.max_chars = s.max_chars;
  return o;
}

std::vector<Prompt> load_prompts(const std::string& path) {
  if (path.empty()) return {};
  return prompts_from(load_dataset(path));
}

int cmd_generate(const Settings& s, Log& log) {
  if (s.count == 0) throw IoError("--count must be positive");
  const CharLm model = load_model(s.model);
  const auto pool = load_prompts(s.prompts);
  AblationMask mask;
  try {
    mask = AblationMask::without(s.ablate);
  } catch (const FormatError& e) {
    throw IoError(std::string("--ablate: ") + e.what());
  }
  const GenerateOptions options = generate_options(s);
  json pieces = json::array();
  json failures = json::array();
  for (const auto& e : s.emotions) {
    const QuadrantLabel label = parse_emotion(e);
    for (const auto& f : generate_batch(model, label, s.count, mask, s.seed, pool, options)) {
      if (!f.piece) {
        log.warn("generate", f.event, {{"file", f.stem}, {"reason", f.failure}});
        failures.push_back(json{{"file", f.stem}, {"reason", f.failure}});
        continue;
      }
      const fs::path base = fs::path(s.out) / f.stem;
      const PerformanceScore& perf = f.piece->result.performance;
      write_atomic(base.string() + ".abc", serialize_abc(perf.score) + "\n");
      write_atomic(base.string() + ".mid", to_midi(perf));
      if (s.wav) write_atomic(base.string() + ".wav", to_wav(synthesize(perf)));
      pieces.push_back(piece_json(f));
    }
    log.info("generate", "done", {{"emotion", label.name()}, {"count", s.count}});
  }
  write_json(fs::path(s.out) / "manifest.json",
             json{{"model", s.model},
                  {"seed", s.seed},
                  {"temperature", s.temperature},
                  {"guided", s.guided},
                  {"ablate", s.ablate},
                  {"pieces", pieces},
                  {"failures", failures}});
  if (pieces.empty()) throw EmptyResult("no piece could be generated");
  return kExitOk;
}

int cmd_eval(const Settings& s, Log& log) {
  if (s.samples == 0) throw IoError("--samples must be positive");
  const CharLm model = load_model(s.model);
  const auto pool = load_prompts(s.prompts);
  Rng rng(derive_seed(s.seed, "eval-prompts"));
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < s.samples; ++i) {
    if (pool.empty()) prompts.push_back({QuadrantLabel::from_quadrant(static_cast<int>(i % 4) + 1), kFallbackCode});
    else prompts.push_back(pool[uniform_below(rng, pool.size())]);
  }
  const double rate = parse_rate(model, prompts, 1, derive_seed(s.seed, "eval"), generate_options(s));
  const json report{{"model", s.model},
                    {"samples", s.samples},
                    {"temperature", s.temperature},
                    {"guided", s.guided},
                    {"seed", s.seed},
                    {"parse_rate", rate}};
  if (s.out.empty()) std::cout << report.dump(2) << "\n";
  else write_json(s.out, report);
  log.info("eval", "done", {{"parse_rate", rate}});
  return kExitOk;
}

int cmd_run(Settings s, Log& log) {
  const fs::path root(s.out);
  Settings step = s;
  step.out = (root / "data").string();
  cmd_ingest(step, log);

  step.dataset = (root / "data" / "dataset.jsonl").string();
  step.out = (root / "features.csv").string();
  cmd_features(step, log);

  step.table = step.out;
  step.out = (root / "analysis").string();
  cmd_analyze(step, log);

  step.out = (root / "data").string();
  cmd_balance(step, log);

  step.train = (root / "data" / "train.jsonl").string();
  step.test = (root / "data" / "test.jsonl").string();
  step.out = (root / "model.bin").string();
  cmd_train(step, log);

  step.model = step.out;
  step.prompts = step.train;
  step.out = (root / "eval.json").string();
  cmd_eval(step, log);

  step.out = (root / "generated").string();
  return cmd_generate(step, log);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-conditioned melody toolkit: ingest, analyze, label, balance, train, generate, eval."};
  app.set_config("--config", "", "TOML file with option values; flags override it");
  app.require_subcommand(1);
  Settings s;
  std::string threshold_text;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", s.seed, "Root seed for all randomness")->capture_default_str(); };
  auto add_threshold = [&](CLI::App* c) {
    c->add_option("--threshold", threshold_text, "pitch_sd threshold (default: corpus median)");
  };
  auto add_generation = [&](CLI::App* c) {
    c->add_option("--temperature", s.temperature, "Sampling temperature")->capture_default_str();
    c->add_flag("--guided", s.guided, "Reject characters that cannot continue a valid tune");
    c->add_option("--max-chars", s.max_chars, "Maximum generated characters")->capture_default_str();
    c->add_option("--prompts", s.prompts, "JSONL dataset whose control codes seed generation");
  };

  auto* ingest_cmd = app.add_subcommand("ingest", "Parse, de-duplicate, segment and label ABC/MusicXML files");
  ingest_cmd->add_option("--input", s.inputs, "Files or directories")->required();
  ingest_cmd->add_option("--out", s.out, "Output directory")->required();
  ingest_cmd->add_option("--threads", s.threads, "Parser threads (0 = auto)");
  add_threshold(ingest_cmd);

  auto* label_cmd = app.add_subcommand("label", "Relabel a dataset against a pitch_sd threshold");
  label_cmd->add_option("--dataset", s.dataset, "Input JSONL")->required();
  label_cmd->add_option("--out", s.out, "Output directory")->required();
  add_threshold(label_cmd);

  auto* balance_cmd = app.add_subcommand("balance", "Split by quadrant and expand Q2/Q3 into fifteen keys");
  balance_cmd->add_option("--dataset", s.dataset, "Input JSONL")->required();
  balance_cmd->add_option("--out", s.out, "Output directory")->required();
  balance_cmd->add_option("--split-ratio", s.split_ratio, "Train:test ratio N:1")->capture_default_str();
  add_seed(balance_cmd);

  auto* features_cmd = app.add_subcommand("features", "Write the 11-column feature table for a dataset");
  features_cmd->add_option("--dataset", s.dataset, "Input JSONL")->required();
  features_cmd->add_option("--out", s.out, "Output CSV")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Correlation report, density curves and bar counts");
  analyze_cmd->add_option("--table", s.table, "11-column feature CSV")->required();
  analyze_cmd->add_option("--out", s.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the character model");
  train_cmd->add_option("--train", s.train, "Training JSONL")->required();
  train_cmd->add_option("--test", s.test, "Held-out JSONL for cross-entropy");
  train_cmd->add_option("--out", s.out, "Model file")->required();
  train_cmd->add_option("--order", s.order, "Context length k")->capture_default_str();
  train_cmd->add_option("--alpha", s.alpha, "Additive smoothing constant")->capture_default_str();
  train_cmd->add_flag("--plain", s.plain, "Character contexts only, without the bar-position state");
  train_cmd->add_option("--threads", s.threads, "Counting threads (0 = auto)");

  auto* generate_cmd = app.add_subcommand("generate", "Generate melodies per emotion and apply the template");
  generate_cmd->add_option("--model", s.model, "Model file")->required();
  generate_cmd->add_option("--emotion", s.emotions, "Q1..Q4 (repeatable)")->capture_default_str();
  generate_cmd->add_option("--count", s.count, "Pieces per emotion")->capture_default_str();
  generate_cmd->add_option("--ablate", s.ablate, "Comma list of tempo,pitch_sd,mode,octave,volume to switch off");
  generate_cmd->add_option("--samples", s.count, "Alias of --count");
  generate_cmd->add_option("--out", s.out, "Output directory")->required();
  generate_cmd->add_flag("--wav", s.wav, "Also write sine-rendered WAV files");
  add_seed(generate_cmd);
  add_generation(generate_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Parse rate of sampled pieces");
  eval_cmd->add_option("--model", s.model, "Model file")->required();
  eval_cmd->add_option("--samples", s.samples, "Number of samples")->capture_default_str();
  eval_cmd->add_option("--out", s.out, "Report JSON (default: stdout)");
  add_seed(eval_cmd);
  add_generation(eval_cmd);

  auto* run_cmd = app.add_subcommand("run", "Whole pipeline from score files to generated pieces");
  run_cmd->add_option("--input", s.inputs, "Files or directories")->required();
  run_cmd->add_option("--out", s.out, "Output directory")->required();
  run_cmd->add_option("--split-ratio", s.split_ratio, "Train:test ratio N:1")->capture_default_str();
  run_cmd->add_option("--order", s.order, "Context length k")->capture_default_str();
  run_cmd->add_option("--alpha", s.alpha, "Additive smoothing constant")->capture_default_str();
  run_cmd->add_option("--count", s.count, "Pieces per emotion")->capture_default_str();
  run_cmd->add_option("--ablate", s.ablate, "Features to switch off");
  run_cmd->add_option("--samples", s.samples, "Parse-rate samples")->capture_default_str();
  run_cmd->add_flag("--wav", s.wav, "Also write WAV files");
  add_threshold(run_cmd);
  add_seed(run_cmd);
  run_cmd->add_option("--temperature", s.temperature, "Sampling temperature")->capture_default_str();
  run_cmd->add_flag("--guided", s.guided, "Grammar-guarded sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFatal;
  }

  Log log(&std::cerr);
  try {
    if (!threshold_text.empty()) {
      std::size_t used = 0;
      const double t = std::stod(threshold_text, &used);
      if (used != threshold_text.size() || !std::isfinite(t)) throw IoError("--threshold must be a number");
      s.threshold = t;
    }
    if (*ingest_cmd) return cmd_ingest(s, log);
    if (*label_cmd) return cmd_label(s, log);
    if (*balance_cmd) return cmd_balance(s, log);
    if (*features_cmd) return cmd_features(s, log);
    if (*analyze_cmd) return cmd_analyze(s, log);
    if (*train_cmd) return cmd_train(s, log);
    if (*generate_cmd) return cmd_generate(s, log);
    if (*eval_cmd) return cmd_eval(s, log);
    if (*run_cmd) return cmd_run(s, log);
  } catch (const EmptyResult& e) {
    log.write("error", "main", "empty_result", {{"reason", e.what()}});
    return kExitEmpty;
  } catch (const EmptyCorpus& e) {
    log.write("error", "main", "empty_result", {{"reason", e.what()}});
    return kExitEmpty;
  } catch (const std::exception& e) {
    log.write("error", "main", "fatal", {{"reason", e.what()}});
    return kExitFatal;
  }
  return kExitFatal;
}

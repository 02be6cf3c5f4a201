#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include "emogen/pipeline.hpp"

using namespace emogen;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("emogen_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

const char* kTwoTunes =
    "X:1\nT:First\nL:1/8\nM:4/4\nK:G\nGABc d2 B2|c2 A2 G4|]\n\n"
    "X:2\nT:Second\nL:1/8\nM:3/4\nK:Dm\nD2 F2 A2|d6|A2 F2 D2|D6|]\n";
const char* kThird = "X:7\nT:Third\nL:1/4\nM:2/4\nK:C\nC E|G c|G E|C2|]\n";
const char* kSameMusic = "X:9\nT:Another name\nL:1/4\nM:2/4\nK:C\nCE|Gc|GE|C2|]\n";
const char* kBroken = "X:3\nT:Broken\nL:1/8\nM:4/4\nK:C\n[CEG]4 c4|]\n";

void make_corpus(const fs::path& dir) {
  write(dir / "a.abc", kTwoTunes);
  write(dir / "b.abc", kThird);
  write(dir / "sub/c.abc", kSameMusic);
  write(dir / "sub/dup.abc", kTwoTunes);
  write(dir / "bad.abc", kBroken);
  write(dir / "notes.txt", "ignored");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EMOGEN_CLI_PATH) + " " + args + " 2>/dev/null >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST(Pipeline, Sha256) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Pipeline, ExpandInputs) {
  TempDir dir("expand");
  make_corpus(dir.path());
  const auto files = expand_inputs({dir.path().string(), (dir / "b.abc").string()});
  ASSERT_EQ(files.size(), 5u);
  EXPECT_TRUE(std::is_sorted(files.begin(), files.end()));
}

TEST(Pipeline, IngestDropsAndDeduplicates) {
  TempDir dir("ingest");
  make_corpus(dir.path());
  std::ostringstream log_text;
  Log log(&log_text);
  const IngestResult r = ingest({dir.path().string()}, {}, log);
  ASSERT_EQ(r.records.size(), 3u);
  const json& m = r.manifest;
  EXPECT_EQ(m["records"], 3);
  EXPECT_EQ(m["dropped"]["parse_error"], 1);
  EXPECT_EQ(m["dropped"]["duplicate_file"], 1);
  EXPECT_EQ(m["dropped"]["duplicate_tune"], 1);
  EXPECT_EQ(m["threshold_source"], "median");
  const auto counts = quadrant_counts(r.records);
  for (int q = 0; q < 4; ++q) EXPECT_EQ(m["quadrant_counts"]["Q" + std::to_string(q + 1)], counts[static_cast<std::size_t>(q)]);
  for (const auto& rec : r.records) {
    const Score s = parse_abc(rec.abc);
    EXPECT_FALSE(s.title.has_value());
    EXPECT_EQ(rec.label, rough_label(s, r.threshold));
    EXPECT_EQ(rec.control_code, format_control_code(rec.label, control_code(s)));
  }
  // Every drop is logged as one JSON line.
  std::istringstream lines(log_text.str());
  std::string line;
  int drops = 0;
  while (std::getline(lines, line)) drops += json::parse(line)["event"] == "drop";
  EXPECT_EQ(drops, 3);

  IngestOptions fixed;
  fixed.threshold = 100.0;
  const IngestResult low = ingest({dir.path().string()}, fixed, log);
  for (const auto& rec : low.records) EXPECT_FALSE(rec.label.arousal_high);
  EXPECT_EQ(low.manifest["threshold_source"], "override");
}

TEST(Pipeline, AnalyzeWritesReportAndCurves) {
  Rng rng(3);
  std::vector<FeatureRow> table;
  for (int i = 0; i < 40; ++i) {
    FeatureRow r;
    r.quadrant = 1 + i % 4;
    r.valence = r.quadrant == 1 || r.quadrant == 4;
    r.arousal = r.quadrant <= 2;
    r.features.key = uniform_int(rng, 0, 11);
    r.features.mode = uniform_below(rng, 2);
    r.features.tempo = 60 + uniform_int(rng, 0, 100);
    r.features.direction = static_cast<Direction>(uniform_below(rng, 2));
    r.features.avg_pitch = 60 + uniform_unit(rng);
    r.features.pitch_range = uniform_int(rng, 2, 20);
    r.features.pitch_sd = uniform_unit(rng) * 4;
    r.features.rms = uniform_unit(rng);
    table.push_back(r);
  }
  std::ostringstream sink;
  Log log(&sink);
  const auto files = analyze(table, log);
  EXPECT_EQ(files.count("report.csv"), 1u);
  EXPECT_EQ(files.count("report.txt"), 1u);
  EXPECT_EQ(files.count("mode_counts.csv"), 1u);
  EXPECT_EQ(files.count("direction_counts.csv"), 1u);
  EXPECT_EQ(files.count("kde/pitchsd_Q3.csv"), 1u);
  EXPECT_EQ(files.size(), 4u + 24u);
  const std::string& curve = files.at("kde/tempo_Q1.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 201);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_codes");
  make_corpus(dir / "in");
  write(dir / "only_bad/x.abc", kBroken);
  EXPECT_EQ(run_cli("ingest --input " + (dir / "in").string() + " --out " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out/dataset.jsonl"));
  EXPECT_EQ(run_cli("ingest --input " + (dir / "only_bad").string() + " --out " + (dir / "out2").string()), 2);
  EXPECT_EQ(run_cli("ingest --input " + (dir / "missing").string() + " --out " + (dir / "out3").string()), 1);
  EXPECT_EQ(run_cli("ingest --out " + (dir / "out4").string()), 1);
  EXPECT_EQ(run_cli("bogus"), 1);
  write(dir / "bad.jsonl", "{not json}\n");
  EXPECT_EQ(run_cli("balance --dataset " + (dir / "bad.jsonl").string() + " --out " + (dir / "b").string()), 1);
  write(dir / "empty.jsonl", "");
  EXPECT_EQ(run_cli("label --dataset " + (dir / "empty.jsonl").string() + " --out " + (dir / "l").string()), 2);
  EXPECT_EQ(run_cli("generate --model " + (dir / "none.bin").string() + " --out " + (dir / "g").string()), 1);
}

TEST(Cli, StagesChainAndRepeatIdentically) {
  TempDir dir("cli_chain");
  make_corpus(dir / "in");
  const std::string in = (dir / "in").string();
  for (const char* out : {"r1", "r2"}) {
    const std::string o = (dir / out).string();
    ASSERT_EQ(run_cli("ingest --input " + in + " --out " + o + "/data"), 0);
    ASSERT_EQ(run_cli("balance --dataset " + o + "/data/dataset.jsonl --out " + o + "/split --split-ratio 2 --seed 5"), 0);
    ASSERT_EQ(run_cli("features --dataset " + o + "/data/dataset.jsonl --out " + o + "/features.csv"), 0);
    ASSERT_EQ(run_cli("train --train " + o + "/data/dataset.jsonl --test " + o + "/split/test.jsonl --order 4 --out " + o +
                      "/model.bin"),
              0);
    // Ask for an emotion the tiny corpus actually contains.
    const auto records = read_jsonl(read_file(o + "/data/dataset.jsonl"));
    const std::string emotion = records.front().label.name();
    ASSERT_EQ(run_cli("generate --model " + o + "/model.bin --prompts " + o + "/data/dataset.jsonl --emotion " + emotion +
                      " --count 3 --guided --seed 9 --out " + o + "/gen"),
              0);
    ASSERT_EQ(run_cli("eval --model " + o + "/model.bin --prompts " + o + "/data/dataset.jsonl --samples 5 --out " + o +
                      "/eval.json"),
              0);
  }
  const auto a = snapshot(dir / "r1");
  const auto b = snapshot(dir / "r2");
  EXPECT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) {
    if (name.ends_with(".json")) continue;  // manifests record their own paths
    ASSERT_EQ(b.count(name), 1u) << name;
    EXPECT_EQ(b.at(name), bytes) << name;
  }
  const auto table = read_feature_table(a.at("features.csv"));
  EXPECT_EQ(table.size(), 3u);
  const auto gen = json::parse(a.at("gen/manifest.json"));
  EXPECT_EQ(gen["pieces"].size() + gen["failures"].size(), 3u);
  for (const auto& [name, bytes] : a)
    if (name.ends_with(".abc")) EXPECT_NO_THROW(parse_abc(bytes)) << name;
}

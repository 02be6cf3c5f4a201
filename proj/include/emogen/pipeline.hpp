/**
 * @file pipeline.hpp
 * @brief File-level pipeline stages shared by the command-line tool: ingestion with
 *        de-duplication, labeling, balancing, feature tables, analysis exports,
 *        training, generation batches and parse-rate evaluation.
 */
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "emogen/abc.hpp"
#include "emogen/features.hpp"
#include "emogen/labeling.hpp"
#include "emogen/lm.hpp"
#include "emogen/musicxml.hpp"
#include "emogen/render.hpp"
#include "emogen/stats.hpp"
#include "emogen/template.hpp"

namespace emogen {

namespace fs = std::filesystem;
using nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

/// One JSON object per line.
class Log {
 public:
  explicit Log(std::ostream* out = &std::cerr) : out_(out) {}

  void write(const std::string& level, const std::string& stage, const std::string& event, json fields = json::object()) {
    if (!out_) return;
    json line{{"level", level}, {"stage", stage}, {"event", event}};
    line.update(fields);
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << line.dump() << '\n';
  }
  void info(const std::string& stage, const std::string& event, json fields = json::object()) {
    write("info", stage, event, std::move(fields));
  }
  void warn(const std::string& stage, const std::string& event, json fields = json::object()) {
    write("warn", stage, event, std::move(fields));
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file in the same directory and renames it into place.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline json counts_json(const std::array<std::size_t, 4>& counts) {
  return json{{"Q1", counts[0]}, {"Q2", counts[1]}, {"Q3", counts[2]}, {"Q4", counts[3]}};
}

inline bool is_score_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".abc" || ext == ".xml" || ext == ".musicxml" || ext == ".mxl";
}

/// Files named directly plus score files found recursively under directories, sorted.
inline std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && is_score_file(e.path())) files.push_back(e.path());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw IoError("input path does not exist: " + in);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

struct ParsedTune {
  std::string origin;  // "file:line"
  Score score;
};

struct FileParse {
  std::vector<ParsedTune> tunes;
  std::vector<std::pair<std::string, std::string>> drops;  // origin, reason
};

inline FileParse parse_score_file(const fs::path& path, const std::string& bytes) {
  FileParse out;
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const std::string name = path.generic_string();
  if (ext == ".abc") {
    for (const auto& tune : split_tunes(bytes)) {
      const std::string origin = name + ":" + std::to_string(tune.first_line);
      try {
        out.tunes.push_back({origin, parse_abc(tune.text)});
      } catch (const LocatedError& e) {
        out.drops.emplace_back(origin, std::string(e.what()) + " (tune line " + std::to_string(e.line()) + ", column " +
                                           std::to_string(e.column()) + ")");
      } catch (const Error& e) {
        out.drops.emplace_back(origin, e.what());
      }
    }
    return out;
  }
  try {
    out.tunes.push_back({name, ext == ".mxl" ? parse_mxl(bytes) : parse_musicxml(bytes)});
  } catch (const Error& e) {
    out.drops.emplace_back(name, e.what());
  }
  return out;
}

struct IngestOptions {
  std::optional<double> threshold;
  unsigned threads = 0;
};

struct IngestResult {
  std::vector<DatasetRecord> records;
  double threshold = 0.0;
  json manifest;
};

/// Parses every file, drops failures and duplicates (same file bytes or same music),
/// segments, labels against the pitch_sd threshold and builds the dataset records.
inline IngestResult ingest(const std::vector<std::string>& inputs, const IngestOptions& options, Log& log) {
  const auto files = expand_inputs(inputs);
  std::vector<std::string> contents(files.size());
  std::vector<std::string> hashes(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    contents[i] = read_file(files[i]);
    hashes[i] = sha256_hex(contents[i]);
  }

  std::vector<FileParse> parsed(files.size());
  unsigned threads = options.threads ? options.threads : std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  {
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < threads; ++t)
      jobs.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t i = t; i < files.size(); i += threads) parsed[i] = parse_score_file(files[i], contents[i]);
      }));
    for (auto& j : jobs) j.get();
  }

  std::map<std::string, std::size_t> drop_counts;
  const auto drop = [&](const std::string& origin, const std::string& reason, const std::string& kind) {
    ++drop_counts[kind];
    log.warn("ingest", "drop", {{"origin", origin}, {"kind", kind}, {"reason", reason}});
  };

  json sources = json::array();
  std::set<std::string> seen_files;
  std::set<std::string> seen_tunes;
  std::vector<Score> chunks;
  for (std::size_t i = 0; i < files.size(); ++i) {
    json source{{"path", files[i].generic_string()}, {"sha256", hashes[i]}};
    if (!seen_files.insert(hashes[i]).second) {
      drop(files[i].generic_string(), "file content duplicates an earlier input", "duplicate_file");
      source["duplicate"] = true;
      sources.push_back(source);
      continue;
    }
    std::size_t accepted = 0;
    for (const auto& [origin, reason] : parsed[i].drops) drop(origin, reason, "parse_error");
    for (auto& tune : parsed[i].tunes) {
      Score canonical = tune.score;
      canonical.reference = 1;
      canonical.title.reset();
      if (!seen_tunes.insert(sha256_hex(serialize_abc(canonical))).second) {
        drop(tune.origin, "same music as an earlier tune", "duplicate_tune");
        continue;
      }
      tune.score.title.reset();
      for (auto& chunk : segment(tune.score)) {
        bool sounded = false;
        for (const auto& m : chunk.measures)
          for (const auto& n : m.notes) sounded = sounded || !n.is_rest();
        if (!sounded) {
          drop(tune.origin, "segment has no sounded note", "empty_melody");
          continue;
        }
        chunks.push_back(std::move(chunk));
      }
      ++accepted;
    }
    source["tunes"] = parsed[i].tunes.size() + parsed[i].drops.size();
    source["accepted"] = accepted;
    sources.push_back(source);
  }

  IngestResult result;
  if (chunks.empty()) {
    result.manifest = json{{"records", 0}, {"sources", sources}, {"dropped", drop_counts}};
    return result;
  }
  result.threshold = options.threshold ? *options.threshold : compute_threshold(chunks);
  result.records.reserve(chunks.size());
  for (const auto& c : chunks) result.records.push_back(make_record(c, rough_label(c, result.threshold)));
  result.manifest = json{{"threshold", result.threshold},
                         {"threshold_source", options.threshold ? "override" : "median"},
                         {"records", result.records.size()},
                         {"quadrant_counts", counts_json(quadrant_counts(result.records))},
                         {"dropped", drop_counts},
                         {"sources", sources}};
  log.info("ingest", "done", {{"records", result.records.size()}, {"threshold", result.threshold}});
  return result;
}

/// Re-derives every record's label against a threshold (the median of the dataset when absent).
inline std::pair<std::vector<DatasetRecord>, double> relabel(const std::vector<DatasetRecord>& records,
                                                             std::optional<double> threshold) {
  std::vector<Score> scores;
  scores.reserve(records.size());
  for (const auto& r : records) scores.push_back(parse_abc(r.abc));
  const double t = threshold ? *threshold : compute_threshold(scores);
  std::vector<DatasetRecord> out;
  out.reserve(records.size());
  for (const auto& s : scores) out.push_back(make_record(s, rough_label(s, t)));
  return {out, t};
}

struct BalancedSplit {
  DatasetSplit split;
  json manifest;
};

/// Splits first, so no transposed copy of a test tune lands in training, then balances each part.
inline BalancedSplit balance_and_split(const std::vector<DatasetRecord>& records, int ratio, std::uint64_t seed, Log& log) {
  const DatasetSplit raw = split_dataset(records, ratio, seed);
  std::vector<std::string> warnings;
  BalancedSplit out;
  out.split.train = balance(raw.train, &warnings);
  out.split.test = balance(raw.test, &warnings);
  for (const auto& w : warnings) log.warn("balance", "skip_key", {{"reason", w}});
  out.manifest = json{{"split_ratio", ratio},
                      {"seed", seed},
                      {"input_records", records.size()},
                      {"input_counts", counts_json(quadrant_counts(records))},
                      {"train_records", out.split.train.size()},
                      {"train_counts", counts_json(quadrant_counts(out.split.train))},
                      {"test_records", out.split.test.size()},
                      {"test_counts", counts_json(quadrant_counts(out.split.test))},
                      {"range_warnings", warnings.size()}};
  return out;
}

/// Feature rows for labeled records; valence and arousal come from the label bits.
inline std::vector<FeatureRow> feature_rows(const std::vector<DatasetRecord>& records, Log& log) {
  std::vector<FeatureRow> rows;
  for (const auto& r : records) {
    try {
      FeatureRow row;
      row.quadrant = r.label.quadrant;
      row.valence = r.label.valence_high;
      row.arousal = r.label.arousal_high;
      row.features = extract_features(parse_abc(r.abc));
      rows.push_back(row);
    } catch (const Error& e) {
      log.warn("features", "drop", {{"control_code", r.control_code}, {"reason", e.what()}});
    }
  }
  return rows;
}

inline constexpr std::size_t kKdeGridPoints = 200;

inline std::string feature_slug(FeatureColumn c) {
  std::string s = feature_name(c);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return ch == ' ' ? '_' : static_cast<char>(std::tolower(ch)); });
  return s;
}

/// Report files keyed by relative path: the correlation report, one density curve per
/// feature and quadrant, and the mode and direction counts per quadrant.
inline std::map<std::string, std::string> analyze(const std::vector<FeatureRow>& table, Log& log) {
  std::map<std::string, std::string> files;
  const auto report = correlation_report(table, true);
  for (const auto& row : report)
    if (!row.defined)
      log.warn("analyze", "undefined_correlation", {{"emotion", row.emotion}, {"feature", feature_name(row.feature)}});
  files["report.csv"] = report_csv(report);
  files["report.txt"] = report_text(report);
  for (FeatureColumn c : kKdeFeatures) {
    for (int q = 1; q <= 4; ++q) {
      std::vector<double> samples;
      for (const auto& r : table)
        if (r.quadrant == q) samples.push_back(feature_value(r.features, c));
      const std::string name = "kde/" + feature_slug(c) + "_Q" + std::to_string(q) + ".csv";
      try {
        const KdeCurve curve = kde(samples, kKdeGridPoints);
        std::ostringstream out;
        out.precision(17);
        out << "x,density\n";
        for (std::size_t i = 0; i < curve.grid.size(); ++i) out << curve.grid[i] << ',' << curve.density[i] << '\n';
        files[name] = out.str();
      } catch (const DegenerateSeries& e) {
        log.warn("analyze", "skip_kde", {{"file", name}, {"reason", e.what()}});
      }
    }
  }
  for (FeatureColumn c : {FeatureColumn::mode, FeatureColumn::direction}) {
    std::string out = c == FeatureColumn::mode ? "quadrant,minor,major\n" : "quadrant,descending,ascending\n";
    for (int q = 1; q <= 4; ++q) {
      std::size_t ones = 0;
      std::size_t zeros = 0;
      for (const auto& r : table)
        if (r.quadrant == q) (feature_value(r.features, c) != 0.0 ? ones : zeros)++;
      out += "Q" + std::to_string(q) + "," + std::to_string(zeros) + "," + std::to_string(ones) + "\n";
    }
    files[feature_slug(c) + "_counts.csv"] = out;
  }
  return files;
}

inline constexpr ControlCode kFallbackCode{1, 16, 10, 16};

/// Control codes for a quadrant drawn from the given records, or a fixed default when none match.
inline ControlCode pick_code(const std::vector<Prompt>& pool, int quadrant, Rng& rng) {
  std::vector<const Prompt*> matching;
  for (const auto& p : pool)
    if (p.label.quadrant == quadrant) matching.push_back(&p);
  if (matching.empty()) return kFallbackCode;
  return matching[uniform_below(rng, matching.size())]->code;
}

struct GeneratedFile {
  std::string stem;
  std::optional<EmotionPiece> piece;
  std::string failure;
  std::string event;  // log event name for a failure
};

/// `count` pieces for one emotion; piece i uses a seed derived from the root seed, the quadrant and i.
/// A piece whose retries run out is reported in `failure` instead.
inline std::vector<GeneratedFile> generate_batch(const CharLm& model, const QuadrantLabel& label, std::size_t count,
                                                 const AblationMask& mask, std::uint64_t seed,
                                                 const std::vector<Prompt>& pool, const GenerateOptions& options) {
  std::vector<GeneratedFile> out(count);
  const std::uint64_t quadrant_seed = derive_seed(seed, label.name());
  std::vector<std::future<void>> jobs;
  const unsigned threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  for (unsigned t = 0; t < threads; ++t)
    jobs.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t i = t; i < count; i += threads) {
        const std::uint64_t item_seed = derive_seed(quadrant_seed, i);
        Rng prompt_rng(derive_seed(item_seed, "prompt"));
        const ControlCode code = pick_code(pool, label.quadrant, prompt_rng);
        char stem[32];
        std::snprintf(stem, sizeof stem, "%s_%03zu", label.name().c_str(), i + 1);
        out[i].stem = stem;
        try {
          out[i].piece = generate_with_emotion(model, label, code, mask, item_seed, options);
        } catch (const ExhaustedRetries& e) {
          out[i].failure = e.what();
          out[i].event = "exhausted_retries";
        } catch (const UnseenLabel& e) {
          out[i].failure = e.what();
          out[i].event = "unseen_label";
        }
      }
    }));
  for (auto& j : jobs) j.get();
  return out;
}

inline json piece_json(const GeneratedFile& f) {
  const auto& r = f.piece->result;
  return json{{"file", f.stem},
              {"label", f.piece->label.name()},
              {"conditioning", format_control_code(f.piece->conditioning, f.piece->code)},
              {"tempo_bpm", r.performance.tempo_bpm},
              {"requested_octave_shift", r.requested_octaves},
              {"applied_octave_shift", r.applied_octaves},
              {"velocity", r.performance.velocity},
              {"attempts", f.piece->attempts}};
}

}  // namespace emogen

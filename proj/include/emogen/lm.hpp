/**
 * @file lm.hpp
 * @brief Bar-patch tokenisation and an order-k additive-smoothing character model
 *        conditioned on the quadrant label, with seeded sampling and parse-rate evaluation.
 */
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "emogen/abc.hpp"
#include "emogen/labeling.hpp"
#include "emogen/rng.hpp"

namespace emogen {

inline constexpr char kPadChar = '\x02';
inline constexpr char kSepChar = '\x1f';
inline constexpr char kEndChar = '\x03';
inline constexpr char kUnkChar = '\x01';

struct BarPatchSequence {
  std::string prefix;  // control code
  std::string header;  // header lines, each ending in '\n'
  std::vector<std::string> patches;

  /// The characters the model predicts: header, patches, then the end token.
  std::string target() const {
    std::string out = header;
    for (const auto& p : patches) out += p;
    out += kEndChar;
    return out;
  }
  /// Prefix, separator and target as one document.
  std::string document() const { return prefix + kSepChar + target(); }
};

namespace lm_detail {

inline bool is_bar_char(char c) { return c == '|' || c == ':' || c == ']'; }

/// Splits a serialized body into one patch per measure, each ending with its barline.
inline std::vector<std::string> split_patches(std::string_view body) {
  std::vector<std::string> patches;
  std::string current;
  std::size_t i = 0;
  // An opening repeat or a guard barline belongs to the first patch.
  if (body.substr(0, 2) == "|:") {
    current = "|:";
    i = 2;
  } else if (!body.empty() && body[0] == '|') {
    current = "|";
    i = 1;
  }
  while (i < body.size()) {
    if (is_bar_char(body[i])) {
      while (i < body.size() && is_bar_char(body[i])) current += body[i++];
      patches.push_back(std::move(current));
      current.clear();
    } else {
      current += body[i++];
    }
  }
  if (!current.empty()) patches.push_back(std::move(current));
  return patches;
}

}  // namespace lm_detail

inline BarPatchSequence tokenize(const DatasetRecord& record) {
  parse_abc(record.abc);
  const std::size_t k_line = record.abc.find("\nK:") != std::string::npos ? record.abc.find("\nK:") + 1
                                                                            : (record.abc.rfind("K:", 0) == 0 ? 0 : std::string::npos);
  if (k_line == std::string::npos) throw FormatError("record has no K: line");
  const std::size_t body_start = record.abc.find('\n', k_line);
  BarPatchSequence seq;
  seq.prefix = record.control_code;
  if (body_start == std::string::npos) {
    seq.header = record.abc + "\n";
    return seq;
  }
  seq.header = record.abc.substr(0, body_start + 1);
  seq.patches = lm_detail::split_patches(std::string_view(record.abc).substr(body_start + 1));
  return seq;
}

/// The record's ABC text.
inline std::string detokenize(const BarPatchSequence& seq) {
  std::string out = seq.header;
  for (const auto& p : seq.patches) out += p;
  if (seq.patches.empty() && !out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

/// Tracks how much of the current measure the text written so far has filled.
/// Fed the target characters one at a time; state() names the remaining room in
/// units of the L: length, counting a note still being written at its current length.
class BarClock {
 public:
  void feed(char c) {
    if (!in_body_) {
      if (c != '\n') {
        line_ += c;
        return;
      }
      read_header_line();
      line_.clear();
      return;
    }
    if (c == '|' || c == ':' || c == ']') {
      commit();
      if (!in_barline_) elapsed_ = Rational(0);
      in_barline_ = true;
      return;
    }
    in_barline_ = false;
    if (c == '^' || c == '_' || c == '=') {
      if (!accidental_) commit();
      accidental_ = true;
    } else if ((c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g') || c == 'z' || c == 'x') {
      if (!accidental_) commit();
      accidental_ = false;
      open_ = true;
      length_.clear();
    } else if (open_ && (std::isdigit(static_cast<unsigned char>(c)) || c == '/')) {
      length_ += c;
    } else if (open_ && (c == '\'' || c == ',')) {
    } else if (c == '>' || c == '<') {
      if (open_) {
        broken_this_ = c == '>' ? Rational(3, 2) : Rational(1, 2);
        broken_next_ = c == '>' ? Rational(1, 2) : Rational(3, 2);
      }
    } else {
      commit();
    }
  }

  std::string state() const {
    if (!in_body_) return "h";
    const Rational unit = unit_ ? *unit_ * 4 : Rational(1, 2);
    const Rational room = (measure_ - elapsed_ - (open_ ? current() : Rational(0))) / unit;
    if (room < Rational(0)) return "x";
    if (room > Rational(64)) return "+";
    return room.denominator() == 1 ? std::to_string(room.numerator())
                                   : std::to_string(room.numerator()) + "/" + std::to_string(room.denominator());
  }

 private:
  static Rational length_value(const std::string& text) {
    std::int64_t num = 1;
    std::int64_t den = 1;
    std::size_t i = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) && i < 6) ++i;
    if (i > 0) num = std::stoll(text.substr(0, i));
    if (i < text.size() && text[i] == '/') {
      const std::size_t d = ++i;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) && i - d < 6) ++i;
      if (i > d) den = std::stoll(text.substr(d, i - d));
      else
        for (den = 2; i < text.size() && text[i] == '/' && den < 1024; ++i) den *= 2;
    }
    if (num <= 0 || den <= 0 || den > 1024 || (den & (den - 1)) != 0) return Rational(0);
    return Rational(num, den);
  }

  Rational current() const {
    const Rational unit = unit_ ? *unit_ * 4 : Rational(1, 2);
    return unit * length_value(length_) * (broken_this_ != Rational(0) ? broken_this_ : pending_);
  }

  void commit() {
    if (!open_) return;
    elapsed_ += current();
    pending_ = broken_this_ != Rational(0) ? broken_next_ : Rational(1);
    broken_this_ = Rational(0);
    open_ = false;
    length_.clear();
  }

  void read_header_line() {
    if (line_.size() < 2 || line_[1] != ':') return;
    const std::string_view value = std::string_view(line_).substr(2);
    try {
      if (line_[0] == 'L') unit_ = abc_detail::parse_fraction(value, 1, 1, "unit");
      if (line_[0] == 'M') {
        const Meter m = abc_detail::parse_meter(value, 1, 1);
        measure_ = m.measure_length();
        if (!unit_) unit_ = Rational(m.numerator, m.denominator) < Rational(3, 4) ? Rational(1, 16) : Rational(1, 8);
      }
    } catch (const Error&) {
    }
    if (line_[0] == 'K') in_body_ = true;
  }

  bool in_body_ = false;
  std::string line_;
  std::optional<Rational> unit_;
  Rational measure_{4};
  Rational elapsed_{0};
  bool open_ = false;
  bool accidental_ = false;
  bool in_barline_ = false;
  std::string length_;
  Rational pending_{1};
  Rational broken_this_{0};
  Rational broken_next_{0};
};

struct GenerateOptions {
  double temperature = 1.0;
  std::size_t max_chars = 2048;
  bool guided = false;  // reject characters that cannot continue a valid tune
};

/// Temperatures below this decode greedily.
inline constexpr double kGreedyTemperature = 1e-3;

struct GenerationResult {
  std::string text;
  std::optional<Score> score;
  std::string failure;  // empty on success

  bool ok() const { return score.has_value(); }
};

class CharLm {
 public:
  struct Entry {
    std::vector<std::pair<std::uint16_t, std::uint32_t>> counts;  // sorted by symbol
    std::uint64_t total = 0;
  };

  CharLm() = default;

  /// A model with no counts: every context yields the uniform distribution.
  static CharLm uniform(std::string vocabulary, int order) {
    CharLm m;
    m.order_ = order;
    m.metrical_ = false;
    m.alpha_ = 1.0;
    m.set_vocabulary(std::move(vocabulary));
    return m;
  }

  /// With `metrical` set, each context also carries the BarClock state.
  static CharLm train(const std::vector<DatasetRecord>& records, int order, double alpha, bool metrical = true,
                      unsigned threads = 0) {
    if (records.empty()) throw EmptyCorpus("cannot train on an empty corpus");
    if (order < 1) throw RangeError("model order must be at least 1");
    if (!(alpha > 0.0)) throw RangeError("smoothing constant must be positive");
    std::vector<BarPatchSequence> seqs;
    seqs.reserve(records.size());
    for (const auto& r : records) seqs.push_back(tokenize(r));

    CharLm m;
    m.order_ = order;
    m.alpha_ = alpha;
    m.metrical_ = metrical;
    std::string vocab(1, kUnkChar);
    bool seen[256] = {};
    for (const auto& s : seqs)
      for (char c : s.target()) seen[static_cast<unsigned char>(c)] = true;
    for (int c = 0; c < 256; ++c)
      if (seen[c] && c != static_cast<unsigned char>(kUnkChar)) vocab += static_cast<char>(c);
    m.set_vocabulary(std::move(vocab));

    if (threads == 0) threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, seqs.size()));
    using Local = std::unordered_map<std::string, std::unordered_map<std::uint16_t, std::uint32_t>>;
    std::vector<Local> partial(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < seqs.size(); i += threads) {
          const std::string doc = seqs[i].document();
          const QuadrantLabel& label = records[i].label;
          BarClock clock;
          for (std::size_t pos = seqs[i].prefix.size() + 1; pos < doc.size(); ++pos) {
            const std::uint16_t sym = m.symbol(doc[pos]);
            ++partial[t][m.plain_key(label, doc, pos)][sym];
            if (metrical) ++partial[t][m.metrical_key(label, clock, doc, pos)][sym];
            clock.feed(doc[pos]);
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& local : partial) {
      for (auto& [ctx, counts] : local) {
        auto& merged = m.table_[ctx];
        for (const auto& [sym, n] : counts) {
          auto it = std::lower_bound(merged.counts.begin(), merged.counts.end(), sym,
                                     [](const auto& p, std::uint16_t s) { return p.first < s; });
          if (it != merged.counts.end() && it->first == sym) it->second += n;
          else merged.counts.insert(it, {sym, n});
          merged.total += n;
        }
      }
      local.clear();
    }
    m.index_labels();
    return m;
  }

  int order() const { return order_; }
  bool metrical() const { return metrical_; }
  double alpha() const { return alpha_; }
  const std::string& vocabulary() const { return vocab_; }
  std::size_t context_count() const { return table_.size(); }

  /// Whether any training record carried this label.
  bool trained_on(const QuadrantLabel& label) const { return seen_labels_[static_cast<std::size_t>(label.quadrant)]; }

  /// Index of `c` in the vocabulary; characters never seen in training map to the unknown slot.
  std::uint16_t symbol(char c) const {
    const int idx = index_[static_cast<unsigned char>(c)];
    return static_cast<std::uint16_t>(idx < 0 ? 0 : idx);
  }

  /// Label tag then the k characters before doc[pos], padded on the left.
  std::string plain_key(const QuadrantLabel& label, std::string_view doc, std::size_t pos) const {
    std::string k(static_cast<std::size_t>(order_) + 1, kPadChar);
    k[0] = static_cast<char>('0' + label.quadrant);
    for (std::size_t j = 0; j < static_cast<std::size_t>(order_) && j < pos; ++j)
      k[static_cast<std::size_t>(order_) - j] = doc[pos - 1 - j];
    return k;
  }

  /// Plain key with the bar-clock state inserted after the label tag.
  std::string metrical_key(const QuadrantLabel& label, const BarClock& clock, std::string_view doc, std::size_t pos) const {
    std::string k = plain_key(label, doc, pos);
    k.insert(1, clock.state() + kStateEnd);
    return k;
  }

  /// The context used for prediction: the metrical key when the model is metrical
  /// and that context was observed in training, otherwise the plain key.
  std::string key(const QuadrantLabel& label, const BarClock& clock, std::string_view doc, std::size_t pos) const {
    if (metrical_) {
      std::string k = metrical_key(label, clock, doc, pos);
      if (table_.count(k) != 0) return k;
    }
    return plain_key(label, doc, pos);
  }

  /// (context key, target symbol) for every predicted character of the sequence, in order.
  std::vector<std::pair<std::string, std::uint16_t>> contexts(const BarPatchSequence& seq, const QuadrantLabel& label) const {
    std::vector<std::pair<std::string, std::uint16_t>> out;
    const std::string doc = seq.document();
    BarClock clock;
    for (std::size_t pos = seq.prefix.size() + 1; pos < doc.size(); ++pos) {
      out.emplace_back(key(label, clock, doc, pos), symbol(doc[pos]));
      clock.feed(doc[pos]);
    }
    return out;
  }

  /// p(symbol | context key).
  double prob(const std::string& context, std::uint16_t sym) const {
    const double v = static_cast<double>(vocab_.size());
    const auto it = table_.find(context);
    if (it == table_.end() || it->second.total == 0) return 1.0 / v;
    const auto& e = it->second;
    const auto c = std::lower_bound(e.counts.begin(), e.counts.end(), sym,
                                    [](const auto& p, std::uint16_t s) { return p.first < s; });
    const double n = (c != e.counts.end() && c->first == sym) ? c->second : 0.0;
    return (n + alpha_) / (static_cast<double>(e.total) + alpha_ * v);
  }

  /// Full next-symbol distribution for a context key.
  std::vector<double> distribution(const std::string& context) const {
    const double v = static_cast<double>(vocab_.size());
    std::vector<double> out(vocab_.size(), 1.0 / v);
    const auto it = table_.find(context);
    if (it == table_.end() || it->second.total == 0) return out;
    const double denom = static_cast<double>(it->second.total) + alpha_ * v;
    std::fill(out.begin(), out.end(), alpha_ / denom);
    for (const auto& [sym, n] : it->second.counts) out[sym] = (n + alpha_) / denom;
    return out;
  }

  /// Mean negative log-likelihood in nats over every target character of every record.
  double cross_entropy(const std::vector<DatasetRecord>& records) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : records) {
      for (const auto& [ctx, sym] : contexts(tokenize(r), r.label)) {
        sum -= std::log(prob(ctx, sym));
        ++count;
      }
    }
    if (count == 0) throw EmptyCorpus("no target characters to score");
    return sum / static_cast<double>(count);
  }

  GenerationResult generate(const QuadrantLabel& label, const ControlCode& code, std::uint64_t seed,
                            const GenerateOptions& options = {}) const {
    if (!(options.temperature > 0.0)) throw RangeError("temperature must be positive");
    Rng rng(seed);
    const std::string prompt = format_control_code(label, code) + kSepChar;
    std::string doc = prompt;
    BarClock clock;
    const std::uint16_t end_sym = symbol(kEndChar);
    const bool has_end = vocab_[end_sym] == kEndChar;
    GenerationResult result;
    bool ended = false;
    while (doc.size() - prompt.size() < options.max_chars) {
      std::vector<double> w = distribution(key(label, clock, doc, doc.size()));
      w[0] = 0.0;  // never emit the unknown slot
      std::optional<std::uint16_t> pick;
      while (!pick) {
        const auto s = draw(w, options.temperature, rng);
        if (!s) break;
        if (!options.guided || viable(doc.substr(prompt.size()), *s, has_end && *s == end_sym)) pick = s;
        else w[*s] = 0.0;
      }
      if (!pick) {
        result.failure = "no viable continuation";
        break;
      }
      if (has_end && *pick == end_sym) {
        ended = true;
        break;
      }
      doc += vocab_[*pick];
      clock.feed(vocab_[*pick]);
    }
    result.text = doc.substr(prompt.size());
    if (!result.failure.empty()) return result;
    try {
      result.score = parse_abc(result.text);
    } catch (const Error& e) {
      result.failure = std::string(ended ? "" : "truncated at max_chars; ") + e.what();
    }
    return result;
  }

  void save(std::ostream& out) const {
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(order_));
    put<std::uint8_t>(out, metrical_ ? 1 : 0);
    put<double>(out, alpha_);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
    out.write(vocab_.data(), static_cast<std::streamsize>(vocab_.size()));
    std::vector<const std::pair<const std::string, Entry>*> sorted;
    sorted.reserve(table_.size());
    for (const auto& kv : table_) sorted.push_back(&kv);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
    put<std::uint64_t>(out, sorted.size());
    for (const auto* kv : sorted) {
      put<std::uint16_t>(out, static_cast<std::uint16_t>(kv->first.size()));
      out.write(kv->first.data(), static_cast<std::streamsize>(kv->first.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(kv->second.counts.size()));
      for (const auto& [sym, n] : kv->second.counts) {
        put<std::uint16_t>(out, sym);
        put<std::uint32_t>(out, n);
      }
    }
  }

  static CharLm load(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
    if (get<std::uint32_t>(in) != kVersion) throw FormatError("unsupported model file version");
    CharLm m;
    m.order_ = static_cast<int>(get<std::uint32_t>(in));
    m.metrical_ = get<std::uint8_t>(in) != 0;
    m.alpha_ = get<double>(in);
    if (m.order_ < 1 || m.order_ > 64 || !(m.alpha_ > 0.0)) throw FormatError("corrupt model header");
    const auto vsize = get<std::uint32_t>(in);
    if (vsize == 0 || vsize > 256) throw FormatError("corrupt vocabulary size");
    std::string vocab(vsize, '\0');
    if (!in.read(vocab.data(), vsize)) throw FormatError("truncated vocabulary");
    m.set_vocabulary(std::move(vocab));
    const auto contexts = get<std::uint64_t>(in);
    std::string k;
    for (std::uint64_t i = 0; i < contexts; ++i) {
      k.assign(get<std::uint16_t>(in), '\0');
      if (!in.read(k.data(), static_cast<std::streamsize>(k.size()))) throw FormatError("truncated context table");
      Entry e;
      const auto n = get<std::uint32_t>(in);
      if (n > vsize) throw FormatError("corrupt context entry");
      for (std::uint32_t j = 0; j < n; ++j) {
        const auto sym = get<std::uint16_t>(in);
        const auto count = get<std::uint32_t>(in);
        if (sym >= vsize) throw FormatError("symbol out of range");
        e.counts.emplace_back(sym, count);
        e.total += count;
      }
      m.table_.emplace(k, std::move(e));
    }
    m.index_labels();
    return m;
  }

  friend bool operator==(const CharLm& a, const CharLm& b) {
    if (a.order_ != b.order_ || a.metrical_ != b.metrical_ || a.alpha_ != b.alpha_ || a.vocab_ != b.vocab_ || a.table_.size() != b.table_.size()) return false;
    for (const auto& [k, e] : a.table_) {
      const auto it = b.table_.find(k);
      if (it == b.table_.end() || it->second.counts != e.counts) return false;
    }
    return true;
  }

 private:
  static constexpr char kMagic[4] = {'E', 'M', 'L', 'M'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kStateEnd = '\x1e';

  template <class T>
  static void put(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
  }

  template <class T>
  static T get(std::istream& in) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("truncated model file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  void set_vocabulary(std::string vocab) {
    vocab_ = std::move(vocab);
    std::fill(std::begin(index_), std::end(index_), -1);
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[static_cast<unsigned char>(vocab_[i])] = static_cast<int>(i);
  }

  /// Samples an index from weights sharpened by 1/temperature; greedy below kGreedyTemperature.
  static std::optional<std::uint16_t> draw(const std::vector<double>& w, double temperature, Rng& rng) {
    if (temperature < kGreedyTemperature) {
      std::optional<std::uint16_t> best;
      for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0 && (!best || w[i] > w[*best])) best = static_cast<std::uint16_t>(i);
      return best;
    }
    std::vector<double> scaled(w.size(), 0.0);
    double peak = 0.0;
    for (double x : w) peak = std::max(peak, x);
    if (peak <= 0.0) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] > 0.0) scaled[i] = std::pow(w[i] / peak, 1.0 / temperature);
      sum += scaled[i];
    }
    double u = uniform_unit(rng) * sum;
    std::size_t last = 0;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      if (scaled[i] <= 0.0) continue;
      last = i;
      if (u < scaled[i]) return static_cast<std::uint16_t>(i);
      u -= scaled[i];
    }
    return static_cast<std::uint16_t>(last);
  }

  bool viable(const std::string& text, std::uint16_t sym, bool is_end) const {
    if (is_end) {
      try {
        parse_abc(text);
        return true;
      } catch (const Error&) {
        return false;
      }
    }
    return abc_prefix_viable(text + vocab_[sym]);
  }

  int order_ = 6;
  double alpha_ = 0.01;
  bool metrical_ = true;
  std::string vocab_;
  int index_[256] = {};
  std::unordered_map<std::string, Entry> table_;
  std::array<bool, 5> seen_labels_{};

  void index_labels() {
    seen_labels_.fill(false);
    for (const auto& [k, e] : table_)
      if (!k.empty() && k[0] >= '1' && k[0] <= '4') seen_labels_[static_cast<std::size_t>(k[0] - '0')] = true;
  }
};

struct Prompt {
  QuadrantLabel label;
  ControlCode code;
};

/// Control codes of the given records, in order.
inline std::vector<Prompt> prompts_from(const std::vector<DatasetRecord>& records) {
  std::vector<Prompt> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto parsed = parse_control_code(r.control_code);
    out.push_back({parsed.label, parsed.code});
  }
  return out;
}

/// Fraction of samples that parse; sample i uses a seed derived from `seed` and i.
inline double parse_rate(const CharLm& model, const std::vector<Prompt>& prompts, std::size_t samples_per_prompt,
                         std::uint64_t seed, const GenerateOptions& options = {}) {
  if (prompts.empty() || samples_per_prompt == 0) throw RangeError("parse_rate needs at least one prompt and sample");
  std::size_t parsed = 0;
  std::size_t total = 0;
  for (const auto& p : prompts) {
    for (std::size_t s = 0; s < samples_per_prompt; ++s) {
      if (model.generate(p.label, p.code, derive_seed(seed, total), options).ok()) ++parsed;
      ++total;
    }
  }
  return static_cast<double>(parsed) / static_cast<double>(total);
}

}  // namespace emogen

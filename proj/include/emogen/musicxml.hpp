/**
 * @file musicxml.hpp
 * @brief Reader for single-part, single-voice MusicXML documents and .mxl containers.
 *
 * Only partwise scores are read. Supported content: attributes (divisions, key,
 * time), pitched notes and rests with durations, ties, barline styles/repeats and
 * <sound tempo>. Chords, tuplets, grace notes, cue notes, backup/forward and
 * multiple parts raise UnsupportedFeature.
 */
#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <zlib.h>

#include "emogen/score.hpp"
#include "emogen/transform.hpp"

namespace emogen {

namespace xml_detail {

using boost::property_tree::ptree;

inline int to_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SemanticError(std::string("malformed ") + what + " '" + s + "'", 0, 0);
  }
}

inline std::string text_of(const ptree& node) {
  std::string s = node.get_value<std::string>();
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline Mode mode_from_name(const std::string& name) {
  static const std::map<std::string, Mode> kModes{
      {"", Mode::major},         {"major", Mode::major},     {"minor", Mode::minor},     {"ionian", Mode::ionian},
      {"dorian", Mode::dorian},  {"phrygian", Mode::phrygian}, {"lydian", Mode::lydian},
      {"mixolydian", Mode::mixolydian}, {"aeolian", Mode::aeolian}, {"locrian", Mode::locrian}};
  auto it = kModes.find(name);
  if (it == kModes.end()) throw UnsupportedFeature("unsupported key mode '" + name + "'");
  return it->second;
}

// Picks the most frequent power-of-two note value (in whole notes) as the ABC unit length.
inline Rational choose_unit_length(const std::vector<Measure>& measures) {
  std::map<Rational, int> counts;
  for (const auto& m : measures)
    for (const auto& n : m.notes) {
      const Rational whole = n.duration / 4;
      if (whole.numerator() == 1 && (whole.denominator() & (whole.denominator() - 1)) == 0) counts[whole]++;
    }
  Rational best(1, 8);
  int best_count = 0;
  for (const auto& [value, count] : counts)
    if (count > best_count) best = value, best_count = count;  // ascending order: ties keep the shorter value
  return best;
}

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

struct ZipEntry {
  std::string name;
  std::uint16_t method;
  std::uint32_t compressed_size;
  std::uint32_t uncompressed_size;
  std::uint32_t local_offset;
};

inline std::vector<ZipEntry> zip_directory(std::string_view data) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 22) throw FormatError("not a zip archive");
  std::size_t eocd = std::string_view::npos;
  for (std::size_t i = data.size() - 22 + 1; i-- > 0;) {
    if (le32(bytes + i) == 0x06054b50u) {
      eocd = i;
      break;
    }
    if (data.size() - i > 22 + 65535) break;
  }
  if (eocd == std::string_view::npos) throw FormatError("zip end-of-central-directory record not found");
  const std::uint16_t count = le16(bytes + eocd + 10);
  std::size_t pos = le32(bytes + eocd + 16);
  std::vector<ZipEntry> entries;
  for (std::uint16_t k = 0; k < count; ++k) {
    if (pos + 46 > data.size() || le32(bytes + pos) != 0x02014b50u) throw FormatError("corrupt zip central directory");
    ZipEntry e;
    e.method = le16(bytes + pos + 10);
    e.compressed_size = le32(bytes + pos + 20);
    e.uncompressed_size = le32(bytes + pos + 24);
    const std::uint16_t name_len = le16(bytes + pos + 28);
    const std::uint16_t extra_len = le16(bytes + pos + 30);
    const std::uint16_t comment_len = le16(bytes + pos + 32);
    e.local_offset = le32(bytes + pos + 42);
    if (pos + 46 + name_len > data.size()) throw FormatError("corrupt zip central directory");
    e.name.assign(data.data() + pos + 46, name_len);
    entries.push_back(std::move(e));
    pos += 46u + name_len + extra_len + comment_len;
  }
  return entries;
}

inline std::string zip_read(std::string_view data, const ZipEntry& e) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  const std::size_t lh = e.local_offset;
  if (lh + 30 > data.size() || le32(bytes + lh) != 0x04034b50u) throw FormatError("corrupt zip local header");
  const std::size_t start = lh + 30 + le16(bytes + lh + 26) + le16(bytes + lh + 28);
  if (start + e.compressed_size > data.size()) throw FormatError("truncated zip entry " + e.name);
  const std::string_view payload = data.substr(start, e.compressed_size);
  if (e.method == 0) return std::string(payload);
  if (e.method != 8) throw UnsupportedFeature("zip compression method " + std::to_string(e.method));

  std::string out(e.uncompressed_size, '\0');
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw FormatError("inflate initialisation failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(payload.data()));
  zs.avail_in = static_cast<uInt>(payload.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != e.uncompressed_size) throw FormatError("corrupt deflate stream in " + e.name);
  return out;
}

}  // namespace xml_detail

/// Parses a partwise MusicXML document holding exactly one monophonic part.
inline Score parse_musicxml(std::string_view text) {
  using namespace xml_detail;
  ptree doc;
  try {
    std::istringstream in{std::string(text)};
    boost::property_tree::read_xml(in, doc, boost::property_tree::xml_parser::no_comments);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw SyntaxError(std::string("malformed XML: ") + e.message(), e.line(), 0);
  }
  if (doc.get_child_optional("score-timewise")) throw UnsupportedFeature("timewise scores are not supported");
  const auto root_opt = doc.get_child_optional("score-partwise");
  if (!root_opt) throw SyntaxError("missing <score-partwise> root element", 1, 1);
  const ptree& root = *root_opt;

  const ptree* part = nullptr;
  int parts = 0;
  for (const auto& [name, child] : root) {
    if (name == "part") {
      ++parts;
      part = &child;
    }
  }
  if (parts != 1) throw UnsupportedFeature("expected exactly one part, found " + std::to_string(parts));

  Score score;
  if (auto t = root.get_optional<std::string>("movement-title")) score.title = *t;
  else if (auto w = root.get_optional<std::string>("work.work-title")) score.title = *w;

  std::optional<int> divisions;
  bool have_time = false;
  bool have_key = false;

  for (const auto& [mname, measure] : *part) {
    if (mname != "measure") continue;
    Measure out;
    for (const auto& [name, child] : measure) {
      if (name == "attributes") {
        if (auto d = child.get_optional<std::string>("divisions")) {
          divisions = to_int(*d, "divisions");
          if (*divisions <= 0) throw SemanticError("divisions must be positive", 0, 0);
        }
        if (auto key = child.get_child_optional("key")) {
          const int fifths = to_int(key->get<std::string>("fifths", "0"), "key fifths");
          if (fifths < -7 || fifths > 7) throw SemanticError("key fifths out of range", 0, 0);
          const Mode mode = mode_from_name(key->get<std::string>("mode", ""));
          const KeySignature k = key_with_fifths(fifths, mode);
          if (have_key && !score.measures.empty() && !(k == score.key)) throw UnsupportedFeature("key changes are not supported");
          score.key = k;
          have_key = true;
        }
        if (auto time = child.get_child_optional("time")) {
          const Meter m{to_int(time->get<std::string>("beats"), "time beats"),
                        to_int(time->get<std::string>("beat-type"), "time beat-type")};
          if (m.numerator <= 0 || m.denominator <= 0) throw SemanticError("time signature must be positive", 0, 0);
          if (have_time && !score.measures.empty() && !(m == score.meter))
            throw UnsupportedFeature("meter changes are not supported");
          score.meter = m;
          have_time = true;
        }
      } else if (name == "note") {
        if (child.get_child_optional("chord")) throw UnsupportedFeature("chords are not supported");
        if (child.get_child_optional("grace")) throw UnsupportedFeature("grace notes are not supported");
        if (child.get_child_optional("cue")) throw UnsupportedFeature("cue notes are not supported");
        if (child.get_child_optional("time-modification")) throw UnsupportedFeature("tuplets are not supported");
        if (!divisions) throw SemanticError("note before <divisions> was declared", 0, 0);
        const int dur = to_int(child.get<std::string>("duration", "0"), "duration");
        if (dur <= 0) throw SemanticError("note duration must be positive", 0, 0);
        Note note = Note::rest(Rational(dur, *divisions));
        if (auto pitch = child.get_child_optional("pitch")) {
          const std::string step = pitch->get<std::string>("step", "");
          const int letter = step.size() == 1 ? detail::letter_index(step[0]) : -1;
          if (letter < 0) throw SemanticError("malformed pitch step '" + step + "'", 0, 0);
          const int alter = to_int(pitch->get<std::string>("alter", "0"), "alter");
          const int octave = to_int(pitch->get<std::string>("octave"), "octave");
          const int midi = 12 * (octave + 1) + detail::kLetterSemitone[static_cast<std::size_t>(letter)] + alter;
          if (midi < 0 || midi > 127) throw SemanticError("pitch outside MIDI range", 0, 0);
          note.pitch = Pitch{midi};
          for (const auto& [tname, tie] : child)
            if (tname == "tie" && tie.get<std::string>("<xmlattr>.type", "") == "start") note.tie_to_next = true;
        } else if (!child.get_child_optional("rest")) {
          throw UnsupportedFeature("unpitched notes are not supported");
        }
        out.notes.push_back(note);
      } else if (name == "backup" || name == "forward") {
        throw UnsupportedFeature("multiple voices are not supported");
      } else if (name == "barline") {
        const std::string location = child.get<std::string>("<xmlattr>.location", "right");
        const std::string style = child.get<std::string>("bar-style", "");
        const std::string repeat = child.get<std::string>("repeat.<xmlattr>.direction", "");
        if (location == "left") {
          if (repeat == "forward") {
            if (score.measures.empty()) score.opening_repeat = true;
            else {
              auto& prev = score.measures.back().barline;
              prev = prev == Barline::repeat_end ? Barline::repeat_both : Barline::repeat_start;
            }
          }
        } else {
          if (repeat == "backward") out.barline = Barline::repeat_end;
          else if (style == "light-heavy") out.barline = Barline::final_bar;
          else if (style == "light-light") out.barline = Barline::double_bar;
        }
      } else if (name == "sound" || name == "direction") {
        const ptree& sound = name == "sound" ? child : child.get_child("sound", ptree());
        if (auto tempo = sound.get_optional<double>("<xmlattr>.tempo"); tempo && !score.tempo_bpm) {
          if (!(*tempo > 0)) throw SemanticError("tempo must be positive", 0, 0);
          score.tempo_bpm = *tempo;
        }
      }
    }
    if (out.notes.empty()) continue;
    score.measures.push_back(std::move(out));
  }

  if (!divisions) throw SemanticError("missing <divisions>", 0, 0);
  if (!have_time) throw SemanticError("missing <time> signature", 0, 0);
  if (score.measures.empty()) throw SemanticError("score has no measures", 0, 0);
  for (std::size_t i = 0; i < score.measures.size(); ++i)
    if (score.measures[i].duration() > score.meter.measure_length())
      throw SemanticError("measure " + std::to_string(i + 1) + " is longer than the meter", 0, 0);
  score.unit_note_length = choose_unit_length(score.measures);
  return score;
}

/// Extracts the root document of a compressed MusicXML (.mxl) zip container.
inline std::string read_mxl_root(std::string_view archive) {
  using namespace xml_detail;
  const auto entries = zip_directory(archive);
  std::string root_path;
  for (const auto& e : entries) {
    if (e.name == "META-INF/container.xml") {
      ptree container;
      std::istringstream in(zip_read(archive, e));
      try {
        boost::property_tree::read_xml(in, container);
      } catch (const boost::property_tree::xml_parser_error& err) {
        throw FormatError(std::string("malformed container.xml: ") + err.message());
      }
      root_path = container.get<std::string>("container.rootfiles.rootfile.<xmlattr>.full-path", "");
    }
  }
  for (const auto& e : entries) {
    const bool is_xml = e.name.rfind("META-INF/", 0) != 0 &&
                        (e.name.ends_with(".xml") || e.name.ends_with(".musicxml"));
    if ((!root_path.empty() && e.name == root_path) || (root_path.empty() && is_xml)) return zip_read(archive, e);
  }
  throw FormatError("no MusicXML root document in container");
}

inline Score parse_mxl(std::string_view archive) { return parse_musicxml(read_mxl_root(archive)); }

}  // namespace emogen

#include <gtest/gtest.h>

#include <zlib.h>

#include "emogen/abc.hpp"
#include "emogen/musicxml.hpp"

using namespace emogen;

namespace {

std::string note(const char* step, int octave, int duration, int alter = 0, const char* extra = "") {
  return std::string("<note><pitch><step>") + step + "</step>" +
         (alter ? "<alter>" + std::to_string(alter) + "</alter>" : std::string()) + "<octave>" +
         std::to_string(octave) + "</octave></pitch><duration>" + std::to_string(duration) + "</duration>" + extra +
         "</note>";
}

std::string rest(int duration) { return "<note><rest/><duration>" + std::to_string(duration) + "</duration></note>"; }

std::string document(const std::string& measures, const std::string& attributes =
                                                      "<divisions>2</divisions><key><fifths>-1</fifths><mode>minor</mode></key>"
                                                      "<time><beats>3</beats><beat-type>4</beat-type></time>") {
  return "<?xml version=\"1.0\"?>\n<score-partwise version=\"3.1\"><movement-title>Song</movement-title>"
         "<part-list><score-part id=\"P1\"><part-name>V</part-name></score-part></part-list>"
         "<part id=\"P1\"><measure number=\"1\"><attributes>" +
         attributes + "</attributes>" + measures + "</part></score-partwise>";
}

const std::string kBody =
    "<sound tempo=\"72\"/>" + note("D", 4, 2) + note("F", 4, 1) + note("A", 4, 1) + note("B", 4, 2, -1) +
    "<barline location=\"right\"><bar-style>light-light</bar-style></barline></measure>"
    "<measure number=\"2\">" + note("A", 4, 4, 0, "<tie type=\"start\"/>") + rest(2) +
    "<barline location=\"right\"><bar-style>light-heavy</bar-style></barline></measure>";

// Builds a zip archive; each entry is stored or deflated.
std::string zip(const std::vector<std::pair<std::string, std::string>>& files, bool compress) {
  std::string out;
  std::string central;
  const auto u16 = [](std::string& s, unsigned v) {
    s += static_cast<char>(v & 0xff);
    s += static_cast<char>((v >> 8) & 0xff);
  };
  const auto u32 = [&](std::string& s, unsigned long v) {
    u16(s, static_cast<unsigned>(v & 0xffff));
    u16(s, static_cast<unsigned>(v >> 16));
  };
  for (const auto& [name, content] : files) {
    std::string payload = content;
    if (compress) {
      z_stream zs{};
      deflateInit2(&zs, 9, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY);
      payload.assign(deflateBound(&zs, content.size()), '\0');
      zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(content.data()));
      zs.avail_in = static_cast<uInt>(content.size());
      zs.next_out = reinterpret_cast<Bytef*>(payload.data());
      zs.avail_out = static_cast<uInt>(payload.size());
      deflate(&zs, Z_FINISH);
      payload.resize(zs.total_out);
      deflateEnd(&zs);
    }
    const unsigned long crc = crc32(0, reinterpret_cast<const Bytef*>(content.data()), static_cast<uInt>(content.size()));
    const unsigned long offset = out.size();
    const unsigned method = compress ? 8 : 0;
    u32(out, 0x04034b50);
    u16(out, 20), u16(out, 0), u16(out, method), u16(out, 0), u16(out, 0);
    u32(out, crc), u32(out, payload.size()), u32(out, content.size());
    u16(out, static_cast<unsigned>(name.size())), u16(out, 0);
    out += name + payload;
    u32(central, 0x02014b50);
    u16(central, 20), u16(central, 20), u16(central, 0), u16(central, method), u16(central, 0), u16(central, 0);
    u32(central, crc), u32(central, payload.size()), u32(central, content.size());
    u16(central, static_cast<unsigned>(name.size())), u16(central, 0), u16(central, 0), u16(central, 0), u16(central, 0);
    u32(central, 0), u32(central, offset);
    central += name;
  }
  const unsigned long cd_offset = out.size();
  out += central;
  u32(out, 0x06054b50);
  u16(out, 0), u16(out, 0), u16(out, static_cast<unsigned>(files.size())), u16(out, static_cast<unsigned>(files.size()));
  u32(out, central.size()), u32(out, cd_offset), u16(out, 0);
  return out;
}

const char* kContainer =
    "<?xml version=\"1.0\"?><container><rootfiles><rootfile full-path=\"score/song.musicxml\"/></rootfiles></container>";

}  // namespace

TEST(MusicXml, ParsesMonophonicPart) {
  const Score s = parse_musicxml(document(kBody));
  EXPECT_EQ(s.title, "Song");
  EXPECT_EQ(s.key, (KeySignature{'D', 0, Mode::minor}));
  EXPECT_EQ(s.meter, (Meter{3, 4}));
  EXPECT_EQ(s.tempo_bpm, 72.0);
  ASSERT_EQ(s.measures.size(), 2u);
  EXPECT_EQ(s.measures[0].barline, Barline::double_bar);
  EXPECT_EQ(s.measures[1].barline, Barline::final_bar);
  const auto& m0 = s.measures[0].notes;
  EXPECT_EQ(m0[0].pitch->midi(), 62);
  EXPECT_EQ(m0[0].duration, Rational(1));
  EXPECT_EQ(m0[1].duration, Rational(1, 2));
  EXPECT_EQ(m0[3].pitch->midi(), 70);
  EXPECT_TRUE(s.measures[1].notes[0].tie_to_next);
  EXPECT_TRUE(s.measures[1].notes[1].is_rest());
  // Three quarter-length notes against two eighths.
  EXPECT_EQ(s.unit_note_length, Rational(1, 4));
  // The result serializes to ABC that reads back identically.
  EXPECT_EQ(parse_abc(serialize_abc(s)), s);
}

TEST(MusicXml, Repeats) {
  const std::string body =
      "<barline location=\"left\"><repeat direction=\"forward\"/></barline>" + note("C", 5, 6) +
      "<barline location=\"right\"><repeat direction=\"backward\"/></barline></measure><measure number=\"2\">"
      "<barline location=\"left\"><repeat direction=\"forward\"/></barline>" + note("D", 5, 6) + "</measure>";
  const Score s = parse_musicxml(document(body));
  EXPECT_TRUE(s.opening_repeat);
  EXPECT_EQ(s.measures[0].barline, Barline::repeat_both);
}

TEST(MusicXml, Rejections) {
  EXPECT_THROW(parse_musicxml("<score-partwise><part"), SyntaxError);
  EXPECT_THROW(parse_musicxml("<score-timewise/>"), UnsupportedFeature);
  EXPECT_THROW(parse_musicxml("<other/>"), SyntaxError);
  EXPECT_THROW(parse_musicxml(document(note("C", 4, 2, 0, "<chord/>") + "</measure>")), UnsupportedFeature);
  EXPECT_THROW(parse_musicxml(document("<backup><duration>2</duration></backup></measure>")), UnsupportedFeature);
  EXPECT_THROW(parse_musicxml(document(note("C", 4, 8) + "</measure>")), SemanticError);
  EXPECT_THROW(parse_musicxml(document(note("C", 4, 2) + "</measure>", "<divisions>2</divisions>")), SemanticError);
  EXPECT_THROW(parse_musicxml(document(note("H", 4, 2) + "</measure>")), SemanticError);
  const std::string two_parts = "<score-partwise><part id=\"a\"/><part id=\"b\"/></score-partwise>";
  EXPECT_THROW(parse_musicxml(two_parts), UnsupportedFeature);
}

TEST(Mxl, StoredAndDeflatedContainers) {
  const std::string xml = document(kBody);
  const Score direct = parse_musicxml(xml);
  for (bool deflated : {false, true}) {
    const std::string archive = zip({{"META-INF/container.xml", kContainer}, {"score/song.musicxml", xml}}, deflated);
    EXPECT_EQ(parse_mxl(archive), direct);
  }
  // Without a container the first XML entry is used.
  EXPECT_EQ(parse_mxl(zip({{"song.xml", xml}}, true)), direct);
  EXPECT_THROW(parse_mxl("not a zip at all, just some text padding it out"), FormatError);
  EXPECT_THROW(parse_mxl(zip({{"readme.txt", "hi"}}, false)), FormatError);
}

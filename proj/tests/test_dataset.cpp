#include "birdfl/audio.hpp"
#include "birdfl/dataset.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/FFT>

#include <complex>
#include <cstring>
#include <fstream>

namespace birdfl {
namespace {

using testing::TempDir;

const char* kHeader = "clip_id,audio_path,labels,fold,recordist\n";

Manifest make(const std::string& name, int n, const std::string& prefix, const std::string& label) {
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.clip_id = prefix + std::to_string(i);
    e.audio_path = e.clip_id + ".wav";
    e.labels = {label};
    entries.push_back(e);
  }
  return Manifest(name, entries);
}

TEST(Manifest, ParsesLabelsAndVocabulary) {
  const Manifest m = parse_manifest(std::string(kHeader) + "a,a.wav,wren;robin,,\nb,b.wav,wren,,\n", "/data", "m");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.vocabulary().names(), (std::vector<std::string>{"robin", "wren"}));
  EXPECT_EQ(m.at(0).labels, (std::set<std::string>{"robin", "wren"}));
  EXPECT_EQ(m.at(0).audio_path, std::filesystem::path("/data/a.wav"));
  EXPECT_FALSE(m.is_single_label());
}

TEST(Manifest, HeaderOnlyIsEmpty) {
  EXPECT_TRUE(parse_manifest(kHeader, ".", "m").empty());
}

TEST(Manifest, FoldColumnGivesPartition) {
  const Manifest m = parse_manifest(std::string(kHeader) + "a,a.wav,x,0,\nb,b.wav,y,1,\n", ".", "m");
  EXPECT_EQ(m.folds(), (std::vector<int>{0, 1}));
  EXPECT_EQ(*m.at(1).fold, 1);
}

TEST(Manifest, MalformedRowReportsLine) {
  try {
    parse_manifest(std::string(kHeader) + "a,a.wav,x,0,\nb,b.wav,y\n", ".", "m");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_manifest(std::string(kHeader) + "a,a.wav,x,-1,\n", ".", "m"), ParseError);
  EXPECT_THROW(parse_manifest("id,path\n", ".", "m"), ParseError);
}

TEST(Manifest, DuplicateClipIdIsIntegrityError) {
  EXPECT_THROW(parse_manifest(std::string(kHeader) + "a,a.wav,x,,\na,b.wav,y,,\n", ".", "m"), IntegrityError);
}

TEST(Manifest, QuotedFieldsAndEmptyLabels) {
  const Manifest m = parse_manifest(std::string(kHeader) + "\"a,1\",\"x y.wav\",\"Turdus merula\",,\nb,b.wav,,,\n", ".", "m");
  EXPECT_EQ(m.at(0).clip_id, "a,1");
  EXPECT_TRUE(m.at(0).labels.count("Turdus merula"));
  EXPECT_TRUE(m.at(1).labels.empty());
}

TEST(Manifest, SaveLoadRoundTripKeepsVocabularyOrder) {
  TempDir dir("manifest");
  const Manifest m = parse_manifest(std::string(kHeader) + "a,a.wav,wren;robin,0,r1\nb,b.wav,zeta,1,r2\n", dir.path(), "m");
  save_manifest(m, dir / "m.csv");
  const Manifest back = load_manifest(dir / "m.csv");
  EXPECT_EQ(back.vocabulary(), m.vocabulary());
  EXPECT_EQ(back.at(0).audio_path, m.at(0).audio_path);
  EXPECT_EQ(*back.at(1).recordist, "r2");
}

TEST(Union, CountsAddUp) {
  const Manifest a = make("a", 60, "x", "Turdus merula");
  const Manifest b = make("b", 264, "y", "Turdus merula");
  const Manifest u = union_manifests(a, b);
  EXPECT_EQ(u.size(), 324u);
  EXPECT_EQ(u.vocabulary().size(), 1u);
}

TEST(Union, EmptyIsIdentity) {
  const Manifest a = make("a", 5, "x", "l");
  const Manifest u = union_manifests(a, Manifest("e", {}));
  ASSERT_EQ(u.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(u.at(i).clip_id, a.at(i).clip_id);
}

TEST(Union, CollidingIdsArePrefixed) {
  const Manifest a = make("a", 3, "c", "p");
  const Manifest b = make("b", 3, "c", "q");
  const Manifest u = union_manifests(a, b);
  EXPECT_EQ(u.size(), 6u);
  EXPECT_NE(u.find("b:c0"), nullptr);
  EXPECT_EQ(u.vocabulary().names(), (std::vector<std::string>{"p", "q"}));
}

TEST(Union, AssociativeUpToOrder) {
  const Manifest a = make("a", 3, "a", "p"), b = make("b", 2, "b", "q"), c = make("c", 4, "c", "r");
  const Manifest l = union_manifests(union_manifests(a, b), c);
  const Manifest r = union_manifests(a, union_manifests(b, c));
  std::set<std::string> li, ri;
  for (const auto& e : l.entries()) li.insert(e.clip_id);
  for (const auto& e : r.entries()) ri.insert(e.clip_id);
  EXPECT_EQ(li, ri);
  EXPECT_EQ(l.vocabulary(), r.vocabulary());
}

Manifest with_recordists(int per, int recordists) {
  std::vector<ManifestEntry> entries;
  for (int r = 0; r < recordists; ++r) {
    for (int i = 0; i < per; ++i) {
      ManifestEntry e;
      e.clip_id = "r" + std::to_string(r) + "_" + std::to_string(i);
      e.audio_path = e.clip_id + ".wav";
      e.labels = {"x"};
      e.recordist = "rec" + std::to_string(r);
      entries.push_back(e);
    }
  }
  return Manifest("m", entries);
}

TEST(Folds, StratifiedByRecordistIsLeaveOneOut) {
  const Manifest m = assign_folds(with_recordists(20, 3), FoldScheme::by_recordist(3));
  std::map<int, int> sizes;
  std::map<std::string, std::set<int>> folds_of;
  for (const auto& e : m.entries()) {
    ++sizes[*e.fold];
    folds_of[*e.recordist].insert(*e.fold);
  }
  EXPECT_EQ(sizes, (std::map<int, int>{{0, 20}, {1, 20}, {2, 20}}));
  std::set<int> seen;
  for (const auto& [rec, folds] : folds_of) {
    ASSERT_EQ(folds.size(), 1u) << rec;
    seen.insert(*folds.begin());
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Folds, RandomIsDeterministicPartition) {
  const Manifest m = make("m", 10, "c", "x");
  const Manifest a = assign_folds(m, FoldScheme::random(2, 1));
  const Manifest b = assign_folds(m, FoldScheme::random(2, 1));
  int zeros = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(a.at(i).fold, b.at(i).fold);
    ASSERT_TRUE(a.at(i).fold);
    EXPECT_TRUE(*a.at(i).fold == 0 || *a.at(i).fold == 1);
    zeros += *a.at(i).fold == 0;
  }
  EXPECT_EQ(zeros, 5);
}

TEST(Folds, MissingFieldsAreConfigErrors) {
  EXPECT_THROW(assign_folds(make("m", 3, "c", "x"), FoldScheme::by_column()), ConfigError);
  EXPECT_THROW(assign_folds(make("m", 3, "c", "x"), FoldScheme::by_recordist(2)), ConfigError);
}

double peak_hz(const std::vector<double>& x, int rate) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  std::size_t best = 1;
  for (std::size_t k = 1; k < x.size() / 2; ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  return static_cast<double>(best) * rate / static_cast<double>(x.size());
}

TEST(Decode, ResamplesTo44100KeepingPitch) {
  TempDir dir("decode");
  write_wav(dir / "s.wav", testing::sine(440.0, 1.0, 22050), 22050);
  const AudioClip clip = decode_audio(dir / "s.wav");
  EXPECT_EQ(clip.sample_rate, 44100);
  EXPECT_EQ(clip.samples.size(), 44100u);
  EXPECT_NEAR(peak_hz(clip.samples, 44100), 440.0, 1.0);
  EXPECT_EQ(clip.clip_id, "s");
}

TEST(Decode, NativeRateIsUnchanged) {
  TempDir dir("decode");
  const auto x = testing::sine(1000.0, 0.5, 44100);
  write_wav(dir / "n.wav", x, 44100);
  const AudioClip clip = decode_audio(dir / "n.wav");
  ASSERT_EQ(clip.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(clip.samples[i], x[i], 1.0 / 32767);
}

void put16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }
void put32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }

// Hand-built stereo 16-bit PCM WAV.
void write_stereo(const std::filesystem::path& path, const std::vector<double>& l,
                  const std::vector<double>& r, int rate) {
  std::string data;
  for (std::size_t i = 0; i < l.size(); ++i) {
    put16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(l[i] * 32767))));
    put16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(r[i] * 32767))));
  }
  std::string out = "RIFF";
  put32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 2);
  put32(out, static_cast<std::uint32_t>(rate));
  put32(out, static_cast<std::uint32_t>(rate * 4));
  put16(out, 4);
  put16(out, 16);
  out += "data";
  put32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  std::ofstream(path, std::ios::binary) << out;
}

TEST(Decode, IdenticalStereoChannelsMatchMono) {
  TempDir dir("decode");
  const auto x = testing::sine(700.0, 0.25, 22050);
  write_stereo(dir / "st.wav", x, x, 22050);
  write_wav(dir / "mo.wav", x, 22050);
  const AudioClip s = decode_audio(dir / "st.wav");
  const AudioClip m = decode_audio(dir / "mo.wav");
  ASSERT_EQ(s.samples.size(), m.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) EXPECT_DOUBLE_EQ(s.samples[i], m.samples[i]);
}

TEST(Decode, CorruptFileCarriesPath) {
  TempDir dir("decode");
  std::ofstream(dir / "bad.wav", std::ios::binary) << "RIFFxxxxWAVEjunk";
  try {
    decode_audio(dir / "bad.wav");
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.wav"), std::string::npos);
  }
  EXPECT_THROW(decode_audio(dir / "missing.wav"), DecodeError);
}

}  // namespace
}  // namespace birdfl

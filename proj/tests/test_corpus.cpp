#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "capsid/audio.hpp"
#include "capsid/corpus.hpp"
#include "capsid/errors.hpp"
#include "capsid/wav.hpp"

using namespace capsid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() /
                 ("capsid_corpus_test_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void append_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::string wav_bytes(std::uint16_t format, std::uint16_t channels,
                      std::uint32_t rate, std::uint16_t bits,
                      const std::string& payload) {
  std::string fmt;
  append_u16(fmt, format);
  append_u16(fmt, channels);
  append_u32(fmt, rate);
  append_u32(fmt, rate * channels * (bits / 8));
  append_u16(fmt, static_cast<std::uint16_t>(channels * (bits / 8)));
  append_u16(fmt, bits);

  std::string out = "RIFF";
  append_u32(out, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 +
                                             payload.size()));
  out += "WAVE";
  out += "fmt ";
  append_u32(out, static_cast<std::uint32_t>(fmt.size()));
  out += fmt;
  out += "data";
  append_u32(out, static_cast<std::uint32_t>(payload.size()));
  out += payload;
  return out;
}

std::string pcm16_payload(const std::vector<std::int16_t>& samples) {
  std::string payload;
  for (std::int16_t s : samples) {
    append_u16(payload, static_cast<std::uint16_t>(s));
  }
  return payload;
}

std::string float32_payload(const std::vector<float>& samples) {
  std::string payload;
  for (float s : samples) {
    std::uint32_t bits;
    std::memcpy(&bits, &s, 4);
    append_u32(payload, bits);
  }
  return payload;
}

fs::path write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  return path;
}

CorpusManifest grid_manifest(std::size_t n_speakers, std::size_t n_utts,
                             std::size_t n_reps,
                             const std::vector<Emotion>& emotions) {
  CorpusManifest m;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    for (std::size_t u = 0; u < n_utts; ++u) {
      for (std::size_t r = 1; r <= n_reps; ++r) {
        for (Emotion e : emotions) {
          ManifestEntry entry;
          entry.path = "clip.wav";
          entry.speaker_id = "spk" + std::to_string(s);
          entry.emotion = e;
          entry.utterance_id = "utt" + std::to_string(u);
          entry.repetition = static_cast<std::uint32_t>(r);
          m.entries.push_back(entry);
        }
      }
    }
  }
  return m;
}

const std::vector<Emotion> kSix = {Emotion::kNeutral, Emotion::kHappy,
                                   Emotion::kSad,     Emotion::kAngry,
                                   Emotion::kFear,    Emotion::kDisgust};

}  // namespace

TEST_CASE("emotion names round trip") {
  for (int i = 0; i < 12; ++i) {
    Emotion e = static_cast<Emotion>(i);
    CHECK(emotion_from_name(emotion_name(e)) == e);
  }
  CHECK(std::string(emotion_name(Emotion::kNeutral)) == "neutral");
  CHECK(std::string(emotion_name(Emotion::kFear)) == "fear");
  CHECK_THROWS_AS(emotion_from_name("rage"), ParseError);
}

TEST_CASE("wav loader reads 16-bit PCM with 1/32768 scaling") {
  fs::path dir = temp_dir();
  fs::path p = write_file(dir / "one.wav",
                          wav_bytes(1, 1, 16000, 16, pcm16_payload({16384})));
  AudioClip clip = load_wav(p.string());
  CHECK(clip.samples.size() == 1);
  CHECK(clip.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(clip.sample_rate_hz == 16000);

  fs::path zeros = write_file(
      dir / "zeros.wav",
      wav_bytes(1, 1, 8000, 16, pcm16_payload(std::vector<std::int16_t>(100, 0))));
  AudioClip zc = load_wav(zeros.string());
  CHECK(zc.samples.size() == 100);
  CHECK(zc.sample_rate_hz == 8000);
  for (double s : zc.samples) CHECK(s == 0.0);
}

TEST_CASE("wav loader averages stereo and accepts float32") {
  fs::path dir = temp_dir();
  fs::path stereo = write_file(
      dir / "st.wav",
      wav_bytes(1, 2, 48000, 16, pcm16_payload({16384, -16384, 8192, 8192})));
  AudioClip sc = load_wav(stereo.string());
  CHECK(sc.samples.size() == 2);
  CHECK(sc.samples[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sc.samples[1] == doctest::Approx(0.25).epsilon(1e-12));

  fs::path f32 = write_file(
      dir / "f32.wav",
      wav_bytes(3, 1, 16000, 32, float32_payload({0.5f, -1.5f, 0.25f})));
  AudioClip fc = load_wav(f32.string());
  CHECK(fc.samples.size() == 3);
  CHECK(fc.samples[0] == doctest::Approx(0.5));
  CHECK(fc.samples[1] == doctest::Approx(-1.0));  // clamped
  CHECK(fc.samples[2] == doctest::Approx(0.25));
}

TEST_CASE("wav loader rejects malformed containers by chunk name") {
  fs::path dir = temp_dir();
  std::string good = wav_bytes(1, 1, 16000, 16, pcm16_payload({1, 2, 3}));

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(
      load_wav(write_file(dir / "a.wav", bad_magic).string()),
      doctest::Contains("missing RIFF chunk"), ParseError);

  std::string bad_form = good;
  bad_form[8] = 'X';
  CHECK_THROWS_WITH_AS(
      load_wav(write_file(dir / "b.wav", bad_form).string()),
      doctest::Contains("not WAVE"), ParseError);

  std::string truncated = good.substr(0, good.size() - 2);
  CHECK_THROWS_WITH_AS(
      load_wav(write_file(dir / "c.wav", truncated).string()),
      doctest::Contains("truncated 'data' chunk"), ParseError);

  CHECK_THROWS_AS(
      load_wav(write_file(dir / "d.wav",
                          wav_bytes(5, 1, 16000, 16, pcm16_payload({1})))
                   .string()),
      UnsupportedFormatError);
  CHECK_THROWS_AS(
      load_wav(write_file(dir / "e.wav",
                          wav_bytes(1, 3, 16000, 16, pcm16_payload({1, 1, 1})))
                   .string()),
      UnsupportedFormatError);
  CHECK_THROWS_AS(load_wav((dir / "missing.wav").string()), IoError);

  std::string no_data = good.substr(0, 36);
  no_data[4] = 28;  // shrink RIFF size to the fmt-only payload
  CHECK_THROWS_WITH_AS(
      load_wav(write_file(dir / "f.wav", no_data).string()),
      doctest::Contains("missing 'data' chunk"), ParseError);
}

TEST_CASE("wav save and load round trip") {
  fs::path dir = temp_dir();
  AudioClip clip;
  clip.sample_rate_hz = 16000;
  clip.samples = {0.0, 0.25, -0.25, 0.999, -0.999, 1.0, -1.0};
  fs::path p = dir / "rt.wav";
  save_wav(p.string(), clip);
  AudioClip back = load_wav(p.string());
  REQUIRE(back.samples.size() == clip.samples.size());
  CHECK(back.sample_rate_hz == 16000);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 16384.0);
  }

  AudioClip empty;
  empty.sample_rate_hz = 16000;
  CHECK_THROWS_AS(save_wav((dir / "bad.wav").string(), empty), ContractError);
}

TEST_CASE("corpus filename decoding") {
  RavdessName a = parse_ravdess_name("03-01-01-01-01-01-01.wav");
  CHECK(a.speaker_id == "01");
  CHECK(a.emotion == Emotion::kNeutral);
  CHECK(a.utterance_id == "01");
  CHECK(a.repetition == 1);
  CHECK_FALSE(a.skip);
  CHECK_FALSE(a.song);

  RavdessName b = parse_ravdess_name("03-01-05-01-02-01-07.wav");
  CHECK(b.speaker_id == "07");
  CHECK(b.emotion == Emotion::kAngry);
  CHECK(b.utterance_id == "02");
  CHECK(b.repetition == 1);
  CHECK_FALSE(b.skip);

  RavdessName calm = parse_ravdess_name("03-01-02-01-01-01-01.wav");
  CHECK(calm.skip);
  CHECK(calm.emotion == Emotion::kCalm);
  RavdessName surprise = parse_ravdess_name("03-01-08-02-02-02-24.wav");
  CHECK(surprise.skip);
  CHECK(surprise.emotion == Emotion::kSurprise);

  RavdessName song = parse_ravdess_name("03-02-03-01-01-01-05.wav");
  CHECK(song.song);
  CHECK_FALSE(song.skip);
  RavdessName video = parse_ravdess_name("01-01-03-01-01-01-05.wav");
  CHECK(video.skip);

  // Strong-intensity takes land after the two normal-intensity ones.
  RavdessName strong = parse_ravdess_name("03-01-05-02-01-02-16.wav");
  CHECK(strong.repetition == 4);

  CHECK_THROWS_AS(parse_ravdess_name("03-01-01-01-01-01.wav"), ParseError);
  CHECK_THROWS_AS(parse_ravdess_name("03-01-01-01-01-01-01-01.wav"),
                  ParseError);
  CHECK_THROWS_AS(parse_ravdess_name("3-01-01-01-01-01-01.wav"), ParseError);
  CHECK_THROWS_AS(parse_ravdess_name("03-01-xx-01-01-01-01.wav"), ParseError);
  CHECK_THROWS_AS(parse_ravdess_name("03-01-09-01-01-01-01.wav"), ParseError);
}

TEST_CASE("directory scan keeps speech, skips calm and song by default") {
  fs::path dir = temp_dir();
  fs::create_directories(dir / "Actor_01");
  fs::create_directories(dir / "Actor_02");
  auto touch = [&](const std::string& rel) {
    write_file(dir / rel, "stub");
  };
  touch("Actor_01/03-01-01-01-01-01-01.wav");
  touch("Actor_01/03-01-03-01-02-01-01.wav");
  touch("Actor_01/03-01-02-01-01-01-01.wav");  // calm -> skipped
  touch("Actor_02/03-01-04-02-01-02-02.wav");
  touch("Actor_02/03-02-03-01-01-01-02.wav");  // song
  touch("Actor_02/readme.wav.txt");
  touch("Actor_02/notes.wav");  // not in the naming scheme

  CorpusManifest speech = scan_ravdess_directory(dir.string());
  CHECK(speech.kind == CorpusKind::kRavdess);
  REQUIRE(speech.entries.size() == 3);
  CHECK(speech.entries[0].speaker_id == "01");
  CHECK(speech.entries[0].emotion == Emotion::kNeutral);
  CHECK(speech.entries[2].speaker_id == "02");
  CHECK(speech.entries[2].emotion == Emotion::kSad);
  CHECK(speech.entries[2].repetition == 4);  // intensity 02, take 02

  CorpusManifest with_song = scan_ravdess_directory(dir.string(), true);
  CHECK(with_song.entries.size() == 4);
  bool found_song = false;
  for (const auto& e : with_song.entries) {
    if (e.repetition > 4) {
      found_song = true;
      CHECK(e.emotion == Emotion::kHappy);
      CHECK(e.repetition == 5);
    }
  }
  CHECK(found_song);
  with_song.validate();

  CHECK_THROWS_AS(scan_ravdess_directory((dir / "nope").string()), IoError);
}

TEST_CASE("manifest csv round trip resolves relative paths") {
  fs::path dir = temp_dir();
  CorpusManifest m = grid_manifest(2, 2, 1, kSix);
  fs::path p = dir / "manifest.csv";
  save_manifest_csv(p.string(), m);

  CorpusManifest back = load_manifest_csv(p.string());
  REQUIRE(back.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].path == (dir / "clip.wav").string());
    CHECK(back.entries[i].speaker_id == m.entries[i].speaker_id);
    CHECK(back.entries[i].emotion == m.entries[i].emotion);
    CHECK(back.entries[i].utterance_id == m.entries[i].utterance_id);
    CHECK(back.entries[i].repetition == m.entries[i].repetition);
  }

  write_file(dir / "bad_header.csv", "file,who\n");
  CHECK_THROWS_AS(load_manifest_csv((dir / "bad_header.csv").string()),
                  ParseError);
  write_file(dir / "bad_fields.csv",
             "path,speaker,emotion,utterance,repetition\na.wav,s1,neutral\n");
  CHECK_THROWS_AS(load_manifest_csv((dir / "bad_fields.csv").string()),
                  ParseError);
  write_file(dir / "bad_emotion.csv",
             "path,speaker,emotion,utterance,repetition\na.wav,s1,zeal,u1,1\n");
  CHECK_THROWS_AS(load_manifest_csv((dir / "bad_emotion.csv").string()),
                  ParseError);
  write_file(dir / "bad_rep.csv",
             "path,speaker,emotion,utterance,repetition\na.wav,s1,sad,u1,-2\n");
  CHECK_THROWS_AS(load_manifest_csv((dir / "bad_rep.csv").string()),
                  ParseError);
  CHECK_THROWS_AS(load_manifest_csv((dir / "absent.csv").string()), IoError);
}

TEST_CASE("manifest validation catches duplicates and tiny corpora") {
  CorpusManifest m = grid_manifest(2, 2, 1, kSix);
  m.validate();

  CorpusManifest dup = m;
  dup.entries.push_back(dup.entries[0]);
  CHECK_THROWS_AS(dup.validate(), DataError);

  CorpusManifest one_speaker = grid_manifest(1, 4, 2, kSix);
  CHECK_THROWS_AS(one_speaker.validate(), DataError);
  CorpusManifest one_utt = grid_manifest(4, 1, 2, kSix);
  CHECK_THROWS_AS(one_utt.validate(), DataError);
}

TEST_CASE("four-utterance split matches the published corpus shape") {
  CorpusManifest m = grid_manifest(50, 8, 9, kSix);
  m.validate();
  SplitPlan plan = make_split_plan(m, SplitProtocol::kEsdStyle, 1234, 0);
  CHECK(plan.train_items.size() == 1800);
  CHECK(plan.test_items.size() == 10800);

  std::set<std::string> train_utts, test_utts;
  for (std::size_t i : plan.train_items) {
    CHECK(m.entries[i].emotion == Emotion::kNeutral);
    train_utts.insert(m.entries[i].utterance_id);
  }
  for (std::size_t i : plan.test_items) {
    test_utts.insert(m.entries[i].utterance_id);
  }
  CHECK(train_utts.size() == 4);
  CHECK(test_utts.size() == 4);
  for (const auto& u : train_utts) CHECK(test_utts.count(u) == 0);

  std::set<std::size_t> train_set(plan.train_items.begin(),
                                  plan.train_items.end());
  for (std::size_t i : plan.test_items) CHECK(train_set.count(i) == 0);

  SplitPlan again = make_split_plan(m, SplitProtocol::kEsdStyle, 1234, 0);
  CHECK(again.train_items == plan.train_items);
  CHECK(again.test_items == plan.test_items);

  bool any_differs = false;
  for (std::uint64_t s = 0; s < 8 && !any_differs; ++s) {
    SplitPlan other = make_split_plan(m, SplitProtocol::kEsdStyle, 5000 + s);
    any_differs = other.train_items != plan.train_items;
  }
  CHECK(any_differs);

  CorpusManifest tiny = grid_manifest(3, 4, 2, kSix);
  CHECK_THROWS_AS(make_split_plan(tiny, SplitProtocol::kEsdStyle, 1),
                  ConfigError);
}

TEST_CASE("two-statement split trains on the first statement by default") {
  CorpusManifest m = grid_manifest(24, 2, 4, kSix);
  SplitPlan plan = make_split_plan(m, SplitProtocol::kRavdessStyle, 99, 0);
  for (std::size_t i : plan.train_items) {
    CHECK(m.entries[i].utterance_id == "utt0");
    CHECK(m.entries[i].emotion == Emotion::kNeutral);
  }
  for (std::size_t i : plan.test_items) {
    CHECK(m.entries[i].utterance_id == "utt1");
  }
  CHECK(plan.train_items.size() == 24 * 4);
  CHECK(plan.test_items.size() == 24 * 4 * 6);

  SplitPlan swapped =
      make_split_plan(m, SplitProtocol::kRavdessStyle, 99, 0, true);
  for (std::size_t i : swapped.train_items) {
    CHECK(m.entries[i].utterance_id == "utt1");
  }

  CorpusManifest three = grid_manifest(4, 3, 2, kSix);
  CHECK_THROWS_AS(make_split_plan(three, SplitProtocol::kRavdessStyle, 1),
                  ConfigError);
}

TEST_CASE("word-list split holds out 15 training words") {
  CorpusManifest m = grid_manifest(9, 35, 2, kSix);
  SplitPlan plan = make_split_plan(m, SplitProtocol::kSusasStyle, 7, 2);
  CHECK(plan.trial_index == 2);

  std::set<std::string> train_utts, test_utts;
  for (std::size_t i : plan.train_items) {
    CHECK(m.entries[i].emotion == Emotion::kNeutral);
    train_utts.insert(m.entries[i].utterance_id);
  }
  for (std::size_t i : plan.test_items) {
    test_utts.insert(m.entries[i].utterance_id);
  }
  CHECK(train_utts.size() == 15);
  CHECK(test_utts.size() == 20);
  std::set<std::string> unioned = train_utts;
  unioned.insert(test_utts.begin(), test_utts.end());
  CHECK(unioned.size() == 35);

  CorpusManifest small = grid_manifest(9, 15, 2, kSix);
  CHECK_THROWS_AS(make_split_plan(small, SplitProtocol::kSusasStyle, 7),
                  ConfigError);
}

TEST_CASE("split plans survive a json round trip") {
  fs::path dir = temp_dir();
  CorpusManifest m = grid_manifest(5, 8, 3, kSix);
  SplitPlan plan = make_split_plan(m, SplitProtocol::kEsdStyle, 42, 3);
  fs::path p = dir / "plan.json";
  save_split_plan(p.string(), plan);

  SplitPlan back = load_split_plan(p.string());
  CHECK(back.trial_index == 3);
  CHECK(back.seed == 42);
  CHECK(back.protocol == SplitProtocol::kEsdStyle);
  CHECK(back.train_items == plan.train_items);
  CHECK(back.test_items == plan.test_items);

  write_file(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_split_plan((dir / "broken.json").string()), ParseError);
  write_file(dir / "partial.json", "{\"trial\": 1}");
  CHECK_THROWS_AS(load_split_plan((dir / "partial.json").string()),
                  ParseError);
  CHECK_THROWS_AS(load_split_plan((dir / "absent.json").string()), IoError);
}

TEST_CASE("synthetic corpus has the advertised shape and stays in range") {
  SyntheticCorpus c = generate_synthetic_corpus(8, 8, 9, 7);
  CHECK(c.manifest.kind == CorpusKind::kSynthetic);
  CHECK(c.manifest.entries.size() == 8 * 8 * 9 * 6);
  CHECK(c.clips.size() == c.manifest.entries.size());
  c.manifest.validate();
  CHECK(c.manifest.speakers().size() == 8);
  CHECK(c.manifest.utterances().size() == 8);

  std::set<std::string> emotions_seen;
  for (std::size_t i = 0; i < c.clips.size(); i += 97) {
    const AudioClip& clip = c.clips[i];
    CHECK(clip.sample_rate_hz == 16000);
    CHECK(clip.samples.size() >= 16000);      // at least 1 s
    CHECK(clip.samples.size() <= 3 * 16000);  // at most 3 s
    double peak = 0.0;
    for (double s : clip.samples) {
      CHECK(std::isfinite(s));
      peak = std::max(peak, std::abs(s));
    }
    CHECK(peak <= 1.0);
    CHECK(peak > 0.05);
    CHECK(clip.speaker_id == c.manifest.entries[i].speaker_id);
    CHECK(clip.utterance_id == c.manifest.entries[i].utterance_id);
    CHECK(clip.emotion == c.manifest.entries[i].emotion);
  }
  for (const auto& e : c.manifest.entries) {
    emotions_seen.insert(emotion_name(e.emotion));
  }
  CHECK(emotions_seen.size() == 6);
}

TEST_CASE("synthetic corpus is bit-identical across calls") {
  SyntheticCorpus a = generate_synthetic_corpus(3, 3, 2, 11);
  SyntheticCorpus b = generate_synthetic_corpus(3, 3, 2, 11);
  REQUIRE(a.clips.size() == b.clips.size());
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    REQUIRE(a.clips[i].samples.size() == b.clips[i].samples.size());
    CHECK(std::memcmp(a.clips[i].samples.data(), b.clips[i].samples.data(),
                      a.clips[i].samples.size() * sizeof(double)) == 0);
  }

  SyntheticCorpus other = generate_synthetic_corpus(3, 3, 2, 12);
  bool any_differs = false;
  for (std::size_t i = 0; i < a.clips.size() && !any_differs; ++i) {
    any_differs =
        other.clips[i].samples.size() != a.clips[i].samples.size() ||
        std::memcmp(a.clips[i].samples.data(), other.clips[i].samples.data(),
                    a.clips[i].samples.size() * sizeof(double)) != 0;
  }
  CHECK(any_differs);

  CHECK_THROWS_AS(generate_synthetic_corpus(1, 4, 2, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic_corpus(4, 1, 2, 1), ConfigError);
}

TEST_CASE("synthetic splits feed the training protocol") {
  SyntheticCorpus c = generate_synthetic_corpus(4, 8, 3, 21);
  SplitPlan plan = make_split_plan(c.manifest, SplitProtocol::kEsdStyle, 21);
  CHECK(plan.train_items.size() == 4 * 4 * 3);
  CHECK(plan.test_items.size() == 4 * 4 * 3 * 6);
  for (std::size_t i : plan.train_items) {
    CHECK(c.manifest.entries[i].emotion == Emotion::kNeutral);
  }
}

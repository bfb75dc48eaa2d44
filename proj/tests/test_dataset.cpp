#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "roomsonde/dataset.hpp"
#include "roomsonde/errors.hpp"
#include "roomsonde/synth.hpp"
#include "roomsonde/wav.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;
namespace fs = std::filesystem;

namespace {

// tiny source pools shared by the generation tests
struct Pools {
  testutil::TempDir tmp{"dataset"};
  std::vector<std::string> rirs, speech;

  Pools() {
    for (int i = 0; i < 6; ++i) {
      const std::string p = tmp / ("rir" + std::to_string(i) + ".wav");
      save_wav(p, make_noisy_exp_rir(16000, 0.2 + 0.15 * i, 0.6, uint64_t(40 + i), 3.0));
      rirs.push_back(p);
    }
    for (int i = 0; i < 5; ++i) {
      const std::string p = tmp / ("sp" + std::to_string(i) + ".wav");
      save_wav(p, make_speechlike(16000, 6.0, uint64_t(80 + i)));
      speech.push_back(p);
    }
  }

  GenOptions opts(int count) const {
    GenOptions o;
    o.count = count;
    o.seed = 77;
    o.chunk_seconds = 2.0;
    o.reverb_free_fraction = 0.2;
    o.noise_free_fraction = 0.2;
    return o;
  }
};

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("make_splits partitions deterministically") {
  const auto s1 = make_splits(10, 0.8, 5);
  const auto s2 = make_splits(10, 0.8, 5);
  CHECK(s1.first == s2.first);
  CHECK(s1.second == s2.second);
  CHECK(s1.first.size() == 8);
  CHECK(s1.second.size() == 2);
  std::set<int> all(s1.first.begin(), s1.first.end());
  all.insert(s1.second.begin(), s1.second.end());
  CHECK(all.size() == 10);
  CHECK_THROWS_AS(make_splits(1, 0.8, 5), Error);
}

TEST_CASE("make_splits keeps both sides non-empty at extreme fractions") {
  const auto lo = make_splits(5, 0.0, 1);
  const auto hi = make_splits(5, 1.0, 1);
  CHECK(lo.first.size() == 1);
  CHECK(hi.second.size() == 1);
}

TEST_CASE("chunk_speech arithmetic") {
  Signal s;
  s.sample_rate = 16000;
  s.samples.assign(16000 * 5, 0.1);
  CHECK(chunk_speech(s, 2.0).size() == 2);  // 5 s -> two full 2 s chunks
  CHECK(chunk_speech(s, 2.0)[1].samples.size() == 32000);
  CHECK(chunk_speech(s, 5.0).size() == 1);
  CHECK_THROWS_AS(chunk_speech(s, 6.0), Error);
}

TEST_CASE("manifest round trip") {
  testutil::TempDir tmp("manifest");
  DatasetManifest m;
  m.seed = 123;
  m.sample_rate = 16000;
  m.chunk_seconds = 2.0;
  ExampleRecipe r;
  r.id = "ex000000";
  r.split = "train";
  r.speech_path = "/audio/sp.wav";
  r.rir_path = "";
  r.noise.kind = NoiseKind::Pink;
  r.noise.seed = 9;
  r.snr_db = 3.0;
  r.chunk_index = 2;
  r.seed = 55;
  m.examples.push_back(r);
  m.has_stats = true;
  m.label_mean = {0.5, 1.0, 2.0, 3.0, 0.7, 10.0};
  m.label_std = {0.1, 0.2, 0.3, 0.4, 0.05, 5.0};

  save_manifest(tmp / "m.json", m);
  const DatasetManifest ld = load_manifest(tmp / "m.json");
  CHECK(ld.seed == 123);
  CHECK(ld.chunk_seconds == 2.0);
  REQUIRE(ld.examples.size() == 1);
  CHECK(ld.examples[0].id == "ex000000");
  CHECK(ld.examples[0].rir_path.empty());
  CHECK(ld.examples[0].noise.kind == NoiseKind::Pink);
  CHECK(ld.examples[0].snr_db == 3.0);
  CHECK(ld.examples[0].chunk_index == 2);
  CHECK(ld.has_stats);
  CHECK(ld.label_mean == m.label_mean);
  CHECK(ld.label_std == m.label_std);
  CHECK(ld.chunk_samples() == 32000);
}

TEST_CASE("load_manifest rejects garbage") {
  testutil::TempDir tmp("manifest");
  std::ofstream(tmp / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_manifest(tmp / "bad.json"), Error);
}

TEST_CASE("gen_manifest draws sources without split leakage") {
  Pools p;
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, p.opts(60));
  CHECK(m.examples.size() == 60);

  std::map<std::string, std::set<std::string>> splits_by_source;
  int train_n = 0;
  for (const auto& e : m.examples) {
    REQUIRE((e.split == "train" || e.split == "test"));
    if (e.split == "train") ++train_n;
    splits_by_source[e.speech_path].insert(e.split);
    if (!e.rir_path.empty()) splits_by_source[e.rir_path].insert(e.split);
    CHECK(e.snr_db >= -5.0);
    CHECK(e.snr_db <= 24.0);
  }
  for (const auto& [src, splits] : splits_by_source) CHECK(splits.size() == 1);
  CHECK(train_n > 30);
  CHECK(train_n < 60);

  const DatasetManifest m2 = gen_manifest(p.rirs, p.speech, {}, p.opts(60));
  for (size_t i = 0; i < m.examples.size(); ++i) {
    CHECK(m.examples[i].speech_path == m2.examples[i].speech_path);
    CHECK(m.examples[i].seed == m2.examples[i].seed);
  }
}

TEST_CASE("gen_manifest includes clean fractions") {
  Pools p;
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, p.opts(80));
  int reverb_free = 0, noise_free = 0;
  for (const auto& e : m.examples) {
    if (e.rir_path.empty()) ++reverb_free;
    if (e.noise.kind == NoiseKind::None) ++noise_free;
  }
  CHECK(reverb_free > 4);
  CHECK(noise_free > 4);
  CHECK(reverb_free < 32);
  CHECK(noise_free < 32);
}

TEST_CASE("synthesize_example is deterministic and labeled") {
  Pools p;
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, p.opts(8));
  const SynthResult a = synthesize_example(m.examples[0], m);
  const SynthResult b = synthesize_example(m.examples[0], m);
  CHECK(a.mix.samples == b.mix.samples);
  CHECK(a.mix.samples.size() == size_t(m.chunk_samples()));
  CHECK(a.mix.sample_rate == 16000);
  REQUIRE(a.label.snr.has_value());
  CHECK(a.label.sti >= 0.0);
  CHECK(a.label.sti <= 1.0);
}

TEST_CASE("reverb-free examples carry the impulse label") {
  Pools p;
  GenOptions o = p.opts(40);
  o.reverb_free_fraction = 1.0;
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, o);
  const SynthResult r = synthesize_example(m.examples[0], m);
  CHECK(r.label.sti == 1.0);
  CHECK(r.label.rt60 == 0.0);
  CHECK((r.label.flags & kFlagRt60Invalid));
  CHECK(r.label.drr == kRatioCapDb);
}

TEST_CASE("noise-free examples get the clean snr") {
  Pools p;
  GenOptions o = p.opts(40);
  o.noise_free_fraction = 1.0;
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, o);
  const SynthResult r = synthesize_example(m.examples[0], m);
  REQUIRE(r.label.snr.has_value());
  CHECK(*r.label.snr == kCleanSnrDb);
  CHECK((r.label.flags & kFlagSnrClean));
}

TEST_CASE("build_dataset writes wavs, labels, and stats") {
  Pools p;
  testutil::TempDir out("built");
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, p.opts(10));
  const BuildStats st = build_dataset(m, out.path.string());
  CHECK(st.built == 10);
  CHECK(st.skipped == 0);

  const auto rows = load_labels_csv(out / "labels.csv");
  REQUIRE(rows.size() == 10);
  for (const auto& r : rows) {
    CHECK(fs::exists(out.path / "wav" / (r.id + ".wav")));
    const Signal s = load_wav((out.path / "wav" / (r.id + ".wav")).string());
    CHECK(s.samples.size() == size_t(m.chunk_samples()));
  }

  const DatasetManifest stamped = load_manifest(out / "manifest.json");
  CHECK(stamped.has_stats);
  for (double sd : stamped.label_std) CHECK(sd >= 0.0);
}

TEST_CASE("build_dataset is byte deterministic") {
  Pools p;
  testutil::TempDir a("build-a"), b("build-b");
  const DatasetManifest m = gen_manifest(p.rirs, p.speech, {}, p.opts(6));
  build_dataset(m, a.path.string());
  build_dataset(m, b.path.string());
  CHECK(testutil::read_file(a / "labels.csv") == testutil::read_file(b / "labels.csv"));
  CHECK(testutil::read_file(a / "wav/ex000000.wav") == testutil::read_file(b / "wav/ex000000.wav"));
}

TEST_CASE("labels csv round trip with flags") {
  testutil::TempDir tmp("csv");
  LabelRow row;
  row.id = "ex000042";
  row.split = "test";
  row.label.rt60 = 0.5;
  row.label.drr = -3.25;
  row.label.c50 = 4.0;
  row.label.c80 = 8.0;
  row.label.sti = 0.875;
  row.label.snr = 12.0;
  row.label.flags = kFlagC50Capped | kFlagSnrClean;

  std::ofstream out(tmp / "labels.csv");
  out << label_csv_header() << "\n" << label_csv_row(row.id, row.split, row.label) << "\n";
  out.close();

  const auto rows = load_labels_csv(tmp / "labels.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].id == row.id);
  CHECK(rows[0].split == row.split);
  CHECK(rows[0].label.rt60 == doctest::Approx(0.5));
  CHECK(rows[0].label.sti == doctest::Approx(0.875));
  REQUIRE(rows[0].label.snr.has_value());
  CHECK(*rows[0].label.snr == doctest::Approx(12.0));
  CHECK(rows[0].label.flags == row.label.flags);
}

TEST_CASE("load_labels_csv validates the header") {
  testutil::TempDir tmp("csv");
  std::ofstream(tmp / "labels.csv") << "id,split,rt60\nex0,train,0.5\n";
  CHECK_THROWS_AS(load_labels_csv(tmp / "labels.csv"), Error);
}

TEST_SUITE_END();

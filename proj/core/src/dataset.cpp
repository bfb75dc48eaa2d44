#include "roomsonde/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <numeric>

#include <json.hpp>

#include "roomsonde/errors.hpp"
#include "roomsonde/resample.hpp"
#include "roomsonde/rng.hpp"
#include "roomsonde/wav.hpp"

namespace roomsonde {

using nlohmann::json;

int64_t DatasetManifest::chunk_samples() const {
  return std::llround(chunk_seconds * double(sample_rate));
}

namespace {

json recipe_to_json(const ExampleRecipe& r) {
  return json{{"id", r.id},
              {"split", r.split},
              {"speech", r.speech_path},
              {"rir", r.rir_path},
              {"noise_kind", noise_kind_name(r.noise.kind)},
              {"noise_source", r.noise.source},
              {"noise_seed", r.noise.seed},
              {"snr_db", r.snr_db},
              {"chunk_index", r.chunk_index},
              {"seed", r.seed}};
}

ExampleRecipe recipe_from_json(const json& j) {
  ExampleRecipe r;
  r.id = j.at("id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.speech_path = j.at("speech").get<std::string>();
  r.rir_path = j.at("rir").get<std::string>();
  r.noise.kind = noise_kind_from_name(j.at("noise_kind").get<std::string>());
  r.noise.source = j.at("noise_source").get<std::string>();
  r.noise.seed = j.at("noise_seed").get<uint64_t>();
  r.snr_db = j.at("snr_db").get<double>();
  r.chunk_index = j.at("chunk_index").get<int>();
  r.seed = j.at("seed").get<uint64_t>();
  return r;
}

}  // namespace

void save_manifest(const std::string& path, const DatasetManifest& m) {
  json j{{"version", m.version},
         {"seed", m.seed},
         {"sample_rate", m.sample_rate},
         {"chunk_seconds", m.chunk_seconds}};
  j["examples"] = json::array();
  for (const auto& r : m.examples) j["examples"].push_back(recipe_to_json(r));
  if (m.has_stats) {
    j["label_stats"] = {{"mean", m.label_mean}, {"std", m.label_std}};
  }
  std::ofstream os(path);
  if (!os) throw Error(Errc::IoFailure, "cannot open for write: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw Error(Errc::IoFailure, "write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoFailure, "cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptPayload, std::string("manifest parse: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw Error(Errc::CorruptHeader, "manifest version");
    m.seed = j.at("seed").get<uint64_t>();
    m.sample_rate = j.at("sample_rate").get<int>();
    m.chunk_seconds = j.at("chunk_seconds").get<double>();
    for (const auto& e : j.at("examples")) m.examples.push_back(recipe_from_json(e));
    if (j.contains("label_stats")) {
      m.has_stats = true;
      const auto& s = j.at("label_stats");
      for (size_t i = 0; i < 6; ++i) {
        m.label_mean[i] = s.at("mean").at(i).get<double>();
        m.label_std[i] = s.at("std").at(i).get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptPayload, std::string("manifest fields: ") + e.what());
  }
  return m;
}

std::pair<std::vector<int>, std::vector<int>> make_splits(int n, double train_fraction,
                                                          uint64_t seed) {
  if (n < 2) throw Error(Errc::EmptySplit, "need at least 2 sources to split");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const int n_train =
      int(std::clamp<long long>(std::llround(double(n) * train_fraction), 1, n - 1));
  std::vector<int> train(idx.begin(), idx.begin() + n_train);
  std::vector<int> test(idx.begin() + n_train, idx.end());
  return {train, test};
}

std::vector<Signal> chunk_speech(const Signal& x, double chunk_seconds) {
  const int64_t chunk = std::llround(chunk_seconds * double(x.sample_rate));
  if (chunk <= 0) throw Error(Errc::InvalidArgument, "chunk length must be positive");
  const int64_t n = int64_t(x.samples.size()) / chunk;
  if (n == 0)
    throw Error(Errc::ChunkTooShort, "signal shorter than one chunk (" +
                                         std::to_string(x.samples.size()) + " < " +
                                         std::to_string(chunk) + " samples)");
  std::vector<Signal> out;
  for (int64_t k = 0; k < n; ++k) {
    Signal s;
    s.sample_rate = x.sample_rate;
    s.samples.assign(x.samples.begin() + k * chunk, x.samples.begin() + (k + 1) * chunk);
    out.push_back(std::move(s));
  }
  return out;
}

DatasetManifest gen_manifest(const std::vector<std::string>& rir_paths,
                             const std::vector<std::string>& speech_paths,
                             const std::vector<std::string>& noise_paths, const GenOptions& opt) {
  if (speech_paths.empty()) throw Error(Errc::EmptySourceList, "no speech files");
  if (rir_paths.empty() && opt.reverb_free_fraction < 1.0)
    throw Error(Errc::EmptySourceList, "no rir files");
  if (opt.count <= 0) throw Error(Errc::InvalidArgument, "example count must be positive");
  if (opt.snr_hi < opt.snr_lo) throw Error(Errc::InvalidArgument, "snr range is empty");

  DatasetManifest m;
  m.seed = opt.seed;
  m.sample_rate = opt.sample_rate;
  m.chunk_seconds = opt.chunk_seconds;

  // drop speech files that cannot produce a single chunk
  const int64_t chunk = m.chunk_samples();
  std::vector<std::string> speech;
  std::vector<int> chunk_count;
  for (const auto& p : speech_paths) {
    const Signal s = load_wav(p);
    const int64_t out_len = std::llround(double(s.samples.size()) * double(opt.sample_rate) /
                                         double(s.sample_rate));
    const int64_t n = out_len / chunk;
    if (n == 0) {
      std::fprintf(stderr, "gen-manifest: %s shorter than one chunk, dropped\n", p.c_str());
      continue;
    }
    speech.push_back(p);
    chunk_count.push_back(int(n));
  }
  if (speech.size() < 2) throw Error(Errc::EmptySplit, "too few usable speech files");

  const auto [sp_train, sp_test] =
      make_splits(int(speech.size()), opt.speech_train_fraction, derive_seed(opt.seed, 102));
  std::vector<int> rir_train, rir_test;
  if (!rir_paths.empty()) {
    auto [a, b] =
        make_splits(int(rir_paths.size()), opt.rir_train_fraction, derive_seed(opt.seed, 101));
    rir_train = std::move(a);
    rir_test = std::move(b);
  }

  const int snr_span = opt.snr_hi - opt.snr_lo + 1;
  for (int i = 0; i < opt.count; ++i) {
    Rng rng(derive_seed(opt.seed, 200000 + uint64_t(i)));
    ExampleRecipe r;
    char id[16];
    std::snprintf(id, sizeof id, "ex%06d", i);
    r.id = id;
    const bool train = rng.uniform() < opt.train_fraction;
    r.split = train ? "train" : "test";

    const auto& sp_pool = train ? sp_train : sp_test;
    const int sp = sp_pool[size_t(rng.below(sp_pool.size()))];
    r.speech_path = speech[size_t(sp)];
    r.chunk_index = int(rng.below(uint64_t(chunk_count[size_t(sp)])));

    if (!rir_paths.empty() && rng.uniform() >= opt.reverb_free_fraction) {
      const auto& rir_pool = train ? rir_train : rir_test;
      r.rir_path = rir_paths[size_t(rir_pool[size_t(rng.below(rir_pool.size()))])];
    }

    if (rng.uniform() >= opt.noise_free_fraction) {
      const int kinds = noise_paths.empty() ? 2 : 3;
      const int k = int(rng.below(uint64_t(kinds)));
      r.noise.kind = k == 0 ? NoiseKind::White : k == 1 ? NoiseKind::Pink : NoiseKind::Real;
      if (r.noise.kind == NoiseKind::Real)
        r.noise.source = noise_paths[size_t(rng.below(noise_paths.size()))];
      r.noise.seed = derive_seed(opt.seed, 500000 + uint64_t(i));
      r.snr_db = double(opt.snr_lo + int(rng.below(uint64_t(snr_span))));
    }
    r.seed = derive_seed(opt.seed, 300000 + uint64_t(i));
    m.examples.push_back(std::move(r));
  }
  return m;
}

namespace {

// bounded cache of resampled speech; sources repeat across many examples
class SpeechCache {
public:
  explicit SpeechCache(int rate) : rate_(rate) {}

  const Signal& get(const std::string& path) {
    for (auto it = order_.begin(); it != order_.end(); ++it)
      if (it->first == path) {
        order_.splice(order_.begin(), order_, it);
        return order_.front().second;
      }
    Signal s = resample(load_wav(path), rate_);
    order_.emplace_front(path, std::move(s));
    if (order_.size() > 4) order_.pop_back();
    return order_.front().second;
  }

private:
  int rate_;
  std::list<std::pair<std::string, Signal>> order_;
};

Signal unit_impulse(int rate) {
  Signal h;
  h.sample_rate = rate;
  h.samples.assign(size_t(std::max(16, rate / 100)), 0.0);
  h.samples[0] = 1.0;
  return h;
}

// convolves only the span feeding the requested chunk
std::vector<double> wet_chunk(const Signal& dry, const Signal& h, int64_t chunk, int64_t k) {
  const int64_t n_dry = int64_t(dry.samples.size());
  const int64_t n_h = int64_t(h.samples.size());
  const int64_t wet_len = n_dry + n_h - 1;
  if ((k + 1) * chunk > wet_len)
    throw Error(Errc::ChunkTooShort, "chunk " + std::to_string(k) + " out of range");
  const int64_t lo = std::max<int64_t>(0, k * chunk - (n_h - 1));
  const int64_t hi = std::min(n_dry, (k + 1) * chunk);
  std::vector<double> piece(dry.samples.begin() + lo, dry.samples.begin() + hi);
  std::vector<double> conv = convolve(piece, h.samples);
  std::vector<double> out(size_t(chunk), 0.0);
  for (int64_t u = 0; u < chunk; ++u) {
    const int64_t t = k * chunk + u - lo;
    if (t >= 0 && t < int64_t(conv.size())) out[size_t(u)] = conv[size_t(t)];
  }
  return out;
}

// mixes one chunk against an already-analyzed RIR
SynthResult synth_one(const ExampleRecipe& r, const DatasetManifest& m, const Signal& dry,
                      const Signal& h, const AcousticLabel& rir_label) {
  const int64_t chunk = m.chunk_samples();
  std::vector<double> wet = wet_chunk(dry, h, chunk, r.chunk_index);

  SynthResult out;
  out.label = rir_label;
  out.mix.sample_rate = m.sample_rate;
  if (r.noise.kind == NoiseKind::None) {
    out.mix.samples = std::move(wet);
    out.label.snr = kCleanSnrDb;
    out.label.flags |= kFlagSnrClean;
  } else {
    Signal wet_sig;
    wet_sig.sample_rate = m.sample_rate;
    wet_sig.samples = std::move(wet);
    const Signal noise = realize_noise(r.noise, size_t(chunk), m.sample_rate);
    const Signal scaled = scale_to_snr(wet_sig, noise, r.snr_db);
    out.mix.samples.resize(size_t(chunk));
    for (int64_t i = 0; i < chunk; ++i)
      out.mix.samples[size_t(i)] = wet_sig.samples[size_t(i)] + scaled.samples[size_t(i)];
    out.label.snr = r.snr_db;
  }
  if (!peak_normalize(out.mix.samples)) out.label.flags |= kFlagSilentChunk;
  return out;
}

}  // namespace

SynthResult synthesize_example(const ExampleRecipe& r, const DatasetManifest& m) {
  const Signal h = r.rir_path.empty() ? unit_impulse(m.sample_rate)
                                      : resample(load_wav(r.rir_path), m.sample_rate);
  const Signal dry = resample(load_wav(r.speech_path), m.sample_rate);
  return synth_one(r, m, dry, h, analyze_rir(h));
}

BuildStats build_dataset(const DatasetManifest& m, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");

  SpeechCache speech_cache(m.sample_rate);
  struct RirEntry {
    Signal h;
    AcousticLabel label;
  };
  std::map<std::string, RirEntry> rir_cache;

  auto rir_for = [&](const std::string& path) -> const RirEntry& {
    const std::string key = path.empty() ? "\x01impulse" : path;
    auto it = rir_cache.find(key);
    if (it != rir_cache.end()) return it->second;
    RirEntry e;
    e.h = path.empty() ? unit_impulse(m.sample_rate) : resample(load_wav(path), m.sample_rate);
    e.label = analyze_rir(e.h);
    return rir_cache.emplace(key, std::move(e)).first->second;
  };

  BuildStats stats;
  struct Row {
    std::string id, split;
    AcousticLabel label;
  };
  std::vector<Row> rows;
  for (const auto& r : m.examples) {
    try {
      const RirEntry& rir = rir_for(r.rir_path);
      const Signal& dry = speech_cache.get(r.speech_path);
      const SynthResult sr = synth_one(r, m, dry, rir.h, rir.label);

      save_wav((fs::path(out_dir) / "wav" / (r.id + ".wav")).string(), sr.mix,
               WavFormat::Float32);
      rows.push_back({r.id, r.split, sr.label});
      ++stats.built;
    } catch (const Error& e) {
      std::fprintf(stderr, "build-dataset: skip %s: %s\n", r.id.c_str(), e.what());
      ++stats.skipped;
    }
  }

  std::ofstream csv(fs::path(out_dir) / "labels.csv");
  if (!csv) throw Error(Errc::IoFailure, "cannot write labels.csv");
  csv << label_csv_header() << "\n";
  for (const auto& row : rows) csv << label_csv_row(row.id, row.split, row.label) << "\n";
  if (!csv) throw Error(Errc::IoFailure, "labels.csv write failed");
  csv.close();

  DatasetManifest out = m;
  // train-split label statistics ride along for reproducibility checks
  {
    std::array<double, 6> s{}, q{};
    int64_t n = 0;
    for (const auto& row : rows) {
      if (row.split != "train") continue;
      const double v[6] = {row.label.rt60, row.label.drr,  row.label.c50,
                           row.label.c80,  row.label.sti,  row.label.snr.value_or(kCleanSnrDb)};
      for (size_t t = 0; t < 6; ++t) {
        s[t] += v[t];
        q[t] += v[t] * v[t];
      }
      ++n;
    }
    if (n > 0) {
      out.has_stats = true;
      for (size_t t = 0; t < 6; ++t) {
        out.label_mean[t] = s[t] / double(n);
        out.label_std[t] =
            std::sqrt(std::max(0.0, q[t] / double(n) - out.label_mean[t] * out.label_mean[t]));
      }
    }
  }
  save_manifest((fs::path(out_dir) / "manifest.json").string(), out);
  return stats;
}

std::string label_csv_header() { return "id,split,rt60_s,drr_db,c50_db,c80_db,sti,snr_db,flags"; }

std::string label_csv_row(const std::string& id, const std::string& split,
                          const AcousticLabel& label) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", id.c_str(), split.c_str(),
                label.rt60, label.drr, label.c50, label.c80, label.sti,
                label.snr.value_or(kCleanSnrDb));
  std::string row(buf);
  const auto names = flag_names(label.flags);
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) row += '|';
    row += names[i];
  }
  return row;
}

std::vector<LabelRow> load_labels_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoFailure, "cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != label_csv_header())
    throw Error(Errc::CorruptHeader, "labels csv header: " + path);
  std::vector<LabelRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    for (int f = 0; f < 8; ++f) {
      const size_t c = line.find(',', pos);
      if (c == std::string::npos) throw Error(Errc::CorruptPayload, "labels csv row: " + line);
      cells.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    cells.push_back(line.substr(pos));
    LabelRow r;
    r.id = cells[0];
    r.split = cells[1];
    try {
      r.label.rt60 = std::stod(cells[2]);
      r.label.drr = std::stod(cells[3]);
      r.label.c50 = std::stod(cells[4]);
      r.label.c80 = std::stod(cells[5]);
      r.label.sti = std::stod(cells[6]);
      r.label.snr = std::stod(cells[7]);
    } catch (const std::exception&) {
      throw Error(Errc::CorruptPayload, "labels csv number: " + line);
    }
    std::vector<std::string> names;
    pos = 0;
    const std::string& fl = cells[8];
    while (pos < fl.size()) {
      const size_t c = fl.find('|', pos);
      names.push_back(fl.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    r.label.flags = flags_from_names(names);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace roomsonde

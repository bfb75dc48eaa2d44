#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "roomsonde/dataset.hpp"
#include "roomsonde/errors.hpp"
#include "roomsonde/eval.hpp"
#include "roomsonde/mfcc.hpp"
#include "roomsonde/noise.hpp"
#include "roomsonde/nn/gradcheck.hpp"
#include "roomsonde/nn/train.hpp"
#include "roomsonde/resample.hpp"
#include "roomsonde/synth.hpp"
#include "roomsonde/wada.hpp"
#include "roomsonde/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roomsonde;

namespace {

std::vector<std::string> scan_wavs(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

json label_to_json(const AcousticLabel& l) {
  json j{{"rt60_s", l.rt60}, {"drr_db", l.drr},   {"c50_db", l.c50},
         {"c80_db", l.c80},  {"sti", l.sti},      {"flags", flag_names(l.flags)}};
  if (l.snr) j["snr_db"] = *l.snr;
  return j;
}

void print_label(const AcousticLabel& l) {
  std::printf("  rt60_s %8.3f\n  drr_db %8.2f\n  c50_db %8.2f\n  c80_db %8.2f\n  sti    %8.3f\n",
              l.rt60, l.drr, l.c50, l.c80, l.sti);
  if (l.snr) std::printf("  snr_db %8.2f\n", *l.snr);
  const auto names = flag_names(l.flags);
  if (!names.empty()) {
    std::printf("  flags  ");
    for (size_t i = 0; i < names.size(); ++i) std::printf("%s%s", i ? "|" : "", names[i].c_str());
    std::printf("\n");
  }
}

// Leading span of 16 kHz audio matching the model's frame count.
Signal first_chunk(const Signal& in, const MfccConfig& cfg, int64_t want) {
  Signal s = resample(in, cfg.sample_rate);
  if (int64_t(s.samples.size()) < want)
    throw Error(Errc::ChunkTooShort,
                "need at least " + std::to_string(double(want) / cfg.sample_rate) + " s of audio");
  s.samples.resize(size_t(want));
  return s;
}

struct LoadedSplit {
  nn::TrainSet set;
  std::vector<LabelRow> rows;
};

// features must exist under <data>/features (run featurize first)
LoadedSplit load_split(const std::string& data_dir, const std::string& split) {
  const auto all = load_labels_csv((fs::path(data_dir) / "labels.csv").string());
  LoadedSplit out;
  const MfccConfig cfg;
  out.set.mfcc_canonical = cfg.canonical();
  out.set.mfcc_fp = cfg.fingerprint();
  for (const auto& r : all) {
    if (r.split != split) continue;
    const auto f =
        load_features((fs::path(data_dir) / "features" / (r.id + ".rsft")).string());
    if (f.config_fp != out.set.mfcc_fp)
      throw Error(Errc::FingerprintMismatch, r.id + ": features from a different mfcc config");
    if (out.set.n == 0) {
      out.set.frames = f.rows;
      out.set.coeffs = f.cols;
    } else if (int64_t(f.rows) != out.set.frames || int64_t(f.cols) != out.set.coeffs) {
      throw Error(Errc::ShapeMismatch, r.id + ": feature shape varies across examples");
    }
    out.set.features.insert(out.set.features.end(), f.values.begin(), f.values.end());
    const double t[6] = {r.label.rt60, r.label.drr, r.label.c50,
                         r.label.c80,  r.label.sti, r.label.snr.value_or(kCleanSnrDb)};
    for (double v : t) out.set.targets.push_back(float(v));
    out.rows.push_back(r);
    ++out.set.n;
  }
  if (out.set.n == 0) throw Error(Errc::EmptySplit, "no '" + split + "' rows in labels.csv");
  return out;
}

std::string default_wada_table(uint64_t seed) {
  return (fs::temp_directory_path() / ("roomsonde-wada-" + std::to_string(seed) + ".rswd"))
      .string();
}

WadaTable wada_table_cached(const std::string& path, uint64_t seed) {
  if (fs::exists(path)) return load_wada_table(path);
  std::fprintf(stderr, "building wada table (%s), one-time cost\n", path.c_str());
  const WadaTable t = build_wada_table(seed);
  save_wada_table(path, t);
  return t;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"room acoustics estimation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // --seed/--jobs/--json are accepted after the subcommand too
  uint64_t seed = 0;
  int jobs = 1;
  bool as_json = false;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--json", as_json, "machine-readable stdout");

  // analyze-rir
  auto* c_an = app.add_subcommand("analyze-rir", "acoustic parameters of impulse responses");
  std::vector<std::string> an_files;
  c_an->add_option("files", an_files, "rir wav files")->required();

  // make-rir / make-speech / make-noise
  auto* c_rir = app.add_subcommand("make-rir", "synthesize an exponential-decay rir");
  double mr_rt60 = 0.5, mr_seconds = 1.5, mr_direct = 0.0;
  int mr_rate = 16000;
  std::string mr_out;
  c_rir->add_option("--rt60", mr_rt60, "target rt60 seconds")->capture_default_str();
  c_rir->add_option("--seconds", mr_seconds, "rir length")->capture_default_str();
  c_rir->add_option("--direct-db", mr_direct, "direct path level above tail")
      ->capture_default_str();
  c_rir->add_option("--rate", mr_rate, "sample rate")->capture_default_str();
  c_rir->add_option("--out", mr_out, "output wav")->required();

  auto* c_sp = app.add_subcommand("make-speech", "synthesize speech-like audio");
  double ms_seconds = 40.0;
  int ms_rate = 16000;
  std::string ms_out;
  c_sp->add_option("--seconds", ms_seconds, "duration")->capture_default_str();
  c_sp->add_option("--rate", ms_rate, "sample rate")->capture_default_str();
  c_sp->add_option("--out", ms_out, "output wav")->required();

  auto* c_no = app.add_subcommand("make-noise", "generate white or pink noise");
  std::string mn_kind = "white", mn_out;
  double mn_seconds = 10.0;
  int mn_rate = 16000;
  c_no->add_option("--kind", mn_kind, "white|pink")->capture_default_str();
  c_no->add_option("--seconds", mn_seconds, "duration")->capture_default_str();
  c_no->add_option("--rate", mn_rate, "sample rate")->capture_default_str();
  c_no->add_option("--out", mn_out, "output wav")->required();

  // gen-manifest
  auto* c_gen = app.add_subcommand("gen-manifest", "draw dataset recipes from source pools");
  std::string g_rir_dir, g_speech_dir, g_noise_dir, g_out;
  GenOptions gopt;
  c_gen->add_option("--rir-dir", g_rir_dir, "directory of rir wavs")->required();
  c_gen->add_option("--speech-dir", g_speech_dir, "directory of speech wavs")->required();
  c_gen->add_option("--noise-dir", g_noise_dir, "directory of noise wavs (optional)");
  c_gen->add_option("--count", gopt.count, "number of examples")->capture_default_str();
  c_gen->add_option("--train-fraction", gopt.train_fraction)->capture_default_str();
  c_gen->add_option("--reverb-free", gopt.reverb_free_fraction)->capture_default_str();
  c_gen->add_option("--noise-free", gopt.noise_free_fraction)->capture_default_str();
  c_gen->add_option("--snr-lo", gopt.snr_lo)->capture_default_str();
  c_gen->add_option("--snr-hi", gopt.snr_hi)->capture_default_str();
  c_gen->add_option("--out", g_out, "manifest path")->required();

  // synth-dataset
  auto* c_syn = app.add_subcommand("synth-dataset", "render wavs and labels from a manifest");
  std::string s_manifest, s_out;
  c_syn->add_option("--manifest", s_manifest)->required();
  c_syn->add_option("--out", s_out, "dataset directory")->required();

  // featurize
  auto* c_feat = app.add_subcommand("featurize", "mfcc features for a dataset or one file");
  std::string f_data, f_wav, f_out;
  c_feat->add_option("--data", f_data, "dataset directory (wav/ + labels.csv)");
  c_feat->add_option("--wav", f_wav, "single input wav");
  c_feat->add_option("--out", f_out, "output path for --wav mode");

  // train
  auto* c_tr = app.add_subcommand("train", "train a model on a featurized dataset");
  std::string t_data, t_out, t_history;
  nn::TrainConfig tcfg;
  c_tr->add_option("--data", t_data, "dataset directory")->required();
  c_tr->add_option("--model", tcfg.model, "baseline_cnn|crnn")->capture_default_str();
  c_tr->add_option("--out", t_out, "weights path")->required();
  c_tr->add_option("--history", t_history, "loss history csv");
  c_tr->add_option("--epochs", tcfg.max_epochs)->capture_default_str();
  c_tr->add_option("--batch", tcfg.batch_size)->capture_default_str();
  c_tr->add_option("--lr", tcfg.lr)->capture_default_str();
  c_tr->add_option("--patience", tcfg.patience)->capture_default_str();
  c_tr->add_option("--val-fraction", tcfg.val_fraction)->capture_default_str();
  c_tr->add_option("--max-updates", tcfg.max_updates)->capture_default_str();
  c_tr->add_option("--target-train-loss", tcfg.target_train_loss)->capture_default_str();
  bool t_progress = false;
  c_tr->add_flag("--progress", t_progress, "per-epoch stderr line");

  // evaluate
  auto* c_ev = app.add_subcommand("evaluate", "test-split metrics for trained weights");
  std::string e_data, e_weights, e_report, e_cal;
  c_ev->add_option("--data", e_data, "dataset directory")->required();
  c_ev->add_option("--weights", e_weights)->required();
  c_ev->add_option("--report", e_report, "json report path")->required();
  c_ev->add_option("--calibration", e_cal, "calibration csv path");

  // estimate
  auto* c_es = app.add_subcommand("estimate", "blind estimates for arbitrary audio");
  std::string es_weights;
  std::vector<std::string> es_files;
  c_es->add_option("--weights", es_weights)->required();
  c_es->add_option("files", es_files, "audio files (>= 8 s)")->required();

  // wada
  auto* c_wa = app.add_subcommand("wada", "blind snr from amplitude statistics");
  std::vector<std::string> wa_files;
  std::string wa_table;
  c_wa->add_option("files", wa_files, "audio files")->required();
  c_wa->add_option("--table", wa_table, "g(snr) table cache path");

  // gradcheck
  auto* c_gc = app.add_subcommand("gradcheck", "numeric gradient verification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

#ifdef _OPENMP
  omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif

  if (c_an->parsed()) {
    json out = json::array();
    for (const auto& p : an_files) {
      const AcousticLabel l = analyze_rir(load_wav(p));
      if (as_json) {
        json j = label_to_json(l);
        j["path"] = p;
        j["analyzer"] = kAnalyzerVersion;
        out.push_back(std::move(j));
      } else {
        std::printf("%s\n", p.c_str());
        print_label(l);
      }
    }
    if (as_json) std::printf("%s\n", out.dump(2).c_str());
    return 0;
  }

  if (c_rir->parsed()) {
    save_wav(mr_out, make_noisy_exp_rir(mr_rate, mr_rt60, mr_seconds, seed, mr_direct));
    return 0;
  }
  if (c_sp->parsed()) {
    save_wav(ms_out, make_speechlike(ms_rate, ms_seconds, seed));
    return 0;
  }
  if (c_no->parsed()) {
    const size_t n = size_t(std::llround(mn_seconds * mn_rate));
    if (mn_kind == "white")
      save_wav(mn_out, gen_white(n, seed, mn_rate));
    else if (mn_kind == "pink")
      save_wav(mn_out, gen_pink(n, seed, mn_rate));
    else
      throw Error(Errc::InvalidArgument, "kind must be white or pink");
    return 0;
  }

  if (c_gen->parsed()) {
    gopt.seed = seed;
    const auto rirs = scan_wavs(g_rir_dir);
    const auto speech = scan_wavs(g_speech_dir);
    const auto noise = g_noise_dir.empty() ? std::vector<std::string>{} : scan_wavs(g_noise_dir);
    const DatasetManifest m = gen_manifest(rirs, speech, noise, gopt);
    save_manifest(g_out, m);
    if (as_json)
      std::printf("%s\n", json{{"examples", m.examples.size()}, {"manifest", g_out}}.dump().c_str());
    else
      std::printf("wrote %zu recipes to %s\n", m.examples.size(), g_out.c_str());
    return 0;
  }

  if (c_syn->parsed()) {
    const DatasetManifest m = load_manifest(s_manifest);
    const BuildStats st = build_dataset(m, s_out);
    if (as_json)
      std::printf("%s\n", json{{"built", st.built}, {"skipped", st.skipped}}.dump().c_str());
    else
      std::printf("built %lld examples, skipped %lld\n", static_cast<long long>(st.built),
                  static_cast<long long>(st.skipped));
    return 0;
  }

  if (c_feat->parsed()) {
    const MfccConfig cfg;
    if (!f_wav.empty()) {
      if (f_out.empty()) throw Error(Errc::InvalidArgument, "--wav needs --out");
      const Signal s = resample(load_wav(f_wav), cfg.sample_rate);
      save_features(f_out, compute_mfcc(s, cfg));
      return 0;
    }
    if (f_data.empty()) throw Error(Errc::InvalidArgument, "need --data or --wav");
    const auto rows = load_labels_csv((fs::path(f_data) / "labels.csv").string());
    fs::create_directories(fs::path(f_data) / "features");
    int64_t done = 0;
    for (const auto& r : rows) {
      const Signal s = load_wav((fs::path(f_data) / "wav" / (r.id + ".wav")).string());
      save_features((fs::path(f_data) / "features" / (r.id + ".rsft")).string(),
                    compute_mfcc(s, cfg));
      ++done;
    }
    if (as_json)
      std::printf("%s\n", json{{"featurized", done}}.dump().c_str());
    else
      std::printf("featurized %lld examples\n", static_cast<long long>(done));
    return 0;
  }

  if (c_tr->parsed()) {
    LoadedSplit train = load_split(t_data, "train");
    tcfg.seed = seed;
    tcfg.frames = train.set.frames;
    tcfg.coeffs = train.set.coeffs;
    tcfg.progress = t_progress;
    const nn::TrainResult res = nn::train_model(tcfg, train.set);
    nn::save_weights(t_out, res.weights);
    if (!t_history.empty()) {
      std::FILE* f = std::fopen(t_history.c_str(), "w");
      if (!f) throw Error(Errc::IoFailure, "cannot write " + t_history);
      std::fprintf(f, "epoch,train_loss,val_loss\n");
      for (const auto& h : res.history)
        std::fprintf(f, "%d,%.9f,%.9f\n", h.epoch, h.train_loss, h.val_loss);
      std::fclose(f);
    }
    if (as_json)
      std::printf("%s\n", json{{"updates", res.updates},
                               {"best_epoch", res.best_epoch},
                               {"best_val", res.best_val},
                               {"weights", t_out}}
                              .dump()
                              .c_str());
    else
      std::printf("trained %s: %lld updates, best epoch %d (monitored loss %.6f)\n",
                  tcfg.model.c_str(), static_cast<long long>(res.updates), res.best_epoch,
                  res.best_val);
    return 0;
  }

  if (c_ev->parsed()) {
    LoadedSplit test = load_split(e_data, "test");
    nn::Predictor pred(nn::load_weights(e_weights));
    const auto y = pred.run(test.set.features.data(), test.set.n, test.set.mfcc_fp);
    std::vector<EvalExample> ex(size_t(test.set.n));
    for (int64_t i = 0; i < test.set.n; ++i) {
      ex[size_t(i)].id = test.rows[size_t(i)].id;
      ex[size_t(i)].flags = test.rows[size_t(i)].label.flags;
      for (int t = 0; t < 6; ++t) {
        ex[size_t(i)].pred[size_t(t)] = double(y[size_t(i * 6 + t)]);
        ex[size_t(i)].truth[size_t(t)] = double(test.set.targets[size_t(i * 6 + t)]);
      }
    }
    const EvalReport rep = evaluate(ex);
    save_report(e_report, rep, ex,
                {{"weights", e_weights}, {"model", pred.store().model_name},
                 {"analyzer", kAnalyzerVersion}});
    if (!e_cal.empty()) export_calibration(e_cal, ex);
    if (as_json) {
      json j{{"n", rep.n}};
      for (int t = 0; t < 6; ++t)
        j["mae"][nn::kTargetNames[size_t(t)]] = rep.targets[size_t(t)].mae_filtered;
      std::printf("%s\n", j.dump().c_str());
    } else {
      std::printf("evaluated %lld examples\n", static_cast<long long>(rep.n));
      for (int t = 0; t < 6; ++t)
        std::printf("  %-5s mae %8.4f  (n=%lld)\n", nn::kTargetNames[size_t(t)],
                    rep.targets[size_t(t)].mae_filtered,
                    static_cast<long long>(rep.targets[size_t(t)].n_filtered));
    }
    return 0;
  }

  if (c_es->parsed()) {
    nn::Predictor pred(nn::load_weights(es_weights));
    const MfccConfig cfg;
    // Smallest sample count that yields exactly the trained frame count.
    const int64_t want = (pred.store().frames - 1) * cfg.hop + cfg.frame_length;
    json out = json::array();
    for (const auto& p : es_files) {
      Signal s = first_chunk(load_wav(p), cfg, want);
      const FeatureMatrix f = compute_mfcc(s, cfg);
      if (int64_t(f.rows) != pred.store().frames)
        throw Error(Errc::ShapeMismatch, "frame count vs model input");
      const auto y = pred.run(f.values.data(), 1, f.config_fp);
      if (as_json) {
        json j{{"path", p}};
        for (int t = 0; t < 6; ++t) j[nn::kTargetNames[size_t(t)]] = y[size_t(t)];
        out.push_back(std::move(j));
      } else {
        std::printf("%s\n", p.c_str());
        for (int t = 0; t < 6; ++t)
          std::printf("  %-5s %8.3f\n", nn::kTargetNames[size_t(t)], y[size_t(t)]);
      }
    }
    if (as_json) std::printf("%s\n", out.dump(2).c_str());
    return 0;
  }

  if (c_wa->parsed()) {
    const std::string table_path = wa_table.empty() ? default_wada_table(seed) : wa_table;
    const WadaTable table = wada_table_cached(table_path, seed);
    json out = json::array();
    for (const auto& p : wa_files) {
      const double snr = wada_snr(load_wav(p).samples, table);
      if (as_json)
        out.push_back({{"path", p}, {"snr_db", snr}});
      else
        std::printf("%s  %.2f dB\n", p.c_str(), snr);
    }
    if (as_json) std::printf("%s\n", out.dump(2).c_str());
    return 0;
  }

  if (c_gc->parsed()) {
    const auto results = nn::run_gradient_checks(seed);
    bool ok = true;
    json out = json::array();
    for (const auto& r : results) {
      ok = ok && r.pass;
      if (as_json)
        out.push_back({{"name", r.name}, {"max_rel", r.max_rel}, {"tol", r.tol}, {"pass", r.pass}});
      else
        std::printf("%-18s max_rel %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel, r.tol,
                    r.pass ? "PASS" : "FAIL");
    }
    if (as_json) std::printf("%s\n", out.dump(2).c_str());
    return ok ? 0 : 1;
  }

  return 0;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

// nbdf: train and apply narrow-band deep filtering models.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nbdf/nbdf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nbdf;

namespace {

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no .wav files in " + dir.string());
  return out;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return json::parse(is);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "speech";
  std::string out;
  int count = 10;
  int channels = 4;
  double seconds = 3.088;  // exactly 192 STFT frames
  std::string family = "a";
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const auto len = static_cast<std::size_t>(a.seconds * kSampleRate);
  if (a.kind == "speech") {
    json delays = json::object();
    for (const auto& c : synth_clean_corpus(a.count, a.channels, len, a.seed)) {
      write_wav((dir / (c.id + ".wav")).string(), c.audio);
      delays[c.id + ".wav"] = c.delays;
    }
    write_json(dir / "delays.json", delays);
  } else if (a.kind == "noise") {
    const auto fam = parse_noise_family(a.family);
    for (int i = 0; i < a.count; ++i)
      write_wav((dir / ("noise" + std::to_string(i) + ".wav")).string(),
                synth_noise(fam, a.channels, len, a.seed + static_cast<std::uint64_t>(i)));
  } else {
    throw std::invalid_argument("unknown synth kind '" + a.kind + "' (expected speech|noise)");
  }
  std::printf("wrote %d %s files to %s\n", a.count, a.kind.c_str(), dir.string().c_str());
  return 0;
}

struct MixArgs {
  std::string clean, noise, out;
  int count = 100;
  double snr_min = -5.0, snr_max = 10.0;
  int channels = 4;
  int ref = 0;
  std::string split = "train";
  std::uint64_t seed = 0;
};

int run_mix(const MixArgs& a) {
  json delays = json::object();
  if (fs::exists(fs::path(a.clean) / "delays.json")) delays = read_json(fs::path(a.clean) / "delays.json");
  std::vector<CleanSource> clean;
  for (const auto& p : wav_files(a.clean)) {
    auto audio = read_wav(p.string());
    if (static_cast<int>(audio.channels()) != a.channels)
      throw std::runtime_error(p.string() + " has " + std::to_string(audio.channels()) +
                               " channels, expected " + std::to_string(a.channels));
    const auto name = p.filename().string();
    clean.push_back({p.stem().string(), std::move(audio),
                     delays.value(name, std::vector<double>{})});
  }
  std::vector<NoiseSource> noise;
  for (const auto& p : wav_files(a.noise)) noise.push_back({p.stem().string(), read_wav(p.string())});
  DatasetOptions opt;
  opt.count = a.count;
  opt.snr_min = a.snr_min;
  opt.snr_max = a.snr_max;
  opt.ref_channel = a.ref;
  opt.seed = a.seed;
  if (a.split != "train" && a.split != "test") throw std::invalid_argument("split must be train or test");
  opt.split = a.split == "test" ? Split::kTest : Split::kTrain;
  const auto mixtures = build_dataset(clean, noise, opt);
  json prov = {{"clean_dir", fs::absolute(a.clean).string()},
               {"noise_dir", fs::absolute(a.noise).string()},
               {"seed", a.seed},
               {"snr_min", a.snr_min},
               {"snr_max", a.snr_max},
               {"split", a.split},
               {"clean_files", json::array()},
               {"noise_files", json::array()}};
  for (const auto& c : clean) prov["clean_files"].push_back(c.id);
  for (const auto& n : noise) prov["noise_files"].push_back(n.id);
  write_dataset(a.out, mixtures, prov);
  std::printf("wrote %zu mixtures to %s\n", mixtures.size(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, target;
  bool bidirectional = true;
  int hidden1 = 0, hidden2 = 0, epochs = 0, batch = 0, bins = 0, threads = 1, ref = 0;
  double lr = 0.0, lambda = 0.0;
  std::uint64_t seed = 0;
  bool desk = false;
  bool deterministic = false;
};

int run_train(const TrainArgs& a, const CLI::App& cmd) {
  TrainConfig cfg = a.desk ? TrainConfig::desk_scale() : TrainConfig{};
  if (!a.config.empty()) cfg.update_from_json(read_json(a.config));
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  if (given("--target")) cfg.target = parse_target(a.target);
  if (given("--bidirectional")) cfg.bidirectional = a.bidirectional;
  if (given("--hidden1")) cfg.hidden1 = a.hidden1;
  if (given("--hidden2")) cfg.hidden2 = a.hidden2;
  if (given("--epochs")) cfg.epochs = a.epochs;
  if (given("--batch")) cfg.batch_size = a.batch;
  if (given("--lr")) cfg.lr = a.lr;
  if (given("--lambda")) cfg.lambda = a.lambda;
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--bins-per-utterance")) cfg.bins_per_utterance = a.bins;
  if (given("--ref")) cfg.ref_channel = a.ref;
  cfg.threads = a.threads;

  const auto mixtures = read_dataset(fs::path(a.data) / "manifest.json");
  if (mixtures.empty()) throw std::runtime_error("dataset " + a.data + " has no mixtures");
  cfg.channels = static_cast<int>(mixtures[0].noisy.channels());
  if (!given("--ref") && (a.config.empty() || !read_json(a.config).contains("ref_channel")))
    cfg.ref_channel = mixtures[0].spec.ref_channel;
  cfg.validate();

  const auto pool = build_training_pool(mixtures, cfg);
  std::printf("training %s %s, %d channels, hidden %d/%d, %zu sequences, %lld parameters\n",
              cfg.bidirectional ? "BLSTM" : "LSTM", to_string(cfg.target).c_str(), cfg.channels,
              cfg.hidden1, cfg.hidden2, pool.size(), count_parameters(cfg.arch()));
  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "loss_log.jsonl");
  auto res = train(pool, cfg, [&](const EpochLog& l) {
    std::printf("epoch %d  train %.5f  val %.5f\n", l.epoch, l.mean_train_loss, l.mean_val_loss);
    std::fflush(stdout);
    log << epoch_log_to_json(l).dump() << "\n";
    log.flush();
  });
  res.checkpoint.config["best_val_epoch"] = res.best_val_epoch;
  res.checkpoint.config["deterministic"] = a.deterministic;
  save_checkpoint(res.checkpoint, a.out);
  std::printf("saved checkpoint to %s\n", a.out.c_str());
  return 0;
}

struct EnhanceArgs {
  std::string model, in, out, diagnostics;
  int threads = 1;
};

int run_enhance(const EnhanceArgs& a) {
  const auto ck = load_checkpoint(a.model);
  const auto noisy = read_wav(a.in);
  const auto r = enhance_utterance_detailed(noisy, ck, {a.threads, 16});
  write_wav(a.out, r.audio);
  if (!a.diagnostics.empty())
    write_json(a.diagnostics, {{"target", to_string(ck.arch().target)},
                               {"mu", r.mu},
                               {"mean_output", r.mean_output}});
  return 0;
}

struct EvalArgs {
  std::string model, manifest, out, summary;
  int threads = 1;
};

int run_eval(const EvalArgs& a) {
  const auto ck = load_checkpoint(a.model);
  const auto mixtures = read_dataset(a.manifest);
  std::vector<MetricRow> rows;
  for (const auto& m : mixtures) {
    const int r = m.spec.ref_channel;
    const auto& ref = m.clean.channel(static_cast<std::size_t>(r));
    const auto enhanced = enhance_utterance(m.noisy, ck, {a.threads, 16});
    const double base = sdr(ref, m.noisy.channel(static_cast<std::size_t>(r)));
    rows.push_back({m.spec.id, "sdr_unprocessed", base});
    rows.push_back({m.spec.id, "sdr_enhanced", sdr(ref, enhanced.channel(0))});
    rows.push_back({m.spec.id, "sdr_improvement", rows.back().value - base});
    if (m.spec.delays.size() == m.noisy.channels()) {
      std::vector<double> rel;
      for (double d : m.spec.delays) rel.push_back(d - m.spec.delays[static_cast<std::size_t>(r)]);
      const double ds = sdr(ref, delay_and_sum(m.noisy, rel).channel(0));
      rows.push_back({m.spec.id, "sdr_delay_and_sum", ds});
      rows.push_back({m.spec.id, "sdr_improvement_delay_and_sum", ds - base});
    }
  }
  write_results_csv(a.out, rows);
  const auto summary = summarize(rows);
  const std::string summary_path = a.summary.empty() ? fs::path(a.out).replace_extension(".json").string() : a.summary;
  write_json(summary_path, summary);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct DiagnoseArgs {
  std::string model, manifest, out;
  // params
  int channels = 4, hidden1 = 256, hidden2 = 128;
  bool bidirectional = true;
  std::string target = "sf";
  int stride = 8;
};

TrainingPool eval_pool(const Checkpoint& ck, const std::string& manifest, int stride) {
  TrainConfig cfg;
  cfg.channels = ck.arch().channels;
  cfg.target = ck.arch().target;
  cfg.ref_channel = ck.ref_channel;
  return build_training_pool(read_dataset(manifest), cfg, stride);
}

int run_diagnose(const std::string& what, const DiagnoseArgs& a) {
  if (what == "params") {
    std::printf("%lld\n", count_parameters({a.channels, a.bidirectional, a.hidden1, a.hidden2, parse_target(a.target)}));
    return 0;
  }
  if (a.model.empty() || a.manifest.empty())
    throw std::invalid_argument(what + " needs --model and --manifest");
  const auto ck = load_checkpoint(a.model);
  auto pool = eval_pool(ck, a.manifest, a.stride);
  if (what == "msecurve") {
    std::erase_if(pool.items, [&](const TrainingItem& it) { return it.length != pool.seq_len; });
    if (pool.empty())
      throw std::runtime_error("msecurve needs utterances of at least " + std::to_string(pool.seq_len) + " frames");
    const auto curve = mse_vs_timestep(ck, pool);
    if (!a.out.empty()) write_curve_csv(a.out, curve);
    else
      for (std::size_t t = 0; t < curve.size(); ++t) std::printf("%zu %.6g\n", t, curve[t]);
  } else if (what == "smoothness") {
    std::printf("%.6g\n", filter_smoothness(ck, pool));
  } else {
    throw std::invalid_argument("unknown diagnostic '" + what + "' (expected msecurve|smoothness|params)");
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  GradcheckOptions opt;
  opt.seed = seed;
  double worst = 0.0;
  for (const auto& r : run_gradcheck_suite(opt)) {
    std::printf("%-4s %-5s max_rel_error %.3e (worst block %s)\n", to_string(r.target).c_str(),
                r.bidirectional ? "blstm" : "lstm", r.max_rel_error, r.worst_block.c_str());
    worst = std::max(worst, r.max_rel_error);
  }
  std::printf("max relative error %.3e\n", worst);
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrow-band deep filtering for multichannel speech enhancement"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate synthetic multichannel speech or noise WAV files");
  synth->add_option("--kind", sa.kind, "speech | noise")->capture_default_str();
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.count, "Number of files")->capture_default_str();
  synth->add_option("--channels", sa.channels, "Microphone channels")->capture_default_str();
  synth->add_option("--seconds", sa.seconds, "Duration per file")->capture_default_str();
  synth->add_option("--family", sa.family, "Noise family a | b")->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();

  MixArgs ma;
  auto* mix = app.add_subcommand("mix", "Mix clean speech with noise at random SNRs");
  mix->add_option("--clean", ma.clean, "Directory of clean multichannel WAVs")->required();
  mix->add_option("--noise", ma.noise, "Directory of multichannel noise WAVs")->required();
  mix->add_option("--out", ma.out, "Output dataset directory")->required();
  mix->add_option("--count", ma.count)->capture_default_str();
  mix->add_option("--snr-min", ma.snr_min)->capture_default_str();
  mix->add_option("--snr-max", ma.snr_max)->capture_default_str();
  mix->add_option("--channels", ma.channels)->capture_default_str();
  mix->add_option("--ref", ma.ref, "Reference channel")->capture_default_str();
  mix->add_option("--split", ma.split, "train | test (selects the noise region)")->capture_default_str();
  mix->add_option("--seed", ma.seed)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model on a mixed dataset");
  tr->footer(
      "Defaults are the full-size setup (hidden 256/128, batch 512, 10 epochs, lr 1e-3).\n"
      "--desk-scale switches to hidden 32/16 and batch 64, which trains in minutes on one core.\n"
      "Precedence: command-line flags > --config JSON > defaults.");
  tr->add_option("--data", ta.data, "Dataset directory (with manifest.json)")->required();
  tr->add_option("--out", ta.out, "Checkpoint directory")->required();
  tr->add_option("--config", ta.config, "JSON file with configuration overrides");
  tr->add_flag("--desk-scale", ta.desk, "Use the reduced desk-scale defaults");
  tr->add_option("--target", ta.target, "mrm | cc | sf | ssf");
  tr->add_flag("--bidirectional,!--unidirectional", ta.bidirectional, "BLSTM (default) or LSTM");
  tr->add_option("--hidden1", ta.hidden1);
  tr->add_option("--hidden2", ta.hidden2);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch", ta.batch);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--lambda", ta.lambda, "Smoothing weight for ssf");
  tr->add_option("--seed", ta.seed);
  tr->add_option("--ref", ta.ref, "Reference channel (default: from the manifest)");
  tr->add_option("--bins-per-utterance", ta.bins, "Random bins per utterance (0 = all)");
  tr->add_option("--threads", ta.threads)->capture_default_str();
  tr->add_flag("--deterministic", ta.deterministic,
               "Runs are bit-reproducible for a given seed and any --threads; the flag is recorded in the checkpoint");

  EnhanceArgs ea;
  auto* en = app.add_subcommand("enhance", "Enhance one multichannel WAV file");
  en->add_option("--model", ea.model, "Checkpoint directory")->required();
  en->add_option("--in", ea.in, "Noisy multichannel WAV")->required();
  en->add_option("--out", ea.out, "Enhanced single-channel WAV")->required();
  en->add_option("--diagnostics", ea.diagnostics, "Write per-bin mu and mean output to this JSON");
  en->add_option("--threads", ea.threads)->capture_default_str();

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "SDR of enhanced, unprocessed and delay-and-sum signals");
  ev->add_option("--model", va.model)->required();
  ev->add_option("--manifest", va.manifest)->required();
  ev->add_option("--out", va.out, "Per-utterance results CSV")->required();
  ev->add_option("--summary", va.summary, "Summary JSON (default: next to the CSV)");
  ev->add_option("--threads", va.threads)->capture_default_str();

  DiagnoseArgs da;
  std::string diag_what;
  auto* dg = app.add_subcommand("diagnose", "msecurve | smoothness | params");
  dg->add_option("what", diag_what, "msecurve | smoothness | params")->required();
  dg->add_option("--model", da.model);
  dg->add_option("--manifest", da.manifest);
  dg->add_option("--out", da.out, "CSV output for msecurve");
  dg->add_option("--channels", da.channels)->capture_default_str();
  dg->add_option("--hidden1", da.hidden1)->capture_default_str();
  dg->add_option("--hidden2", da.hidden2)->capture_default_str();
  dg->add_flag("--bidirectional,!--unidirectional", da.bidirectional);
  dg->add_option("--target", da.target)->capture_default_str();
  dg->add_option("--stride", da.stride, "Frames between window starts for msecurve/smoothness (0 = training slicing)")
      ->capture_default_str();

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  gc->add_option("--seed", gc_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*mix) return run_mix(ma);
    if (*tr) return run_train(ta, *tr);
    if (*en) return run_enhance(ea);
    if (*ev) return run_eval(va);
    if (*dg) return run_diagnose(diag_what, da);
    if (*gc) return run_gradcheck(gc_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

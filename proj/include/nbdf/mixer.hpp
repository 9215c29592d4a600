#pragma once

// Mixture generation: SNR-controlled mixing on the reference channel,
// fractional-delay spatialization, a synthetic speech/noise source model for
// desk-scale experiments, and reproducible dataset construction with disjoint
// train/test noise regions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbdf/audio.hpp"
#include "nbdf/fft.hpp"
#include "nbdf/model.hpp"  // uniform01

namespace nbdf {

struct MixResult {
  AudioBuffer noisy;
  AudioBuffer scaled_noise;
  double gain = 1.0;
};

/// Scales noise so that the reference-channel SNR equals snr_db exactly,
/// then adds it to the clean signal on every channel.
inline MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db,
                            int ref_channel) {
  clean.validate();
  noise.validate();
  if (clean.channels() != noise.channels() || clean.length() != noise.length())
    throw std::invalid_argument("clean and noise must have equal channel counts and lengths");
  if (ref_channel < 0 || ref_channel >= static_cast<int>(clean.channels()))
    throw std::invalid_argument("reference channel out of range");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  const double ps = mean_power(clean.channel(static_cast<std::size_t>(ref_channel)));
  const double pu = mean_power(noise.channel(static_cast<std::size_t>(ref_channel)));
  if (ps <= 0.0) throw std::invalid_argument("clean reference channel has zero energy");
  if (pu <= 0.0) throw std::invalid_argument("noise reference channel has zero energy");
  MixResult r;
  r.gain = std::sqrt(ps / (pu * std::pow(10.0, snr_db / 10.0)));
  r.scaled_noise = noise.scaled(r.gain);
  r.noisy = clean;
  for (std::size_t c = 0; c < clean.channels(); ++c)
    for (std::size_t n = 0; n < clean.length(); ++n)
      r.noisy.samples[c][n] += r.scaled_noise.samples[c][n];
  return r;
}

/// Circular fractional delay by d samples via a linear phase on the
/// full-length transform (positive d delays).
inline std::vector<double> fractional_delay(const std::vector<double>& x, double delay) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (std::abs(delay) >= static_cast<double>(n))
    throw std::invalid_argument("delay must be smaller than the signal length");
  if (delay == 0.0) return x;
  auto spec = rfft(x);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) * delay / static_cast<double>(n);
    spec[k] *= cplx(std::cos(ang), std::sin(ang));
  }
  // irfft keeps only the real part of the Nyquist bin, i.e. X * cos(pi d).
  return irfft(spec, n);
}

inline AudioBuffer synth_multichannel(const AudioBuffer& source, const std::vector<double>& delays,
                                      const std::vector<double>& gains) {
  source.validate();
  if (source.channels() != 1) throw std::invalid_argument("source must be mono");
  if (delays.size() != gains.size() || delays.empty())
    throw std::invalid_argument("need one delay and one gain per output channel");
  AudioBuffer out;
  out.sample_rate = source.sample_rate;
  for (std::size_t i = 0; i < delays.size(); ++i) {
    auto ch = fractional_delay(source.channel(0), delays[i]);
    for (auto& v : ch) v *= gains[i];
    out.samples.push_back(std::move(ch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic sources

/// Non-stationary harmonic "speech": voiced segments of random pitch and
/// duration with smooth onsets and random silent gaps.
inline AudioBuffer synth_speech(std::size_t length, std::uint64_t seed, int rate = kSampleRate) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  std::vector<double> x(length, 0.0);
  double pos = uni(0.0, 0.25) * rate;
  while (pos < static_cast<double>(length)) {
    const double dur = uni(0.12, 0.45) * rate;
    const double f0 = uni(90.0, 260.0);
    const double glide = uni(-0.25, 0.25);  // relative pitch change over the segment
    const double amp = uni(0.3, 1.0);
    const double formant = uni(400.0, 2500.0);
    const int harmonics = static_cast<int>(3800.0 / f0);
    std::vector<double> hamp(static_cast<std::size_t>(harmonics));
    std::vector<double> hphase(static_cast<std::size_t>(harmonics));
    for (int h = 0; h < harmonics; ++h) {
      const double f = f0 * (h + 1);
      const double env = 1.0 / (1.0 + std::pow((f - formant) / 600.0, 2.0));
      hamp[static_cast<std::size_t>(h)] = (0.6 / (h + 1) + env) * uni(0.5, 1.0);
      hphase[static_cast<std::size_t>(h)] = uni(0.0, 2.0 * std::numbers::pi);
    }
    const auto start = static_cast<std::size_t>(pos);
    const auto stop = std::min(length, static_cast<std::size_t>(pos + dur));
    double phase = 0.0;
    for (std::size_t n = start; n < stop; ++n) {
      const double u = static_cast<double>(n - start) / dur;
      const double f = f0 * (1.0 + glide * u);
      phase += 2.0 * std::numbers::pi * f / rate;
      const double env = std::pow(std::sin(std::numbers::pi * u), 2.0);
      double v = 0.0;
      for (int h = 0; h < harmonics; ++h)
        v += hamp[static_cast<std::size_t>(h)] * std::sin((h + 1) * phase + hphase[static_cast<std::size_t>(h)]);
      x[n] += amp * env * v;
    }
    pos += dur + uni(0.05, 0.35) * rate;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (auto& v : x) v *= 0.5 / peak;
  return AudioBuffer::mono(std::move(x), rate);
}

enum class NoiseFamily { kA, kB };

inline NoiseFamily parse_noise_family(const std::string& s) {
  if (s == "a" || s == "A") return NoiseFamily::kA;
  if (s == "b" || s == "B") return NoiseFamily::kB;
  throw std::invalid_argument("unknown noise family '" + s + "' (expected a|b)");
}

/// Stationary multichannel noise, weakly correlated across channels.
/// Family A: low-pass (one-pole) coloring, 20% shared component.
/// Family B: high-frequency tilted (first difference) coloring plus a
/// band-limited hum, 40% shared component.
inline AudioBuffer synth_noise(NoiseFamily family, int channels, std::size_t length,
                               std::uint64_t seed, int rate = kSampleRate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double shared = family == NoiseFamily::kA ? 0.2 : 0.4;
  std::vector<double> common(length);
  for (auto& v : common) v = gauss(rng);
  AudioBuffer out(static_cast<std::size_t>(channels), length, rate);
  const double hum_f = 180.0 + 200.0 * uniform01(rng);
  for (int c = 0; c < channels; ++c) {
    std::vector<double> w(length);
    for (std::size_t n = 0; n < length; ++n)
      w[n] = std::sqrt(1.0 - shared) * gauss(rng) + std::sqrt(shared) * common[(n + 3 * c) % length];
    auto& y = out.samples[static_cast<std::size_t>(c)];
    if (family == NoiseFamily::kA) {
      double s = 0.0;
      for (std::size_t n = 0; n < length; ++n) y[n] = s = 0.9 * s + w[n];
    } else {
      for (std::size_t n = 0; n < length; ++n) {
        const double hum = 0.5 * std::sin(2.0 * std::numbers::pi * hum_f * n / rate + c);
        y[n] = w[n] - 0.7 * (n > 0 ? w[n - 1] : 0.0) + hum;
      }
    }
  }
  double p = 0.0;
  for (const auto& ch : out.samples) p += mean_power(ch);
  const double g = 0.1 / std::sqrt(p / channels);
  return out.scaled(g);
}

struct CleanSource {
  std::string id;
  AudioBuffer audio;            // multichannel speech image
  std::vector<double> delays;   // per-channel propagation delays if known (else empty)
};

struct NoiseSource {
  std::string id;
  AudioBuffer audio;
};

/// Synthetic spatialized speech: a linear-array-like delay profile with a
/// random inter-channel delay in [-1.5, 1.5] samples and small gain spread.
inline std::vector<CleanSource> synth_clean_corpus(int count, int channels, std::size_t length,
                                                   std::uint64_t seed) {
  std::vector<CleanSource> out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = rng();
    const double tau = -1.5 + 3.0 * uniform01(rng);
    std::vector<double> delays(static_cast<std::size_t>(channels)), gains(delays.size());
    for (int c = 0; c < channels; ++c) {
      delays[static_cast<std::size_t>(c)] = tau * c;
      gains[static_cast<std::size_t>(c)] = 0.85 + 0.3 * uniform01(rng);
    }
    out.push_back({"utt" + std::to_string(i), synth_multichannel(synth_speech(length, s), delays, gains),
                   delays});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { kTrain, kTest };

inline std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

/// Fraction of every noise source reserved for training; the rest is test-only.
inline constexpr double kTrainNoiseFraction = 0.6;

struct NoiseRegion {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline NoiseRegion noise_region(std::size_t noise_len, Split split) {
  const auto cut = static_cast<std::size_t>(std::floor(kTrainNoiseFraction * static_cast<double>(noise_len)));
  return split == Split::kTrain ? NoiseRegion{0, cut} : NoiseRegion{cut, noise_len};
}

struct MixSpec {
  std::string id;
  std::size_t clean_index = 0;
  std::size_t noise_index = 0;
  std::size_t noise_offset = 0;
  std::size_t length = 0;
  double snr_db = 0.0;
  int ref_channel = 0;
  Split split = Split::kTrain;
  std::vector<double> delays;
};

struct Mixture {
  MixSpec spec;
  AudioBuffer noisy;
  AudioBuffer clean;
  AudioBuffer noise;  // scaled noise image
};

struct DatasetOptions {
  int count = 0;
  double snr_min = -5.0;
  double snr_max = 10.0;
  int ref_channel = 0;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
};

inline std::vector<MixSpec> plan_dataset(const std::vector<CleanSource>& clean,
                                         const std::vector<NoiseSource>& noise,
                                         const DatasetOptions& opt) {
  if (opt.count < 0) throw std::invalid_argument("mixture count must be non-negative");
  std::vector<MixSpec> specs;
  if (opt.count == 0) return specs;
  if (clean.empty() || noise.empty()) throw std::invalid_argument("corpora must be non-empty");
  if (opt.snr_max < opt.snr_min) throw std::invalid_argument("snr_max < snr_min");
  std::mt19937_64 rng(opt.seed);
  for (int i = 0; i < opt.count; ++i) {
    MixSpec s;
    s.id = to_string(opt.split) + "_" + std::to_string(i);
    s.clean_index = static_cast<std::size_t>(i) % clean.size();
    s.noise_index = static_cast<std::size_t>(rng() % noise.size());
    s.length = clean[s.clean_index].audio.length();
    const auto region = noise_region(noise[s.noise_index].audio.length(), opt.split);
    if (region.end - region.begin < s.length)
      throw std::invalid_argument("noise source '" + noise[s.noise_index].id +
                                  "' is too short for a " + std::to_string(s.length) +
                                  "-sample segment in its " + to_string(opt.split) + " region");
    const std::size_t room = region.end - region.begin - s.length;
    s.noise_offset = region.begin + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(room + 1));
    s.noise_offset = std::min(s.noise_offset, region.begin + room);
    s.snr_db = opt.snr_min + (opt.snr_max - opt.snr_min) * uniform01(rng);
    s.ref_channel = opt.ref_channel;
    s.split = opt.split;
    s.delays = clean[s.clean_index].delays;
    specs.push_back(std::move(s));
  }
  return specs;
}

inline Mixture materialize(const MixSpec& s, const std::vector<CleanSource>& clean,
                           const std::vector<NoiseSource>& noise) {
  const auto& c = clean.at(s.clean_index).audio;
  const auto& u = noise.at(s.noise_index).audio;
  if (u.channels() < c.channels())
    throw std::invalid_argument("noise source has fewer channels than the clean source");
  AudioBuffer seg(c.channels(), s.length, c.sample_rate);
  for (std::size_t ch = 0; ch < c.channels(); ++ch)
    std::copy_n(u.samples[ch].begin() + static_cast<std::ptrdiff_t>(s.noise_offset), s.length,
                seg.samples[ch].begin());
  auto m = mix_at_snr(c, seg, s.snr_db, s.ref_channel);
  return {s, std::move(m.noisy), c, std::move(m.scaled_noise)};
}

inline std::vector<Mixture> build_dataset(const std::vector<CleanSource>& clean,
                                          const std::vector<NoiseSource>& noise,
                                          const DatasetOptions& opt) {
  std::vector<Mixture> out;
  for (const auto& s : plan_dataset(clean, noise, opt)) out.push_back(materialize(s, clean, noise));
  return out;
}

// ---------------------------------------------------------------------------
// On-disk datasets: <dir>/noisy/<id>.wav, <dir>/clean/<id>.wav, <dir>/manifest.json

inline nlohmann::json spec_to_json(const MixSpec& s) {
  return {{"id", s.id},
          {"clean_index", s.clean_index},
          {"noise_index", s.noise_index},
          {"noise_offset", s.noise_offset},
          {"length", s.length},
          {"snr_db", s.snr_db},
          {"ref_channel", s.ref_channel},
          {"split", to_string(s.split)},
          {"delays", s.delays},
          {"noisy", "noisy/" + s.id + ".wav"},
          {"clean", "clean/" + s.id + ".wav"}};
}

inline MixSpec spec_from_json(const nlohmann::json& j) {
  MixSpec s;
  s.id = j.at("id").get<std::string>();
  s.clean_index = j.value("clean_index", std::size_t{0});
  s.noise_index = j.value("noise_index", std::size_t{0});
  s.noise_offset = j.value("noise_offset", std::size_t{0});
  s.length = j.value("length", std::size_t{0});
  s.snr_db = j.at("snr_db").get<double>();
  s.ref_channel = j.value("ref_channel", 0);
  s.split = j.value("split", std::string("train")) == "test" ? Split::kTest : Split::kTrain;
  s.delays = j.value("delays", std::vector<double>{});
  return s;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<Mixture>& mixtures,
                          const nlohmann::json& provenance = nlohmann::json::object()) {
  std::filesystem::create_directories(dir / "noisy");
  std::filesystem::create_directories(dir / "clean");
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& m : mixtures) {
    write_wav((dir / "noisy" / (m.spec.id + ".wav")).string(), m.noisy);
    write_wav((dir / "clean" / (m.spec.id + ".wav")).string(), m.clean);
    entries.push_back(spec_to_json(m.spec));
  }
  nlohmann::json manifest = provenance;
  manifest["entries"] = entries;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
}

/// Loads noisy/clean pairs listed in a manifest (paths relative to it).
inline std::vector<Mixture> read_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  const auto manifest = nlohmann::json::parse(is);
  const auto base = manifest_path.parent_path();
  std::vector<Mixture> out;
  for (const auto& e : manifest.at("entries")) {
    Mixture m;
    m.spec = spec_from_json(e);
    m.noisy = read_wav((base / e.at("noisy").get<std::string>()).string());
    m.clean = read_wav((base / e.at("clean").get<std::string>()).string());
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace nbdf

#pragma once

// Multichannel audio buffers and RIFF/WAVE I/O (16-bit PCM, 32-bit float).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbdf {

inline constexpr int kSampleRate = 16000;
inline constexpr int kMaxWavChannels = 8;

struct AudioBuffer {
  std::vector<std::vector<double>> samples;  // [channel][sample]
  int sample_rate = kSampleRate;

  AudioBuffer() = default;
  AudioBuffer(std::size_t channels, std::size_t length, int rate = kSampleRate)
      : samples(channels, std::vector<double>(length, 0.0)), sample_rate(rate) {}

  static AudioBuffer mono(std::vector<double> x, int rate = kSampleRate) {
    AudioBuffer b;
    b.samples.push_back(std::move(x));
    b.sample_rate = rate;
    return b;
  }

  std::size_t channels() const { return samples.size(); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }

  const std::vector<double>& channel(std::size_t i) const { return samples.at(i); }
  std::vector<double>& channel(std::size_t i) { return samples.at(i); }

  /// Throws std::invalid_argument unless the buffer is well-formed.
  void validate() const {
    if (samples.empty()) throw std::invalid_argument("audio buffer has no channels");
    if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
    for (const auto& ch : samples)
      if (ch.size() != samples[0].size())
        throw std::invalid_argument("audio channels differ in length");
  }

  AudioBuffer select(const std::vector<int>& idx) const {
    AudioBuffer out;
    out.sample_rate = sample_rate;
    for (int i : idx) out.samples.push_back(samples.at(static_cast<std::size_t>(i)));
    return out;
  }

  AudioBuffer scaled(double c) const {
    AudioBuffer out = *this;
    for (auto& ch : out.samples)
      for (auto& v : ch) v *= c;
    return out;
  }
};

inline double mean_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

enum class WavFormat { kPcm16, kFloat32 };

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace detail

inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(path + ": not a RIFF/WAVE file");

  std::uint16_t fmt_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = detail::read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      fmt_tag = detail::read_le<std::uint16_t>(buf, body);
      channels = detail::read_le<std::uint16_t>(buf, body + 2);
      rate = detail::read_le<std::uint32_t>(buf, body + 4);
      bits = detail::read_le<std::uint16_t>(buf, body + 14);
      if (fmt_tag == 0xFFFE && len >= 26)  // WAVE_FORMAT_EXTENSIBLE
        fmt_tag = detail::read_le<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || data_pos == 0) throw std::runtime_error(path + ": missing fmt or data chunk");
  if (channels < 1 || channels > kMaxWavChannels)
    throw std::runtime_error(path + ": unsupported channel count " + std::to_string(channels));
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw std::runtime_error(path + ": sample rate " + std::to_string(rate) +
                             " Hz is not supported (need 16000 Hz)");
  const bool pcm16 = fmt_tag == 1 && bits == 16;
  const bool f32 = fmt_tag == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw std::runtime_error(path + ": only 16-bit PCM and 32-bit float WAV are supported");

  const std::size_t bytes = bits / 8;
  const std::size_t frames = data_len / (bytes * channels);
  AudioBuffer out(channels, frames, static_cast<int>(rate));
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t p = data_pos + (n * channels + c) * bytes;
      out.samples[c][n] = pcm16 ? detail::read_le<std::int16_t>(buf, p) / 32768.0
                                : static_cast<double>(detail::read_le<float>(buf, p));
    }
  }
  return out;
}

inline void write_wav(const std::string& path, const AudioBuffer& audio,
                      WavFormat format = WavFormat::kFloat32) {
  audio.validate();
  if (audio.channels() > static_cast<std::size_t>(kMaxWavChannels))
    throw std::invalid_argument("WAV output supports at most 8 channels");
  if (audio.sample_rate != kSampleRate)
    throw std::invalid_argument("WAV output requires 16000 Hz audio");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write WAV file: " + path);

  const auto channels = static_cast<std::uint16_t>(audio.channels());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::kPcm16 ? 1 : 3;
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_len = static_cast<std::uint32_t>(audio.length() * block);

  os.write("RIFF", 4);
  detail::write_le<std::uint32_t>(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_le<std::uint32_t>(os, 16);
  detail::write_le<std::uint16_t>(os, tag);
  detail::write_le<std::uint16_t>(os, channels);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate) * block);
  detail::write_le<std::uint16_t>(os, block);
  detail::write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  detail::write_le<std::uint32_t>(os, data_len);
  for (std::size_t n = 0; n < audio.length(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = audio.samples[c][n];
      if (format == WavFormat::kPcm16) {
        const double q = std::round(std::clamp(v, -1.0, 32767.0 / 32768.0) * 32768.0);
        detail::write_le<std::int16_t>(os, static_cast<std::int16_t>(q));
      } else {
        detail::write_le<float>(os, static_cast<float>(v));
      }
    }
  }
  if (!os) throw std::runtime_error("failed writing WAV file: " + path);
}

}  // namespace nbdf

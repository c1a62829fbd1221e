// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "aedit/errors.hpp"
#include "aedit/spectral_io.hpp"

namespace aedit {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
  if (target_rate <= 0) throw ValidationError("target sample rate must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    auto size = read_le<std::uint32_t>(bytes.data() + pos + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (avail < 16) throw IoError(path.string() + ": short fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible && avail >= 26)
        format = read_le<std::uint16_t>(bytes.data() + body + 24);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0 || data == nullptr)
    throw IoError(path.string() + ": missing fmt or data chunk");
  bool pcm16 = format == kFormatPcm && bits == 16;
  bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw IoError(path.string() + ": only 16-bit PCM and 32-bit float WAV are supported");

  std::size_t width = bits / 8;
  std::size_t frames = data_size / (width * channels);
  if (frames == 0) throw ValidationError(path.string() + ": zero-length audio");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data + (f * channels + c) * width;
      acc += pcm16 ? read_le<std::int16_t>(p) / 32768.0 : static_cast<double>(read_le<float>(p));
    }
    clip.samples[f] = acc / channels;
  }
  clip.validate();
  return clip.sample_rate == target_rate ? clip : resample(clip, target_rate);
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  clip.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const bool pcm = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * bits / 8);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * bits / 8);
  write_le<std::uint16_t>(out, bits / 8);
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : clip.samples) {
    if (pcm) {
      double c = std::clamp(s, -1.0, 1.0) * 32767.0;
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c)));
    } else {
      write_le<float>(out, static_cast<float>(s));
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  clip.validate();
  if (target_rate <= 0) throw ValidationError("target sample rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  constexpr double kZeroCrossings = 32.0;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<long>(clip.samples.size());
  const auto n_out = static_cast<std::size_t>(std::llround(n_in * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.assign(std::max<std::size_t>(n_out, 1), 0.0);
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    double p = static_cast<double>(n) / ratio;
    long lo = std::max<long>(0, static_cast<long>(std::ceil(p - half_width)));
    long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(p + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      double x = p - static_cast<double>(k);
      double arg = M_PI * cutoff * x;
      double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      double win = 0.5 + 0.5 * std::cos(M_PI * x / half_width);
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out.samples[n] = acc;
  }
  return out;
}

}  // namespace aedit

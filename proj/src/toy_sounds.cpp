// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/toy_sounds.hpp"

#include <algorithm>
#include <cmath>

#include "aedit/errors.hpp"
#include "aedit/rng.hpp"

namespace aedit {

const std::vector<SoundClass>& sound_classes() {
  static const std::vector<SoundClass> classes = {
      {"siren", {"siren", "sirens", "wailing", "alarm"}, 500, 1400, Texture::tonal_sweep},
      {"dog", {"dog", "dogs", "bark", "barks", "barking"}, 450, 2200, Texture::harmonic_bursts},
      {"knock", {"knocking", "knock", "knocks", "door"}, 120, 700, Texture::clicks},
      {"gunshot", {"gunshots", "gunshot", "gun", "shots"}, 400, 5000, Texture::noise_bursts},
      {"rain", {"rain", "raining", "rainfall", "drizzle"}, 3800, 7800, Texture::steady_noise},
      {"engine", {"engine", "motor", "idling", "truck"}, 50, 450, Texture::steady_harmonic},
      {"bird", {"birds", "bird", "chirping", "tweeting"}, 2800, 5200, Texture::chirps},
      {"phone", {"phone", "ringing", "telephone", "ring"}, 1300, 1900, Texture::pulsed_tones},
  };
  return classes;
}

const SoundClass* find_sound_class(std::string_view word) {
  for (const auto& c : sound_classes())
    if (std::find(c.words.begin(), c.words.end(), word) != c.words.end()) return &c;
  return nullptr;
}

double duration_for_frames(std::size_t n_frames, const MelConfig& cfg) {
  return static_cast<double>(n_frames - 1) * cfg.hop / cfg.sample_rate;
}

namespace {

struct Renderer {
  std::vector<double>& out;
  int rate;
  Rng& rng;

  std::size_t n() const { return out.size(); }

  void band_noise(double lo, double hi, double amp, std::size_t begin, std::size_t end, double decay_s) {
    constexpr int kPartials = 32;
    for (int k = 0; k < kPartials; ++k) {
      const double f = lo + (hi - lo) * rng.uniform();
      const double phase = 2.0 * M_PI * rng.uniform();
      for (std::size_t i = begin; i < std::min(end, n()); ++i) {
        const double t = static_cast<double>(i - begin) / rate;
        const double env = decay_s > 0 ? std::exp(-t / decay_s) : 1.0;
        out[i] += amp / std::sqrt(kPartials) * env * std::sin(2.0 * M_PI * f * t + phase);
      }
    }
  }

  void harmonic(double f0, double hi, double amp, std::size_t begin, std::size_t end, double decay_s) {
    for (int h = 1; h * f0 <= hi; ++h) {
      const double a = amp / h;
      for (std::size_t i = begin; i < std::min(end, n()); ++i) {
        const double t = static_cast<double>(i - begin) / rate;
        const double env = decay_s > 0 ? std::exp(-t / decay_s) : 1.0;
        out[i] += a * env * std::sin(2.0 * M_PI * h * f0 * t);
      }
    }
  }

  std::size_t at(double seconds) const { return static_cast<std::size_t>(std::max(0.0, seconds) * rate); }
};

void render(const SoundClass& c, Renderer& r, double duration) {
  Rng& rng = r.rng;
  const double mid = 0.5 * (c.lo_hz + c.hi_hz), half = 0.5 * (c.hi_hz - c.lo_hz);
  switch (c.texture) {
    case Texture::tonal_sweep: {
      const double fc = mid + 0.1 * half * (rng.uniform() - 0.5), dev = 0.7 * half;
      const double rate_hz = 2.0 + 2.0 * rng.uniform(), phase0 = 2.0 * M_PI * rng.uniform();
      double phase = 0.0;
      for (std::size_t i = 0; i < r.n(); ++i) {
        const double t = static_cast<double>(i) / r.rate;
        phase += 2.0 * M_PI * (fc + dev * std::sin(2.0 * M_PI * rate_hz * t + phase0)) / r.rate;
        r.out[i] += 0.4 * std::sin(phase);
      }
      break;
    }
    case Texture::harmonic_bursts: {
      const int bursts = 2 + rng.uniform_int(0, 1);
      for (int b = 0; b < bursts; ++b) {
        const double start = duration * (b + 0.15 * rng.uniform()) / bursts;
        const double f0 = c.lo_hz + 0.3 * (c.hi_hz - c.lo_hz) * rng.uniform();
        r.harmonic(f0, c.hi_hz, 0.5, r.at(start), r.at(start + 0.12), 0.06);
      }
      break;
    }
    case Texture::clicks: {
      const int clicks = 3 + rng.uniform_int(0, 2);
      for (int k = 0; k < clicks; ++k) {
        const double start = duration * (k + 0.3 * rng.uniform()) / clicks;
        r.band_noise(c.lo_hz, c.hi_hz, 1.0, r.at(start), r.at(start + 0.05), 0.012);
      }
      break;
    }
    case Texture::noise_bursts: {
      const int bursts = 1 + rng.uniform_int(0, 1);
      for (int b = 0; b < bursts; ++b) {
        const double start = duration * (b + 0.4 * rng.uniform()) / bursts;
        r.band_noise(c.lo_hz, c.hi_hz, 1.2, r.at(start), r.at(start + 0.25), 0.07);
      }
      break;
    }
    case Texture::steady_noise:
      r.band_noise(c.lo_hz, c.hi_hz, 0.35, 0, r.n(), 0.0);
      break;
    case Texture::steady_harmonic:
      r.harmonic(c.lo_hz + 40.0 * rng.uniform(), c.hi_hz, 0.4, 0, r.n(), 0.0);
      break;
    case Texture::chirps: {
      const int chirps = 3 + rng.uniform_int(0, 2);
      for (int k = 0; k < chirps; ++k) {
        const double start = duration * (k + 0.4 * rng.uniform()) / chirps;
        const std::size_t b = r.at(start), e = std::min(r.at(start + 0.06), r.n());
        double phase = 0.0;
        for (std::size_t i = b; i < e; ++i) {
          const double frac = static_cast<double>(i - b) / std::max<std::size_t>(e - b, 1);
          phase += 2.0 * M_PI * (c.lo_hz + (c.hi_hz - c.lo_hz) * frac) / r.rate;
          r.out[i] += 0.35 * std::sin(M_PI * frac) * std::sin(phase);
        }
      }
      break;
    }
    case Texture::pulsed_tones: {
      const double gate_hz = 8.0 + 4.0 * rng.uniform();
      for (std::size_t i = 0; i < r.n(); ++i) {
        const double t = static_cast<double>(i) / r.rate;
        const double gate = std::sin(2.0 * M_PI * gate_hz * t) > 0 ? 1.0 : 0.0;
        r.out[i] += 0.2 * gate * (std::sin(2.0 * M_PI * (c.lo_hz + 100) * t) + std::sin(2.0 * M_PI * (c.hi_hz - 100) * t));
      }
      break;
    }
  }
}

}  // namespace

AudioClip synthesize_scene(const std::vector<const SoundClass*>& classes, double duration, int sample_rate,
                           std::uint64_t seed) {
  if (!(duration > 0.0) || sample_rate <= 0) throw ValidationError("synthesize_scene: bad duration or rate");
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(static_cast<std::size_t>(std::llround(duration * sample_rate)), 0.0);
  Rng rng(seed);
  Renderer r{clip.samples, sample_rate, rng};
  for (const SoundClass* c : classes) {
    if (c == nullptr) throw ValidationError("synthesize_scene: null sound class");
    render(*c, r, duration);
  }
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : clip.samples) s *= 0.5 / peak;
  return clip;
}

}  // namespace aedit

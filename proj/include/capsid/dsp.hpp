#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "capsid/audio.hpp"

namespace capsid {

struct FeatureConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_fft = 0;  // 0 = smallest power of two >= frame length
  std::size_t n_mel_filters = 40;
  std::size_t n_cepstra = 20;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // 0 = sample_rate / 2
  std::size_t target_frames = 300;
  double pre_emphasis = 0.97;
  std::size_t delta_window = 2;

  std::size_t frame_samples(std::uint32_t rate_hz) const;
  std::size_t hop_samples(std::uint32_t rate_hz) const;
  std::size_t fft_size(std::uint32_t rate_hz) const;
  double mel_fmax(std::uint32_t rate_hz) const;

  // Throws ConfigError listing every violated constraint for this rate.
  void validate(std::uint32_t rate_hz) const;
};

struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

// Fixed-geometry feature map for one clip: n_cepstra rows of cepstra
// stacked on n_cepstra rows of their time derivatives, one column per
// frame, zero-padded (or truncated) to a fixed number of columns.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t n_valid_frames = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

double mel_of_hz(double f_hz);
double hz_of_mel(double mel);

// Windowed-sinc (64-tap) rate conversion; identical samples when the rates
// already match. DC gain is exactly 1.
AudioClip resample(const AudioClip& clip, std::uint32_t target_hz);

// Pre-emphasized, Hamming-windowed frames of frame_ms every hop_ms:
// floor((L - W)/H) + 1 rows of W samples. Throws DataError when the clip is
// shorter than one frame.
RealMatrix frame_signal(const AudioClip& clip, const FeatureConfig& cfg);

// |DFT_k|^2 / n_fft for k = 0..n_fft/2 of each zero-padded row.
RealMatrix power_spectrum(const RealMatrix& frames, std::size_t n_fft);

// Triangular filters with apex 1 and centers equally spaced on the mel
// scale; throws ConfigError when the FFT resolution cannot separate
// adjacent filter centers.
RealMatrix mel_filterbank(const FeatureConfig& cfg, std::uint32_t rate_hz);

// ln(max(filters . power_row, 1e-10)) per frame and filter.
RealMatrix log_mel(const RealMatrix& powspec, const RealMatrix& filters);

// Orthonormal DCT-II of each row, keeping coefficients 0..n_cepstra-1.
RealMatrix dct_cepstra(const RealMatrix& logmel, std::size_t n_cepstra);

// Regression slope over +-delta_window frames, boundary frames repeated.
RealMatrix delta_features(const RealMatrix& mfcc, std::size_t delta_window);

// The full chain: frames -> power spectrum -> mel -> log -> DCT -> deltas,
// assembled coefficient-major and padded to cfg.target_frames columns.
FeatureMatrix extract_features(const AudioClip& clip,
                               const FeatureConfig& cfg);

// Additive white Gaussian noise with RMS(signal)/RMS(noise) equal to
// amplitude_ratio exactly (before the final clip to [-1, 1]).
AudioClip add_noise(const AudioClip& clip, double amplitude_ratio,
                    std::uint64_t seed);

}  // namespace capsid

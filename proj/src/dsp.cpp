#include "capsid/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "capsid/errors.hpp"
#include "capsid/rng.hpp"

namespace capsid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p *= 2;
  return p;
}

}  // namespace

std::size_t FeatureConfig::frame_samples(std::uint32_t rate_hz) const {
  return static_cast<std::size_t>(std::llround(frame_ms * rate_hz / 1000.0));
}

std::size_t FeatureConfig::hop_samples(std::uint32_t rate_hz) const {
  return static_cast<std::size_t>(std::llround(hop_ms * rate_hz / 1000.0));
}

std::size_t FeatureConfig::fft_size(std::uint32_t rate_hz) const {
  return n_fft != 0 ? n_fft : next_power_of_two(frame_samples(rate_hz));
}

double FeatureConfig::mel_fmax(std::uint32_t rate_hz) const {
  return fmax_hz != 0.0 ? fmax_hz : rate_hz / 2.0;
}

void FeatureConfig::validate(std::uint32_t rate_hz) const {
  std::ostringstream problems;
  auto complain = [&](const std::string& p) {
    if (problems.tellp() > 0) problems << "; ";
    problems << p;
  };
  if (!(hop_ms > 0.0)) complain("hop_ms must be positive");
  if (!(frame_ms > hop_ms)) complain("frame_ms must exceed hop_ms");
  if (n_mel_filters == 0) complain("n_mel_filters must be positive");
  if (n_cepstra == 0) complain("n_cepstra must be positive");
  if (n_cepstra > n_mel_filters) {
    complain("n_cepstra must not exceed n_mel_filters");
  }
  if (target_frames == 0) complain("target_frames must be positive");
  if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0)) {
    complain("pre_emphasis must lie in [0, 1)");
  }
  if (delta_window == 0) complain("delta_window must be positive");
  if (n_fft != 0) {
    if (!is_power_of_two(n_fft)) complain("n_fft must be a power of two");
    if (rate_hz != 0 && n_fft < frame_samples(rate_hz)) {
      complain("n_fft must be at least the frame length of " +
               std::to_string(frame_samples(rate_hz)) + " samples");
    }
  }
  if (fmin_hz < 0.0) complain("fmin_hz must be non-negative");
  if (rate_hz != 0 && mel_fmax(rate_hz) > rate_hz / 2.0 + 1e-9) {
    complain("fmax_hz must not exceed half the sample rate");
  }
  if (fmax_hz != 0.0 && fmax_hz <= fmin_hz) {
    complain("fmax_hz must exceed fmin_hz");
  }
  if (problems.tellp() > 0) {
    throw ConfigError("invalid feature configuration: " + problems.str());
  }
}

double mel_of_hz(double f_hz) {
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double hz_of_mel(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

AudioClip resample(const AudioClip& clip, std::uint32_t target_hz) {
  if (target_hz == 0) throw ConfigError("resample target rate must be positive");
  if (clip.sample_rate_hz == 0) {
    throw ContractError("clip has zero sample rate");
  }
  if (target_hz == clip.sample_rate_hz) return clip;

  AudioClip out = clip;
  out.sample_rate_hz = target_hz;
  const double src = clip.sample_rate_hz;
  const double dst = target_hz;
  const std::size_t n_in = clip.samples.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * dst / src));
  out.samples.assign(n_out, 0.0);
  if (n_in == 0) return out;

  constexpr int kHalfTaps = 32;
  // Cut off below the narrower Nyquist band; the per-sample tap-sum
  // normalization keeps DC gain at exactly 1.
  const double cutoff = std::min(1.0, dst / src);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = static_cast<double>(i) * src / dst;
    const long long base = static_cast<long long>(std::floor(center));
    double num = 0.0;
    double den = 0.0;
    for (long long j = base - kHalfTaps + 1; j <= base + kHalfTaps; ++j) {
      if (j < 0 || j >= static_cast<long long>(n_in)) continue;
      const double u = static_cast<double>(j) - center;
      double h;
      if (u == 0.0) {
        h = cutoff;
      } else {
        h = cutoff * std::sin(kPi * cutoff * u) / (kPi * cutoff * u);
      }
      const double x = u / kHalfTaps;  // in (-1, 1)
      const double window = 0.42 + 0.5 * std::cos(kPi * x) +
                            0.08 * std::cos(2.0 * kPi * x);
      h *= window;
      num += h * clip.samples[static_cast<std::size_t>(j)];
      den += h;
    }
    out.samples[i] = den != 0.0 ? num / den : 0.0;
  }
  return out;
}

RealMatrix frame_signal(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate(clip.sample_rate_hz);
  const std::size_t w = cfg.frame_samples(clip.sample_rate_hz);
  const std::size_t h = cfg.hop_samples(clip.sample_rate_hz);
  if (clip.samples.size() < w) {
    throw DataError("clip of " + std::to_string(clip.samples.size()) +
                    " samples is shorter than one " + std::to_string(w) +
                    "-sample frame");
  }

  std::vector<double> emphasized(clip.samples.size());
  emphasized[0] = clip.samples[0];
  for (std::size_t t = 1; t < clip.samples.size(); ++t) {
    emphasized[t] = clip.samples[t] - cfg.pre_emphasis * clip.samples[t - 1];
  }

  std::vector<double> window(w, 1.0);
  if (w >= 2) {
    for (std::size_t i = 0; i < w; ++i) {
      window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                         static_cast<double>(w - 1));
    }
  }

  const std::size_t n_frames = (clip.samples.size() - w) / h + 1;
  RealMatrix frames(n_frames, w);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* src = emphasized.data() + f * h;
    double* dst = &frames.at(f, 0);
    for (std::size_t i = 0; i < w; ++i) dst[i] = src[i] * window[i];
  }
  return frames;
}

namespace {

// Iterative radix-2 complex FFT, decimation in time.
void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(angle);
    const double wi = std::sin(angle);
    for (std::size_t start = 0; start < n; start += len) {
      double cr = 1.0;
      double ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = start + k;
        const std::size_t b = start + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace

RealMatrix power_spectrum(const RealMatrix& frames, std::size_t n_fft) {
  if (!is_power_of_two(n_fft)) {
    throw ConfigError("n_fft of " + std::to_string(n_fft) +
                      " is not a power of two");
  }
  if (n_fft < frames.cols) {
    throw ConfigError("n_fft of " + std::to_string(n_fft) +
                      " is smaller than the frame length of " +
                      std::to_string(frames.cols));
  }
  const std::size_t n_bins = n_fft / 2 + 1;
  RealMatrix power(frames.rows, n_bins);
  std::vector<double> re(n_fft), im(n_fft);
  for (std::size_t f = 0; f < frames.rows; ++f) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (std::size_t i = 0; i < frames.cols; ++i) re[i] = frames.at(f, i);
    fft_inplace(re, im);
    for (std::size_t k = 0; k < n_bins; ++k) {
      power.at(f, k) = (re[k] * re[k] + im[k] * im[k]) /
                       static_cast<double>(n_fft);
    }
  }
  return power;
}

RealMatrix mel_filterbank(const FeatureConfig& cfg, std::uint32_t rate_hz) {
  if (rate_hz == 0) throw ContractError("zero sample rate");
  const std::size_t n_fft = cfg.fft_size(rate_hz);
  const std::size_t n_mel = cfg.n_mel_filters;
  const std::size_t n_bins = n_fft / 2 + 1;
  const double fmin = cfg.fmin_hz;
  const double fmax = cfg.mel_fmax(rate_hz);
  if (fmax > rate_hz / 2.0 + 1e-9) {
    throw ConfigError("fmax_hz exceeds half the sample rate");
  }

  const double mel_lo = mel_of_hz(fmin);
  const double mel_hi = mel_of_hz(fmax);
  std::vector<double> edge_hz(n_mel + 2);
  for (std::size_t i = 0; i < edge_hz.size(); ++i) {
    edge_hz[i] = hz_of_mel(mel_lo + (mel_hi - mel_lo) *
                                        static_cast<double>(i) /
                                        static_cast<double>(n_mel + 1));
  }
  for (std::size_t m = 0; m + 1 < n_mel; ++m) {
    const auto bin = [&](double f) {
      return std::llround(f * static_cast<double>(n_fft) / rate_hz);
    };
    if (bin(edge_hz[m + 1]) == bin(edge_hz[m + 2])) {
      throw ConfigError(
          std::to_string(n_mel) + " mel filters need more FFT resolution "
          "than " + std::to_string(n_fft) + " points at " +
          std::to_string(rate_hz) + " Hz: adjacent centers collide");
    }
  }

  RealMatrix bank(n_mel, n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double f = static_cast<double>(k) * rate_hz /
                     static_cast<double>(n_fft);
    for (std::size_t m = 0; m < n_mel; ++m) {
      const double rising = (f - edge_hz[m]) / (edge_hz[m + 1] - edge_hz[m]);
      const double falling =
          (edge_hz[m + 2] - f) / (edge_hz[m + 2] - edge_hz[m + 1]);
      bank.at(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return bank;
}

RealMatrix log_mel(const RealMatrix& powspec, const RealMatrix& filters) {
  if (powspec.cols != filters.cols) {
    throw ShapeError("power spectrum has " + std::to_string(powspec.cols) +
                     " bins but the filterbank expects " +
                     std::to_string(filters.cols));
  }
  RealMatrix out(powspec.rows, filters.rows);
  for (std::size_t f = 0; f < powspec.rows; ++f) {
    for (std::size_t m = 0; m < filters.rows; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < powspec.cols; ++k) {
        acc += filters.at(m, k) * powspec.at(f, k);
      }
      out.at(f, m) = std::log(std::max(acc, kLogFloor));
    }
  }
  return out;
}

RealMatrix dct_cepstra(const RealMatrix& logmel, std::size_t n_cepstra) {
  const std::size_t n = logmel.cols;
  if (n_cepstra > n) {
    throw ConfigError("cannot keep " + std::to_string(n_cepstra) +
                      " cepstra from " + std::to_string(n) + " filters");
  }
  RealMatrix basis(n_cepstra, n);
  for (std::size_t k = 0; k < n_cepstra; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(n))
                                : std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      basis.at(k, i) = scale * std::cos(kPi * (2.0 * static_cast<double>(i) +
                                               1.0) *
                                        static_cast<double>(k) /
                                        (2.0 * static_cast<double>(n)));
    }
  }
  RealMatrix out(logmel.rows, n_cepstra);
  for (std::size_t f = 0; f < logmel.rows; ++f) {
    for (std::size_t k = 0; k < n_cepstra; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += basis.at(k, i) * logmel.at(f, i);
      }
      out.at(f, k) = acc;
    }
  }
  return out;
}

RealMatrix delta_features(const RealMatrix& mfcc, std::size_t delta_window) {
  if (delta_window == 0) throw ConfigError("delta_window must be positive");
  if (mfcc.rows < 2) {
    throw DataError("delta features need at least 2 frames, got " +
                    std::to_string(mfcc.rows));
  }
  double denom = 0.0;
  for (std::size_t n = 1; n <= delta_window; ++n) {
    denom += static_cast<double>(n * n);
  }
  denom *= 2.0;

  RealMatrix out(mfcc.rows, mfcc.cols);
  const std::size_t last = mfcc.rows - 1;
  for (std::size_t t = 0; t < mfcc.rows; ++t) {
    for (std::size_t c = 0; c < mfcc.cols; ++c) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= delta_window; ++n) {
        const std::size_t ahead = std::min(t + n, last);
        const std::size_t behind = t >= n ? t - n : 0;
        acc += static_cast<double>(n) *
               (mfcc.at(ahead, c) - mfcc.at(behind, c));
      }
      out.at(t, c) = acc / denom;
    }
  }
  return out;
}

FeatureMatrix extract_features(const AudioClip& clip,
                               const FeatureConfig& cfg) {
  cfg.validate(clip.sample_rate_hz);
  const RealMatrix frames = frame_signal(clip, cfg);
  const RealMatrix power = power_spectrum(frames,
                                          cfg.fft_size(clip.sample_rate_hz));
  const RealMatrix bank = mel_filterbank(cfg, clip.sample_rate_hz);
  const RealMatrix logs = log_mel(power, bank);
  RealMatrix mfcc = dct_cepstra(logs, cfg.n_cepstra);

  const std::size_t n_valid = std::min(mfcc.rows, cfg.target_frames);
  if (n_valid < mfcc.rows) {
    RealMatrix cut(n_valid, mfcc.cols);
    std::copy(mfcc.v.begin(), mfcc.v.begin() + n_valid * mfcc.cols,
              cut.v.begin());
    mfcc = std::move(cut);
  }
  const RealMatrix deltas = delta_features(mfcc, cfg.delta_window);

  FeatureMatrix out;
  out.rows = 2 * cfg.n_cepstra;
  out.cols = cfg.target_frames;
  out.n_valid_frames = n_valid;
  out.values.assign(out.rows * out.cols, 0.0);
  for (std::size_t t = 0; t < n_valid; ++t) {
    for (std::size_t c = 0; c < cfg.n_cepstra; ++c) {
      out.values[c * out.cols + t] = mfcc.at(t, c);
      out.values[(cfg.n_cepstra + c) * out.cols + t] = deltas.at(t, c);
    }
  }
  return out;
}

AudioClip add_noise(const AudioClip& clip, double amplitude_ratio,
                    std::uint64_t seed) {
  if (!(amplitude_ratio > 0.0)) {
    throw ConfigError("noise amplitude ratio must be positive");
  }
  if (clip.samples.empty()) throw DataError("cannot add noise to an empty clip");

  double signal_sq = 0.0;
  for (double s : clip.samples) signal_sq += s * s;
  const double signal_rms = std::sqrt(signal_sq / clip.samples.size());
  if (signal_rms == 0.0) {
    throw DataError("clip has zero RMS; the speech-to-noise ratio is "
                    "undefined");
  }

  Rng rng(sub_seed(seed, "noise"));
  std::vector<double> noise(clip.samples.size());
  double noise_sq = 0.0;
  for (double& n : noise) {
    n = rng.next_gaussian();
    noise_sq += n * n;
  }
  const double realized_rms = std::sqrt(noise_sq / noise.size());
  const double target_rms = signal_rms / amplitude_ratio;
  const double gain = realized_rms > 0.0 ? target_rms / realized_rms : 0.0;

  AudioClip out = clip;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = std::clamp(out.samples[i] + gain * noise[i], -1.0, 1.0);
  }
  return out;
}

}  // namespace capsid

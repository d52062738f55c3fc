#include "reference_dsp.hpp"

#include <cmath>

namespace refdsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double ref_mel_of_hz(double f_hz) {
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double ref_hz_of_mel(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> ref_pre_emphasis(const std::vector<double>& x, double a) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) y[t] = x[t] - a * x[t - 1];
  return y;
}

std::vector<double> ref_hamming(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

std::vector<std::vector<double>> ref_frames(const std::vector<double>& x,
                                            std::size_t w, std::size_t h) {
  std::vector<std::vector<double>> frames;
  if (x.size() < w) return frames;
  const std::size_t n_frames = (x.size() - w) / h + 1;
  const std::vector<double> window = ref_hamming(w);
  for (std::size_t f = 0; f < n_frames; ++f) {
    std::vector<double> frame(w);
    for (std::size_t i = 0; i < w; ++i) frame[i] = x[f * h + i] * window[i];
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<double> ref_power_spectrum(const std::vector<double>& frame,
                                       std::size_t n_fft) {
  std::vector<double> power(n_fft / 2 + 1, 0.0);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t n = 0; n < frame.size() && n < n_fft; ++n) {
      const double angle = -2.0 * kPi * static_cast<double>(k) *
                           static_cast<double>(n) /
                           static_cast<double>(n_fft);
      re += frame[n] * std::cos(angle);
      im += frame[n] * std::sin(angle);
    }
    power[k] = (re * re + im * im) / static_cast<double>(n_fft);
  }
  return power;
}

std::vector<std::vector<double>> ref_mel_filterbank(std::size_t n_mel,
                                                    std::size_t n_fft,
                                                    double rate_hz,
                                                    double fmin_hz,
                                                    double fmax_hz) {
  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = ref_mel_of_hz(fmin_hz);
  const double mel_hi = ref_mel_of_hz(fmax_hz);
  std::vector<double> edges(n_mel + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_mel + 1);
    edges[i] = ref_hz_of_mel(mel);
  }

  std::vector<std::vector<double>> bank(n_mel,
                                        std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < n_mel; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * rate_hz /
                       static_cast<double>(n_fft);
      if (f <= left || f >= right) continue;
      if (f <= center) {
        bank[m][k] = (f - left) / (center - left);
      } else {
        bank[m][k] = (right - f) / (right - center);
      }
    }
  }
  return bank;
}

std::vector<double> ref_log_mel(const std::vector<double>& power,
                                const std::vector<std::vector<double>>& bank) {
  std::vector<double> out(bank.size(), 0.0);
  for (std::size_t m = 0; m < bank.size(); ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      acc += bank[m][k] * power[k];
    }
    if (acc < 1e-10) acc = 1e-10;
    out[m] = std::log(acc);
  }
  return out;
}

std::vector<double> ref_dct2(const std::vector<double>& row,
                             std::size_t n_keep) {
  const std::size_t n = row.size();
  std::vector<double> out(n_keep, 0.0);
  for (std::size_t k = 0; k < n_keep; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += row[i] * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) *
                               static_cast<double>(k) /
                               (2.0 * static_cast<double>(n)));
    }
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(n))
                                : std::sqrt(2.0 / static_cast<double>(n));
    out[k] = acc * scale;
  }
  return out;
}

std::vector<std::vector<double>> ref_delta(
    const std::vector<std::vector<double>>& series, std::size_t window) {
  const std::size_t n_frames = series.size();
  std::vector<std::vector<double>> out(n_frames);
  double denom = 0.0;
  for (std::size_t n = 1; n <= window; ++n) {
    denom += static_cast<double>(n) * static_cast<double>(n);
  }
  denom *= 2.0;
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t n_coef = series[t].size();
    out[t].assign(n_coef, 0.0);
    for (std::size_t c = 0; c < n_coef; ++c) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= window; ++n) {
        const std::size_t ahead =
            t + n >= n_frames ? n_frames - 1 : t + n;
        const std::size_t behind = t >= n ? t - n : 0;
        acc += static_cast<double>(n) * (series[ahead][c] - series[behind][c]);
      }
      out[t][c] = acc / denom;
    }
  }
  return out;
}

RefFeatures ref_extract(const std::vector<double>& samples, double rate_hz,
                        double frame_ms, double hop_ms, std::size_t n_mel,
                        std::size_t n_cep, std::size_t target_frames,
                        double pre_emphasis, std::size_t delta_window) {
  const std::size_t w = static_cast<std::size_t>(
      std::llround(frame_ms * rate_hz / 1000.0));
  const std::size_t h = static_cast<std::size_t>(
      std::llround(hop_ms * rate_hz / 1000.0));
  std::size_t n_fft = 1;
  while (n_fft < w) n_fft *= 2;

  const std::vector<double> emphasized = ref_pre_emphasis(samples,
                                                          pre_emphasis);
  const std::vector<std::vector<double>> frames = ref_frames(emphasized, w, h);
  const auto bank = ref_mel_filterbank(n_mel, n_fft, rate_hz, 0.0,
                                       rate_hz / 2.0);

  std::size_t n_valid = frames.size();
  if (n_valid > target_frames) n_valid = target_frames;

  std::vector<std::vector<double>> mfcc(n_valid);
  for (std::size_t t = 0; t < n_valid; ++t) {
    const auto power = ref_power_spectrum(frames[t], n_fft);
    const auto logs = ref_log_mel(power, bank);
    mfcc[t] = ref_dct2(logs, n_cep);
  }
  const auto deltas = ref_delta(mfcc, delta_window);

  RefFeatures out;
  out.rows = 2 * n_cep;
  out.cols = target_frames;
  out.n_valid = n_valid;
  out.values.assign(out.rows * out.cols, 0.0);
  for (std::size_t t = 0; t < n_valid; ++t) {
    for (std::size_t c = 0; c < n_cep; ++c) {
      out.values[c * out.cols + t] = mfcc[t][c];
      out.values[(n_cep + c) * out.cols + t] = deltas[t][c];
    }
  }
  return out;
}

}  // namespace refdsp

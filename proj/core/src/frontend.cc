#include "ctcam/frontend.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace ctcam {
namespace {

double HzToMel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

int MsToSamples(double ms, int sample_rate_hz) {
  return static_cast<int>(std::lround(ms * sample_rate_hz / 1000.0));
}

}  // namespace

int NextPowerOfTwo(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

int FrameCount(int length, int window_samples, int shift_samples) {
  if (window_samples <= 0 || shift_samples <= 0) ThrowUsage("invalid config");
  if (length < window_samples) return 0;
  return (length - window_samples) / shift_samples + 1;
}

Matrix MelFilterbank(int n_mels, int fft_size, int sample_rate_hz) {
  if (n_mels < 1 || fft_size < 2 || sample_rate_hz <= 0) {
    ThrowUsage("invalid config");
  }
  const int n_bins = fft_size / 2 + 1;
  const double mel_high = HzToMel(sample_rate_hz / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = mel_high * i / (n_mels + 1);
  }

  Matrix bank = Matrix::Zero(n_mels, n_bins);
  for (int k = 0; k < n_bins; ++k) {
    const double mel = HzToMel(static_cast<double>(k) * sample_rate_hz / fft_size);
    for (int j = 0; j < n_mels; ++j) {
      const double left = edges[j], center = edges[j + 1], right = edges[j + 2];
      if (mel <= left || mel >= right) continue;
      bank(j, k) = mel <= center ? (mel - left) / (center - left)
                                 : (right - mel) / (right - center);
    }
  }
  for (int j = 0; j < n_mels; ++j) {
    if (bank.row(j).sum() <= 0.0) {
      ThrowUsage("invalid config: mel filter " + std::to_string(j) +
                 " covers no FFT bin; reduce n_mels or enlarge the window");
    }
  }
  return bank;
}

FeatureMatrix ComputeLogMel(const Waveform& wave, const LogMelOptions& opts) {
  if (opts.n_mels < 1 || opts.window_ms <= 0 || opts.shift_ms <= 0 ||
      wave.sample_rate_hz <= 0 || opts.log_floor <= 0) {
    ThrowUsage("invalid config");
  }
  const int window = MsToSamples(opts.window_ms, wave.sample_rate_hz);
  const int shift = MsToSamples(opts.shift_ms, wave.sample_rate_hz);
  if (window < 1 || shift < 1) ThrowUsage("invalid config");
  const int n_frames =
      FrameCount(static_cast<int>(wave.samples.size()), window, shift);
  if (n_frames < 1) ThrowData("input too short");

  const int fft_size = NextPowerOfTwo(window);
  const int n_bins = fft_size / 2 + 1;
  const Matrix bank = MelFilterbank(opts.n_mels, fft_size, wave.sample_rate_hz);
  const Vector floor_term = bank.rowwise().sum() * opts.log_floor;

  std::vector<double> hann(window);
  for (int n = 0; n < window; ++n) {
    hann[n] = window == 1 ? 1.0
                          : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n /
                                                 (window - 1));
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(fft_size);
  std::vector<std::complex<double>> spectrum;
  Vector power(n_bins);

  FeatureMatrix out;
  out.frame_shift_ms = opts.shift_ms;
  out.window_ms = opts.window_ms;
  out.data.resize(n_frames, opts.n_mels);
  for (int t = 0; t < n_frames; ++t) {
    const int16_t* src = wave.samples.data() + static_cast<size_t>(t) * shift;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int n = 0; n < window; ++n) frame[n] = src[n];
    for (int n = window - 1; n > 0; --n) frame[n] -= opts.preemphasis * frame[n - 1];
    frame[0] -= opts.preemphasis * frame[0];
    for (int n = 0; n < window; ++n) frame[n] *= hann[n];

    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spectrum[k]);
    out.data.row(t) = ((bank * power) + floor_term).array().log().transpose();
  }
  return out;
}

FeatureMatrix ComputeLogMel(const Waveform& wave, int n_mels, double window_ms,
                            double shift_ms) {
  LogMelOptions opts;
  opts.n_mels = n_mels;
  opts.window_ms = window_ms;
  opts.shift_ms = shift_ms;
  return ComputeLogMel(wave, opts);
}

FeatureMatrix StackFrames(const FeatureMatrix& feat, const StackConfig& cfg) {
  if (cfg.stack < 1 || cfg.skip < 1) ThrowUsage("invalid config");
  const Eigen::Index n_in = feat.frames();
  const Eigen::Index dim = feat.dim();
  if (n_in < 1 || dim < 1) ThrowData("empty feature matrix");

  const Eigen::Index n_out = (n_in + cfg.skip - 1) / cfg.skip;
  FeatureMatrix out;
  out.frame_shift_ms = feat.frame_shift_ms * cfg.skip;
  out.window_ms = feat.window_ms;
  out.data.resize(n_out, dim * cfg.stack);
  for (Eigen::Index t = 0; t < n_out; ++t) {
    for (int k = 0; k < cfg.stack; ++k) {
      const Eigen::Index src = t * cfg.skip + k;
      auto block = out.data.block(t, k * dim, 1, dim);
      if (src < n_in) {
        block = feat.data.row(src);
      } else if (cfg.padding == EdgePadding::kReplicateLast) {
        block = feat.data.row(n_in - 1);
      } else {
        block.setZero();
      }
    }
  }
  return out;
}

FeatureNormalizer FeatureNormalizer::Estimate(std::span<const FeatureMatrix> corpus) {
  FeatureNormalizer norm;
  Eigen::Index dim = -1;
  double count = 0;
  Vector sum, sum_sq;
  for (const auto& feat : corpus) {
    if (dim < 0) {
      dim = feat.dim();
      sum = Vector::Zero(dim);
      sum_sq = Vector::Zero(dim);
    } else if (feat.dim() != dim) {
      ThrowData("shape error: feature dimension differs across corpus");
    }
    sum += feat.data.colwise().sum().transpose();
    sum_sq += feat.data.array().square().colwise().sum().matrix().transpose();
    count += static_cast<double>(feat.frames());
  }
  if (count == 0) ThrowData("cannot estimate normalisation on an empty corpus");
  norm.mean = sum / count;
  const Vector var = (sum_sq / count).array() - norm.mean.array().square();
  norm.inv_stddev = var.array().max(1e-8).sqrt().inverse();
  return norm;
}

void FeatureNormalizer::Apply(FeatureMatrix& feat) const {
  if (empty()) return;
  if (feat.dim() != mean.size()) ThrowData("shape error: normaliser dimension");
  feat.data = ((feat.data.rowwise() - mean.transpose()).array().rowwise() *
               inv_stddev.transpose().array())
                  .matrix();
}

}  // namespace ctcam

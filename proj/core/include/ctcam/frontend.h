#ifndef CTCAM_FRONTEND_H_
#define CTCAM_FRONTEND_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctcam/common.h"

namespace ctcam {

struct Waveform {
  std::vector<int16_t> samples;
  int sample_rate_hz = 16000;
};

// T×D log-mel energies (or any frame-level features) with framing metadata.
struct FeatureMatrix {
  Matrix data;
  double frame_shift_ms = 10.0;
  double window_ms = 25.0;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

enum class EdgePadding {
  kReplicateLast,
  kZero,
};

struct StackConfig {
  int stack = 1;
  int skip = 1;
  EdgePadding padding = EdgePadding::kReplicateLast;
};

struct LogMelOptions {
  int n_mels = 80;
  double window_ms = 25.0;
  double shift_ms = 10.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
};

/// Triangular mel filterbank on the linear FFT grid.
///
/// Returns an n_mels × (fft_size/2 + 1) matrix of non-negative weights whose
/// filters are evenly spaced on the mel scale between 0 Hz and Nyquist.
/// Adjacent filters overlap by construction, so a bin lands in at most two.
Matrix MelFilterbank(int n_mels, int fft_size, int sample_rate_hz);

/// Smallest power of two that is ≥ n.
int NextPowerOfTwo(int n);

/// Number of frames produced for a signal of `length` samples.
int FrameCount(int length, int window_samples, int shift_samples);

/// Hann-windowed, pre-emphasised log-mel energies.
///
/// Each entry is log(Σ_k w_k (|X_k|² + floor)), so silent input is finite.
/// Throws "input too short" when the audio holds no full window and
/// "invalid config" on non-positive framing parameters.
FeatureMatrix ComputeLogMel(const Waveform& wave, const LogMelOptions& opts);

FeatureMatrix ComputeLogMel(const Waveform& wave, int n_mels, double window_ms,
                            double shift_ms);

/// Concatenates `stack` consecutive frames and advances `skip` frames per
/// output row (forward-looking window [t·skip, t·skip + stack − 1]).
FeatureMatrix StackFrames(const FeatureMatrix& feat, const StackConfig& cfg);

// Per-dimension mean/variance normalisation estimated on a training set.
struct FeatureNormalizer {
  Vector mean;
  Vector inv_stddev;

  bool empty() const { return mean.size() == 0; }

  static FeatureNormalizer Estimate(std::span<const FeatureMatrix> corpus);
  void Apply(FeatureMatrix& feat) const;
};

// --- file formats -----------------------------------------------------------

/// Binary feature file: "CTCF1", u32 T, u32 D, f32 shift_ms, f32 window_ms,
/// then T·D little-endian f32 values in row-major order.
void WriteFeatureFile(const std::string& path, const FeatureMatrix& feat);
FeatureMatrix ReadFeatureFile(const std::string& path);

/// 16-bit mono PCM RIFF/WAVE.
Waveform ReadWav(const std::string& path);
void WriteWav(const std::string& path, const Waveform& wave);

}  // namespace ctcam

#endif  // CTCAM_FRONTEND_H_

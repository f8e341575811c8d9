#pragma once

// Audio front end: WAV I/O, STFT, Slaney mel filterbank, log-mel extraction,
// Griffin-Lim inversion, mel cepstra and mel-cepstral distortion.
//
// All functions are pure; none keep state between calls.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace astitch::mel {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;
};

struct MelConfig {
  int sample_rate = 22050;
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t win = 1024;
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  /// Throws UsageError describing the first violated constraint.
  void validate() const;
  std::size_t n_bins() const { return n_fft / 2 + 1; }
  double log_floor_value() const;
  /// Canonical text form; two configs are compatible iff fingerprints match.
  std::string fingerprint() const;

  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// T x M log-mel frames plus the config that produced them.
class MelSpectrogram {
 public:
  MelSpectrogram() = default;
  /// Throws DataError if the values are not finite or M != config.n_mels.
  MelSpectrogram(Matrix frames, MelConfig config);

  std::size_t n_frames() const { return frames_.rows; }
  std::size_t n_mels() const { return frames_.cols; }
  const Matrix& frames() const { return frames_; }
  const MelConfig& config() const { return config_; }

  double operator()(std::size_t t, std::size_t m) const { return frames_(t, m); }

  /// Copy with every value raised to at least log(log_floor).
  MelSpectrogram clamped_to_floor() const;

  friend bool operator==(const MelSpectrogram&, const MelSpectrogram&) = default;

 private:
  Matrix frames_;
  MelConfig config_;
};

/// T x K mel-cepstral coefficients c_1..c_K.
struct CepstraSequence {
  Matrix coeffs;
  std::size_t n_frames() const { return coeffs.rows; }
  std::size_t order() const { return coeffs.cols; }
};

// ------------------------------------------------------------------ WAV

enum class WavEncoding { pcm16, float32 };

/// RIFF/WAVE PCM16 or float32; multi-channel input is averaged to mono.
Waveform load_wav(const std::string& path);
Waveform parse_wav(const std::string& bytes);
void save_wav(const Waveform& w, const std::string& path, WavEncoding enc = WavEncoding::pcm16);
std::string encode_wav(const Waveform& w, WavEncoding enc = WavEncoding::pcm16);

// ------------------------------------------------------------------ analysis

/// Hann-windowed, reflect-padded centered STFT magnitudes, T x (n_fft/2+1),
/// T = 1 + floor(len / hop).
Matrix stft_mag(const Waveform& w, const MelConfig& cfg);

/// Periodic Hann window of length `win`, zero-padded and centered to n_fft.
std::vector<double> analysis_window(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Slaney-normalized triangular filters, M x (n_fft/2+1).
Matrix mel_filterbank(const MelConfig& cfg);
/// Center frequency (Hz) of each filter.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// log(max(filterbank . |STFT|^2, log_floor)).
MelSpectrogram wav_to_mel(const Waveform& w, const MelConfig& cfg);

// ------------------------------------------------------------------ synthesis

struct GriffinLimOptions {
  std::size_t iters = 32;
  /// Target peak after normalization; <= 0 leaves the raw scale.
  double peak = 0.95;
  std::uint64_t seed = 0;
};

/// Linear magnitude estimate from a log-mel via the filterbank pseudo-inverse
/// (power clamped at zero).
Matrix mel_to_magnitude(const MelSpectrogram& mel);

/// Griffin-Lim phase reconstruction. Output length (T-1)*hop.
Waveform griffin_lim(const MelSpectrogram& mel, const GriffinLimOptions& opts = {});
Waveform griffin_lim(const MelSpectrogram& mel, std::size_t iters);

/// Inverse STFT (weighted overlap-add) of a complex spectrogram given as
/// separate real and imaginary T x (n_fft/2+1) matrices.
Waveform istft(const Matrix& re, const Matrix& im, const MelConfig& cfg, std::size_t length);

/// ||P_target - g*P_reanalysis||_F / ||P_target||_F over mel power, with the
/// target floor subtracted and g >= 0 the least-squares gain.
double mel_spectral_convergence(const MelSpectrogram& target, const Waveform& w);

// ------------------------------------------------------------------ cepstra / MCD

/// Orthonormal DCT-II of one vector.
std::vector<double> dct2(const std::vector<double>& x);
/// Inverse of dct2 (orthonormal DCT-III).
std::vector<double> idct2(const std::vector<double>& c);

/// DCT over the mel axis per frame, keeping c_1..c_K. Requires 1 <= K < n_mels.
CepstraSequence mel_to_cepstra(const MelSpectrogram& mel, std::size_t order);
/// All n_mels coefficients including c_0; round-trips through idct2.
Matrix mel_to_cepstra_full(const MelSpectrogram& mel);

enum class McdAlign { none, dtw };

/// (10 / ln 10) * sqrt(2 * sum_k (a_k - b_k)^2) for one frame pair.
double frame_mcd(const double* a, const double* b, std::size_t order);

/// Mean MCD in dB over aligned frame pairs.
double mcd(const CepstraSequence& a, const CepstraSequence& b, McdAlign align = McdAlign::dtw);

/// Minimum-cost monotone alignment with steps (1,0),(0,1),(1,1) under
/// Euclidean frame distance; path runs (0,0) .. (Ta-1,Tb-1).
std::vector<std::pair<std::size_t, std::size_t>> dtw_path(const Matrix& a, const Matrix& b);

// ------------------------------------------------------------------ .melb

/// "MELB", u32 version=1, u32 T, u32 M, f32 sample_rate, u32 hop, T*M f32.
std::string encode_melb(const MelSpectrogram& mel);
MelSpectrogram decode_melb(const std::string& bytes);
void save_melb(const MelSpectrogram& mel, const std::string& path);
MelSpectrogram load_melb(const std::string& path);

}  // namespace astitch::mel

#include "attnstitch/melkit.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"

namespace astitch::mel {

// ------------------------------------------------------------------ config

void MelConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("invalid mel config: " + m); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (n_fft == 0 || hop == 0 || win == 0) fail("n_fft, hop and win must be positive");
  if (!(hop <= win && win <= n_fft)) fail("require hop <= win <= n_fft");
  if (n_mels < 1) fail("n_mels must be >= 1");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    fail("require 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) fail("log_floor must be positive");
}

double MelConfig::log_floor_value() const { return std::log(log_floor); }

std::string MelConfig::fingerprint() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "sr=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop << ";win=" << win
     << ";n_mels=" << n_mels << ";fmin=" << fmin << ";fmax=" << fmax
     << ";floor=" << log_floor;
  return ss.str();
}

MelSpectrogram::MelSpectrogram(Matrix frames, MelConfig config)
    : frames_(std::move(frames)), config_(config) {
  if (frames_.data.size() != frames_.rows * frames_.cols) {
    throw DataError("mel matrix storage does not match its extents");
  }
  if (frames_.cols != config_.n_mels) {
    throw DataError("mel has " + std::to_string(frames_.cols) + " bins but config says " +
                    std::to_string(config_.n_mels));
  }
  for (double v : frames_.data) {
    if (!std::isfinite(v)) throw DataError("mel contains non-finite values");
  }
}

MelSpectrogram MelSpectrogram::clamped_to_floor() const {
  Matrix m = frames_;
  const double lo = config_.log_floor_value();
  for (double& v : m.data) v = std::max(v, lo);
  return MelSpectrogram(std::move(m), config_);
}

// ------------------------------------------------------------------ WAV

namespace {

std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

std::uint32_t le32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}

}  // namespace

Waveform parse_wav(const std::string& b) {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t len = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + len > b.size()) throw FormatError("truncated fmt chunk");
      format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format == 0xFFFE) {
        if (len < 26) throw FormatError("truncated WAVE_FORMAT_EXTENSIBLE header");
        format = le16(b, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk");
      if (body + len > b.size()) throw FormatError("truncated data chunk");
      if (channels == 0 || rate == 0) throw FormatError("invalid channel count or sample rate");
      std::size_t width = 0;
      if (format == 1 && bits == 16) {
        width = 2;
      } else if (format == 3 && bits == 32) {
        width = 4;
      } else {
        throw FormatError("unsupported WAV codec (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bits)");
      }
      const std::size_t frame_bytes = width * channels;
      const std::size_t n = len / frame_bytes;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t at = body + i * frame_bytes + c * width;
          if (width == 2) {
            acc += static_cast<std::int16_t>(le16(b, at)) / 32768.0;
          } else {
            acc += std::bit_cast<float>(le32(b, at));
          }
        }
        const double s = acc / channels;
        if (!std::isfinite(s)) throw FormatError("non-finite sample in WAV data");
        w.samples[i] = s;
      }
      return w;
    }
    pos = body + len + (len & 1u);
  }
  throw FormatError("no data chunk (truncated file?)");
}

Waveform load_wav(const std::string& path) { return parse_wav(io::read_file(path)); }

std::string encode_wav(const Waveform& w, WavEncoding enc) {
  if (w.sample_rate <= 0) throw DataError("waveform sample rate must be positive");
  std::ostringstream os(std::ios::binary);
  const std::uint16_t width = enc == WavEncoding::pcm16 ? 2 : 4;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * width);
  auto put16 = [&](std::uint16_t v) {
    os.put(static_cast<char>(v & 0xff));
    os.put(static_cast<char>(v >> 8));
  };
  os.write("RIFF", 4);
  io::put_u32(os, 36 + data_len);
  os.write("WAVEfmt ", 8);
  io::put_u32(os, 16);
  put16(enc == WavEncoding::pcm16 ? 1 : 3);
  put16(1);
  io::put_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  io::put_u32(os, static_cast<std::uint32_t>(w.sample_rate) * width);
  put16(width);
  put16(static_cast<std::uint16_t>(width * 8));
  os.write("data", 4);
  io::put_u32(os, data_len);
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw NumericError("non-finite sample in waveform");
    if (enc == WavEncoding::pcm16) {
      const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
      put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      io::put_f32(os, static_cast<float>(s));
    }
  }
  return os.str();
}

void save_wav(const Waveform& w, const std::string& path, WavEncoding enc) {
  io::write_file(path, encode_wav(w, enc));
}

// ------------------------------------------------------------------ FFT plumbing

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// One real-to-complex and one complex-to-real plan of size n, with owned
// buffers. FFTW planning is not thread-safe; execution on distinct plans is.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  fftw_complex* spec() { return spec_; }
  void forward() { fftw_execute(fwd_); }
  /// Unnormalized; caller divides by n.
  void inverse() { fftw_execute(inv_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

std::size_t reflect_index(std::ptrdiff_t i, std::size_t len) {
  if (len == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(len)) i = period - i;
  return static_cast<std::size_t>(i);
}

struct ComplexSpec {
  Matrix re;
  Matrix im;
};

ComplexSpec stft_complex(const std::vector<double>& x, const MelConfig& cfg, std::size_t n_frames,
                         RealFft& fft) {
  const std::size_t nb = cfg.n_bins();
  const auto window = analysis_window(cfg);
  ComplexSpec out{Matrix(n_frames, nb), Matrix(n_frames, nb)};
  const auto half = static_cast<std::ptrdiff_t>(cfg.n_fft / 2);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * cfg.hop) - half;
    for (std::size_t j = 0; j < cfg.n_fft; ++j) {
      const double s =
          x.empty() ? 0.0 : x[reflect_index(start + static_cast<std::ptrdiff_t>(j), x.size())];
      fft.real()[j] = s * window[j];
    }
    fft.forward();
    for (std::size_t k = 0; k < nb; ++k) {
      out.re(t, k) = fft.spec()[k][0];
      out.im(t, k) = fft.spec()[k][1];
    }
  }
  return out;
}

Waveform istft_impl(const Matrix& re, const Matrix& im, const MelConfig& cfg, std::size_t length,
                    RealFft& fft) {
  const std::size_t n_frames = re.rows;
  const std::size_t nb = cfg.n_bins();
  const std::size_t nfft = cfg.n_fft;
  const auto window = analysis_window(cfg);
  const std::size_t full = nfft + cfg.hop * (n_frames > 0 ? n_frames - 1 : 0);
  std::vector<double> acc(full, 0.0), wsum(full, 0.0);
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t k = 0; k < nb; ++k) {
      fft.spec()[k][0] = re(t, k);
      fft.spec()[k][1] = im(t, k);
    }
    fft.inverse();
    const std::size_t off = t * cfg.hop;
    for (std::size_t j = 0; j < nfft; ++j) {
      acc[off + j] += fft.real()[j] / static_cast<double>(nfft) * window[j];
      wsum[off + j] += window[j] * window[j];
    }
  }
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.assign(length, 0.0);
  const std::size_t half = nfft / 2;
  for (std::size_t i = 0; i < length && i + half < full; ++i) {
    const double ws = wsum[i + half];
    w.samples[i] = ws > 1e-8 ? acc[i + half] / ws : 0.0;
  }
  return w;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) e(r, c) = m(r, c);
  return e;
}

}  // namespace

std::vector<double> analysis_window(const MelConfig& cfg) {
  std::vector<double> w(cfg.n_fft, 0.0);
  const std::size_t off = (cfg.n_fft - cfg.win) / 2;
  for (std::size_t i = 0; i < cfg.win; ++i) {
    w[off + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(cfg.win));
  }
  return w;
}

Matrix stft_mag(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.samples.size() < cfg.win) {
    throw DataError("signal of " + std::to_string(w.samples.size()) +
                    " samples is shorter than one window (" + std::to_string(cfg.win) + ")");
  }
  RealFft fft(cfg.n_fft);
  const std::size_t n_frames = 1 + w.samples.size() / cfg.hop;
  auto spec = stft_complex(w.samples, cfg, n_frames, fft);
  Matrix mag(n_frames, cfg.n_bins());
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    mag.data[i] = std::hypot(spec.re.data[i], spec.im.data[i]);
  }
  return mag;
}

// ------------------------------------------------------------------ mel scale

namespace {
constexpr double kSlaneyHzPerMel = 200.0 / 3.0;
constexpr double kSlaneyLogHz = 1000.0;
constexpr double kSlaneyLogMel = kSlaneyLogHz / kSlaneyHzPerMel;
const double kSlaneyLogStep = std::log(6.4) / 27.0;
}  // namespace

double hz_to_mel(double hz) {
  if (hz < kSlaneyLogHz) return hz / kSlaneyHzPerMel;
  return kSlaneyLogMel + std::log(hz / kSlaneyLogHz) / kSlaneyLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kSlaneyLogMel) return mel * kSlaneyHzPerMel;
  return kSlaneyLogHz * std::exp(kSlaneyLogStep * (mel - kSlaneyLogMel));
}

namespace {
std::vector<double> mel_edges_hz(const MelConfig& cfg) {
  const std::size_t n = cfg.n_mels + 2;
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> hz(n);
  for (std::size_t i = 0; i < n; ++i) {
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return hz;
}
}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  const auto hz = mel_edges_hz(cfg);
  return {hz.begin() + 1, hz.end() - 1};
}

Matrix mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const std::size_t nb = cfg.n_bins();
  const auto hz = mel_edges_hz(cfg);
  Matrix fb(cfg.n_mels, nb);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = hz[m], mid = hz[m + 1], hi = hz[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < nb; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(rise, fall)) * enorm;
    }
  }
  return fb;
}

MelSpectrogram wav_to_mel(const Waveform& w, const MelConfig& cfg) {
  const Matrix mag = stft_mag(w, cfg);
  const Matrix fb = mel_filterbank(cfg);
  Matrix out(mag.rows, cfg.n_mels);
  const double floor = cfg.log_floor;
  for (std::size_t t = 0; t < mag.rows; ++t) {
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < mag.cols; ++k) {
        const double a = mag(t, k);
        acc += fb(m, k) * a * a;
      }
      out(t, m) = std::log(std::max(acc, floor));
    }
  }
  return MelSpectrogram(std::move(out), cfg);
}

// ------------------------------------------------------------------ inversion

Matrix mel_to_magnitude(const MelSpectrogram& mel) {
  const MelConfig& cfg = mel.config();
  const Eigen::MatrixXd fb = to_eigen(mel_filterbank(cfg));
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  Matrix mag(mel.n_frames(), cfg.n_bins());
  Eigen::VectorXd p(cfg.n_mels);
  for (std::size_t t = 0; t < mel.n_frames(); ++t) {
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      p(static_cast<Eigen::Index>(m)) = std::max(std::exp(mel(t, m)) - cfg.log_floor, 0.0);
    }
    const Eigen::VectorXd lin = pinv * p;
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) {
      mag(t, k) = std::sqrt(std::max(lin(static_cast<Eigen::Index>(k)), 0.0));
    }
  }
  return mag;
}

Waveform istft(const Matrix& re, const Matrix& im, const MelConfig& cfg, std::size_t length) {
  cfg.validate();
  if (re.rows != im.rows || re.cols != cfg.n_bins() || im.cols != cfg.n_bins()) {
    throw ShapeError("istft: spectrum shape does not match n_fft");
  }
  RealFft fft(cfg.n_fft);
  return istft_impl(re, im, cfg, length, fft);
}

Waveform griffin_lim(const MelSpectrogram& mel, const GriffinLimOptions& opts) {
  if (opts.iters < 1) throw UsageError("griffin_lim: iters must be >= 1");
  const MelConfig& cfg = mel.config();
  cfg.validate();
  const std::size_t n_frames = mel.n_frames();
  const std::size_t length = n_frames > 1 ? (n_frames - 1) * cfg.hop : 0;
  if (n_frames == 0) return Waveform{{}, cfg.sample_rate};

  const Matrix mag = mel_to_magnitude(mel);
  RealFft fft(cfg.n_fft);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Matrix re(n_frames, cfg.n_bins()), im(n_frames, cfg.n_bins());
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    const double ph = phase(rng);
    re.data[i] = mag.data[i] * std::cos(ph);
    im.data[i] = mag.data[i] * std::sin(ph);
  }
  Waveform w;
  for (std::size_t it = 0; it < opts.iters; ++it) {
    w = istft_impl(re, im, cfg, length, fft);
    auto est = stft_complex(w.samples, cfg, n_frames, fft);
    for (std::size_t i = 0; i < mag.data.size(); ++i) {
      const double a = std::hypot(est.re.data[i], est.im.data[i]);
      if (a > 1e-12) {
        re.data[i] = mag.data[i] * est.re.data[i] / a;
        im.data[i] = mag.data[i] * est.im.data[i] / a;
      } else {
        re.data[i] = mag.data[i];
        im.data[i] = 0.0;
      }
    }
  }
  w = istft_impl(re, im, cfg, length, fft);

  if (opts.peak > 0.0) {
    double peak = 0.0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.0) {
      for (double& s : w.samples) s *= opts.peak / peak;
    }
  }
  return w;
}

Waveform griffin_lim(const MelSpectrogram& mel, std::size_t iters) {
  GriffinLimOptions o;
  o.iters = iters;
  return griffin_lim(mel, o);
}

double mel_spectral_convergence(const MelSpectrogram& target, const Waveform& w) {
  const MelConfig& cfg = target.config();
  RealFft fft(cfg.n_fft);
  const std::size_t n_frames = target.n_frames();
  auto spec = stft_complex(w.samples, cfg, n_frames, fft);
  const Matrix fb = mel_filterbank(cfg);
  std::vector<double> re_p(n_frames * cfg.n_mels), tg_p(re_p.size());
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cfg.n_bins(); ++k) {
        acc += fb(m, k) * (spec.re(t, k) * spec.re(t, k) + spec.im(t, k) * spec.im(t, k));
      }
      re_p[t * cfg.n_mels + m] = acc;
      tg_p[t * cfg.n_mels + m] = std::max(std::exp(target(t, m)) - cfg.log_floor, 0.0);
    }
  }
  // Peak normalization rescales the waveform, so compare after the best
  // non-negative power gain.
  double cross = 0.0, self = 0.0, den = 0.0;
  for (std::size_t i = 0; i < re_p.size(); ++i) {
    cross += tg_p[i] * re_p[i];
    self += re_p[i] * re_p[i];
    den += tg_p[i] * tg_p[i];
  }
  const double gain = self > 0.0 ? std::max(cross / self, 0.0) : 0.0;
  double num = 0.0;
  for (std::size_t i = 0; i < re_p.size(); ++i) num += std::pow(tg_p[i] - gain * re_p[i], 2);
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ------------------------------------------------------------------ cepstra

std::vector<double> dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> c(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
    c[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return c;
}

std::vector<double> idct2(const std::vector<double>& c) {
  const std::size_t n = c.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += c[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / n) *
             std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
    x[i] = acc;
  }
  return x;
}

Matrix mel_to_cepstra_full(const MelSpectrogram& mel) {
  Matrix out(mel.n_frames(), mel.n_mels());
  std::vector<double> row(mel.n_mels());
  for (std::size_t t = 0; t < mel.n_frames(); ++t) {
    for (std::size_t m = 0; m < mel.n_mels(); ++m) row[m] = mel(t, m);
    const auto c = dct2(row);
    std::copy(c.begin(), c.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t * out.cols));
  }
  return out;
}

CepstraSequence mel_to_cepstra(const MelSpectrogram& mel, std::size_t order) {
  if (order < 1 || order >= mel.n_mels()) {
    throw UsageError("cepstral order " + std::to_string(order) + " must be in [1, " +
                     std::to_string(mel.n_mels() - 1) + "]");
  }
  const Matrix full = mel_to_cepstra_full(mel);
  CepstraSequence out{Matrix(mel.n_frames(), order)};
  for (std::size_t t = 0; t < full.rows; ++t)
    for (std::size_t k = 0; k < order; ++k) out.coeffs(t, k) = full(t, k + 1);
  return out;
}

// ------------------------------------------------------------------ MCD

double frame_mcd(const double* a, const double* b, std::size_t order) {
  double acc = 0.0;
  for (std::size_t k = 0; k < order; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return 10.0 / std::numbers::ln10 * std::sqrt(2.0 * acc);
}

std::vector<std::pair<std::size_t, std::size_t>> dtw_path(const Matrix& a, const Matrix& b) {
  if (a.rows == 0 || b.rows == 0) throw DataError("dtw: empty sequence");
  if (a.cols != b.cols) throw ShapeError("dtw: feature dimensions differ");
  const std::size_t n = a.rows, m = b.rows, d = a.cols;
  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc(n, m, inf);
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double x = a(i, k) - b(j, k);
      s += x * x;
    }
    return std::sqrt(s);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = 0.0;
      if (i > 0 || j > 0) {
        best = inf;
        if (i > 0 && j > 0) best = acc(i - 1, j - 1);
        if (i > 0) best = std::min(best, acc(i - 1, j));
        if (j > 0) best = std::min(best, acc(i, j - 1));
      }
      acc(i, j) = best + dist(i, j);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t i = n - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double mcd(const CepstraSequence& a, const CepstraSequence& b, McdAlign align) {
  if (a.n_frames() == 0 || b.n_frames() == 0) throw DataError("mcd: empty cepstra sequence");
  if (a.order() != b.order()) {
    throw ShapeError("mcd: cepstral orders differ (" + std::to_string(a.order()) + " vs " +
                     std::to_string(b.order()) + ")");
  }
  const std::size_t k = a.order();
  double total = 0.0;
  std::size_t count = 0;
  if (align == McdAlign::none) {
    if (a.n_frames() != b.n_frames()) {
      throw ShapeError("mcd: frame counts differ and no alignment requested");
    }
    for (std::size_t t = 0; t < a.n_frames(); ++t) {
      total += frame_mcd(&a.coeffs.data[t * k], &b.coeffs.data[t * k], k);
    }
    count = a.n_frames();
  } else {
    for (auto [i, j] : dtw_path(a.coeffs, b.coeffs)) {
      total += frame_mcd(&a.coeffs.data[i * k], &b.coeffs.data[j * k], k);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ------------------------------------------------------------------ .melb

std::string encode_melb(const MelSpectrogram& mel) {
  std::ostringstream os(std::ios::binary);
  os.write("MELB", 4);
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(mel.n_frames()));
  io::put_u32(os, static_cast<std::uint32_t>(mel.n_mels()));
  io::put_f32(os, static_cast<float>(mel.config().sample_rate));
  io::put_u32(os, static_cast<std::uint32_t>(mel.config().hop));
  for (double v : mel.frames().data) io::put_f32(os, static_cast<float>(v));
  return os.str();
}

MelSpectrogram decode_melb(const std::string& bytes) {
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < kHeader) throw FormatError(".melb: truncated header");
  if (bytes.compare(0, 4, "MELB") != 0) throw FormatError(".melb: bad magic");
  std::istringstream is(bytes, std::ios::binary);
  is.ignore(4);
  const std::uint32_t version = io::get_u32(is);
  if (version != 1) throw FormatError(".melb: unsupported version " + std::to_string(version));
  const std::uint32_t n_frames = io::get_u32(is);
  const std::uint32_t n_mels = io::get_u32(is);
  const float sr = io::get_f32(is);
  const std::uint32_t hop = io::get_u32(is);
  if (n_mels == 0) throw FormatError(".melb: zero mel bins");
  if (!(sr > 0.0f) || hop == 0) throw FormatError(".melb: invalid sample rate or hop");
  const std::uint64_t payload = std::uint64_t{n_frames} * n_mels * 4;
  if (bytes.size() - kHeader != payload) {
    throw FormatError(".melb: payload is " + std::to_string(bytes.size() - kHeader) +
                      " bytes, header implies " + std::to_string(payload));
  }
  MelConfig cfg;
  cfg.sample_rate = static_cast<int>(std::lround(sr));
  cfg.hop = hop;
  cfg.n_mels = n_mels;
  cfg.fmax = std::min(cfg.fmax, cfg.sample_rate / 2.0);
  while (cfg.win < hop) cfg.win *= 2;
  cfg.n_fft = std::max(cfg.n_fft, cfg.win);
  Matrix m(n_frames, n_mels);
  for (double& v : m.data) v = io::get_f32(is);
  return MelSpectrogram(std::move(m), cfg);
}

void save_melb(const MelSpectrogram& mel, const std::string& path) {
  io::write_file(path, encode_melb(mel));
}

MelSpectrogram load_melb(const std::string& path) { return decode_melb(io::read_file(path)); }

}  // namespace astitch::mel

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"
#include "attnstitch/melkit.hpp"
#include "test_support.hpp"

using namespace astitch;
using namespace astitch::mel;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform sine(double hz, std::size_t n, int sr = 22050, double amp = 0.5) {
  Waveform w{std::vector<double>(n), sr};
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * kPi * hz * i / sr);
  return w;
}

/// Speech-like test signal: glide plus harmonics with a syllabic envelope.
Waveform speechlike(std::size_t n, int sr = 22050) {
  Waveform w{std::vector<double>(n), sr};
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f0 = 120.0 + 60.0 * std::sin(2.0 * kPi * 2.0 * t);
    phase += 2.0 * kPi * f0 / sr;
    double s = 0.0;
    for (int h = 1; h <= 8; ++h) s += std::sin(h * phase) / h;
    w.samples[i] = 0.2 * s * (0.6 + 0.4 * std::sin(2.0 * kPi * 4.0 * t));
  }
  return w;
}

std::vector<double> direct_dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> c(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * std::cos(kPi * (i + 0.5) * k / n);
    c[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return c;
}

MelSpectrogram random_mel(std::size_t T, std::size_t M, std::mt19937_64& rng) {
  MelConfig cfg;
  cfg.n_mels = M;
  std::uniform_real_distribution<double> u(-10.0, 0.0);
  Matrix f(T, M);
  for (double& v : f.data) v = u(rng);
  return MelSpectrogram(std::move(f), cfg);
}

CepstraSequence random_cepstra(std::size_t T, std::size_t K, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CepstraSequence c{Matrix(T, K)};
  for (double& v : c.coeffs.data) v = g(rng);
  return c;
}

}  // namespace

TEST_CASE("mel config validation") {
  MelConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.hop = 2048;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.fmax = 20000;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.n_mels = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.fmin = 9000;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK(c.fingerprint() != bad.fingerprint());
}

TEST_CASE("mel spectrogram rejects wrong width and non-finite values") {
  MelConfig c;
  c.n_mels = 4;
  CHECK_THROWS_AS(MelSpectrogram(Matrix(2, 3), c), DataError);
  Matrix m(1, 4);
  m.data[2] = NAN;
  CHECK_THROWS_AS(MelSpectrogram(m, c), DataError);
}

TEST_CASE("wav examples") {
  Waveform silence{std::vector<double>(100, 0.0), 16000};
  auto back = parse_wav(encode_wav(silence));
  CHECK(back.sample_rate == 16000);
  CHECK(back.samples == silence.samples);

  auto s = sine(440.0, 22050);
  CHECK(s.samples.size() == 22050);
  back = parse_wav(encode_wav(s));
  REQUIRE(back.samples.size() == s.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - s.samples[i]) <= 1.0 / 32768.0);
  }
  auto f = parse_wav(encode_wav(s, WavEncoding::float32));
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    CHECK(f.samples[i] == static_cast<double>(static_cast<float>(s.samples[i])));
  }
}

TEST_CASE("wav stereo is averaged and truncation is an error") {
  // Hand-built 2-channel PCM16 file with one frame (1000, -3000).
  std::ostringstream os;
  os.write("RIFF", 4);
  io::put_u32(os, 36 + 4);
  os.write("WAVEfmt ", 8);
  io::put_u32(os, 16);
  os.put(1), os.put(0);  // PCM
  os.put(2), os.put(0);  // channels
  io::put_u32(os, 8000);
  io::put_u32(os, 8000 * 4);
  os.put(4), os.put(0);
  os.put(16), os.put(0);
  os.write("data", 4);
  io::put_u32(os, 4);
  const std::int16_t l = 1000, r = -3000;
  os.write(reinterpret_cast<const char*>(&l), 2);
  os.write(reinterpret_cast<const char*>(&r), 2);
  const auto w = parse_wav(os.str());
  REQUIRE(w.samples.size() == 1);
  CHECK(w.samples[0] == Approx((1000.0 - 3000.0) / 2.0 / 32768.0));
  const std::string bytes = os.str();
  CHECK_THROWS_AS(parse_wav(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse_wav("RIFX"), FormatError);
}

TEST_CASE("stft examples") {
  MelConfig cfg;
  Waveform z{std::vector<double>(4000, 0.0), cfg.sample_rate};
  auto S = stft_mag(z, cfg);
  CHECK(S.rows == 1 + 4000 / cfg.hop);
  CHECK(S.cols == cfg.n_bins());
  for (double v : S.data) CHECK(v == 0.0);

  const std::size_t bin = 40;
  const double hz = bin * static_cast<double>(cfg.sample_rate) / cfg.n_fft;
  S = stft_mag(sine(hz, 8000), cfg);
  for (std::size_t t = 2; t + 2 < S.rows; ++t) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < S.cols; ++k) {
      if (S(t, k) > S(t, arg)) arg = k;
    }
    CHECK(arg == static_cast<std::size_t>(std::lround(hz * cfg.n_fft / cfg.sample_rate)));
  }
  CHECK_THROWS_AS(stft_mag(Waveform{std::vector<double>(100, 0.0), cfg.sample_rate}, cfg), DataError);
}

TEST_CASE("stft energy follows Parseval through the window") {
  MelConfig cfg;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  Waveform w{std::vector<double>(6000), cfg.sample_rate};
  for (double& v : w.samples) v = g(rng);
  const auto S = stft_mag(w, cfg);
  const auto win = analysis_window(cfg);
  // Frame t covers padded samples [t*hop, t*hop + n_fft); rebuild it directly.
  const std::size_t pad = cfg.n_fft / 2, n = w.samples.size();
  auto padded = [&](long i) {
    long j = i - static_cast<long>(pad);
    if (j < 0) j = -j;
    if (j >= static_cast<long>(n)) j = 2 * static_cast<long>(n) - 2 - j;
    return w.samples[static_cast<std::size_t>(j)];
  };
  for (std::size_t t = 0; t < S.rows; t += 5) {
    double time_energy = 0.0;
    for (std::size_t i = 0; i < cfg.n_fft; ++i) {
      const double v = win[i] * padded(static_cast<long>(t * cfg.hop + i));
      time_energy += v * v;
    }
    // One-sided spectrum: interior bins count twice.
    double spec = 0.0;
    for (std::size_t k = 0; k < S.cols; ++k) {
      const double p = S(t, k) * S(t, k);
      spec += (k == 0 || k + 1 == S.cols) ? p : 2.0 * p;
    }
    CHECK(spec / cfg.n_fft == Approx(time_energy).epsilon(1e-9));
  }
}

TEST_CASE("mel filterbank examples") {
  MelConfig cfg;
  const auto fb = mel_filterbank(cfg);
  CHECK(fb.rows == cfg.n_mels);
  CHECK(fb.cols == cfg.n_bins());
  for (std::size_t m = 0; m < fb.rows; ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      CHECK(fb(m, k) >= 0.0);
      s += fb(m, k);
    }
    CHECK(s > 0.0);
  }
  const auto centers = mel_center_frequencies(cfg);
  for (std::size_t i = 1; i < centers.size(); ++i) CHECK(centers[i] > centers[i - 1]);

  cfg.n_mels = 1;
  const auto one = mel_filterbank(cfg);
  const double df = static_cast<double>(cfg.sample_rate) / cfg.n_fft;
  for (std::size_t k = 0; k < one.cols; ++k) {
    const double f = k * df;
    if (f <= cfg.fmin || f >= cfg.fmax) CHECK(one(0, k) == 0.0);
  }
  const double c1 = mel_center_frequencies(cfg)[0];
  CHECK(one(0, static_cast<std::size_t>(std::lround(c1 / df))) > 0.0);
}

TEST_CASE("slaney mel scale matches its closed form") {
  // Linear below 1 kHz (200/3 Hz per mel), logarithmic above.
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(1000.0) == Approx(15.0));
  CHECK(hz_to_mel(500.0) == Approx(7.5));
  CHECK(hz_to_mel(4000.0) == Approx(15.0 + std::log(4.0) / (std::log(6.4) / 27.0)));
  for (double hz : {10.0, 700.0, 1000.0, 3000.0, 7999.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == Approx(hz));
}

TEST_CASE("wav_to_mel examples") {
  MelConfig cfg;
  cfg.n_mels = 40;
  Waveform z{std::vector<double>(5000, 0.0), cfg.sample_rate};
  const auto m = wav_to_mel(z, cfg);
  CHECK(m.n_frames() == stft_mag(z, cfg).rows);
  for (double v : m.frames().data) CHECK(v == cfg.log_floor_value());

  auto w = speechlike(8000);
  auto w2 = w;
  for (double& v : w2.samples) v *= 2.0;
  const auto a = wav_to_mel(w, cfg), b = wav_to_mel(w2, cfg);
  const double floor = cfg.log_floor_value();
  for (std::size_t i = 0; i < a.frames().data.size(); ++i) {
    if (a.frames().data[i] > floor + 1.0) {
      CHECK(b.frames().data[i] - a.frames().data[i] == Approx(std::log(4.0)).margin(1e-9));
    }
  }
}

TEST_CASE("wav_to_mel is covariant under a one-hop shift") {
  MelConfig cfg;
  cfg.n_mels = 40;
  auto w = speechlike(12000);
  Waveform shifted{std::vector<double>(cfg.hop, 0.0), cfg.sample_rate};
  shifted.samples.insert(shifted.samples.end(), w.samples.begin(), w.samples.end());
  const auto a = wav_to_mel(w, cfg), b = wav_to_mel(shifted, cfg);
  // Frames far enough from both edges that reflection padding is not involved.
  const std::size_t margin = cfg.n_fft / cfg.hop + 1;
  for (std::size_t t = margin; t + margin < a.n_frames(); ++t)
    for (std::size_t m = 0; m < a.n_mels(); ++m) CHECK(std::abs(a(t, m) - b(t + 1, m)) <= 1e-9);
}

TEST_CASE("griffin-lim examples") {
  MelConfig cfg;
  cfg.n_mels = 40;
  Matrix floor(20, cfg.n_mels, cfg.log_floor_value());
  GriffinLimOptions raw;
  raw.peak = 0.0;
  const auto quiet = griffin_lim(MelSpectrogram(floor, cfg), raw);
  CHECK(quiet.samples.size() == 19 * cfg.hop);
  double peak = 0.0;
  for (double v : quiet.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e-3);

  const auto tone = sine(1500.0, 11025);
  const auto mel = wav_to_mel(tone, cfg);
  const auto rec = griffin_lim(mel, 32);
  peak = 0.0;
  for (double v : rec.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == Approx(0.95).margin(1e-12));
  const auto back = wav_to_mel(rec, cfg);
  for (std::size_t t = 3; t + 3 < back.n_frames(); ++t) {
    std::size_t want = 0, got = 0;
    for (std::size_t m = 1; m < cfg.n_mels; ++m) {
      if (mel(t, m) > mel(t, want)) want = m;
      if (back(t, m) > back(t, got)) got = m;
    }
    CHECK(got == want);
  }
}

TEST_CASE("griffin-lim error shrinks with iterations") {
  MelConfig cfg;
  cfg.n_mels = 40;
  const auto mel = wav_to_mel(speechlike(11025), cfg);
  GriffinLimOptions one, many;
  one.iters = 1;
  many.iters = 32;
  const double e1 = mel_spectral_convergence(mel, griffin_lim(mel, one));
  const double e32 = mel_spectral_convergence(mel, griffin_lim(mel, many));
  INFO("e1=" << e1 << " e32=" << e32);
  CHECK(e32 <= e1);
  // Same seed, same output.
  CHECK(griffin_lim(mel, many).samples == griffin_lim(mel, many).samples);
}

TEST_CASE("dct matches the direct formula and inverts") {
  const std::vector<double> x{1.0, 2.0, 0.5, -1.0};
  const auto c = dct2(x), want = direct_dct2(x);
  for (std::size_t k = 0; k < 4; ++k) CHECK(c[k] == Approx(want[k]).margin(1e-12));
  // Hand value of the DC term: sum / sqrt(4).
  CHECK(c[0] == Approx(1.25));
  const auto back = idct2(c);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back[i] == Approx(x[i]).margin(1e-12));
}

TEST_CASE("cepstra examples") {
  MelConfig cfg;
  cfg.n_mels = 20;
  Matrix flat(5, 20);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t m = 0; m < 20; ++m) flat(t, m) = -3.0 - static_cast<double>(t);
  const auto c = mel_to_cepstra(MelSpectrogram(flat, cfg), 13);
  CHECK(c.n_frames() == 5);
  CHECK(c.order() == 13);
  for (double v : c.coeffs.data) CHECK(std::abs(v) < 1e-12);
  CHECK_THROWS_AS(mel_to_cepstra(MelSpectrogram(flat, cfg), 0), UsageError);
  CHECK_THROWS_AS(mel_to_cepstra(MelSpectrogram(flat, cfg), 20), UsageError);

  std::mt19937_64 rng(2);
  const auto mel = random_mel(4, 20, rng);
  const auto full = mel_to_cepstra_full(mel);
  const auto part = mel_to_cepstra(mel, 19);
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> row(full.data.begin() + t * 20, full.data.begin() + (t + 1) * 20);
    const auto rec = idct2(row);
    for (std::size_t m = 0; m < 20; ++m) CHECK(std::abs(rec[m] - mel(t, m)) <= 1e-9);
    for (std::size_t k = 0; k < 19; ++k) CHECK(part.coeffs(t, k) == full(t, k + 1));
  }
}

TEST_CASE("mcd examples") {
  std::mt19937_64 rng(3);
  const auto a = random_cepstra(6, 13, rng);
  CHECK(mcd(a, a, McdAlign::none) == 0.0);
  CHECK(mcd(a, a, McdAlign::dtw) == 0.0);

  CepstraSequence x{Matrix(1, 13)}, y{Matrix(1, 13)};
  y.coeffs(0, 0) = 1.0;
  CHECK(std::abs(mcd(x, y, McdAlign::none) - 10.0 / std::log(10.0) * std::sqrt(2.0)) <= 1e-9);
  CHECK(mcd(x, y) == Approx(6.1421).margin(5e-4));

  const auto b = random_cepstra(9, 13, rng);
  CHECK(mcd(a, b) == mcd(b, a));
  CHECK_THROWS_AS(mcd(a, b, McdAlign::none), ShapeError);
  CHECK_THROWS_AS(mcd(a, random_cepstra(6, 12, rng)), ShapeError);
  CHECK_THROWS_AS(mcd(CepstraSequence{Matrix(0, 13)}, a), DataError);
}

TEST_CASE("mcd is a pseudometric without alignment") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_cepstra(5, 13, rng), b = random_cepstra(5, 13, rng), c = random_cepstra(5, 13, rng);
    const double ab = mcd(a, b, McdAlign::none), bc = mcd(b, c, McdAlign::none), ac = mcd(a, c, McdAlign::none);
    CHECK(ab >= 0.0);
    CHECK(ab == mcd(b, a, McdAlign::none));
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("dtw path is monotone, complete and optimal") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t ta = 1 + trial % 7, tb = 1 + (trial * 3) % 8;
    const auto a = random_cepstra(ta, 3, rng), b = random_cepstra(tb, 3, rng);
    const auto path = dtw_path(a.coeffs, b.coeffs);
    REQUIRE(!path.empty());
    CHECK(path.front() == std::pair<std::size_t, std::size_t>{0, 0});
    CHECK(path.back() == std::pair<std::size_t, std::size_t>{ta - 1, tb - 1});
    auto dist = [&](std::size_t i, std::size_t j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += std::pow(a.coeffs(i, k) - b.coeffs(j, k), 2);
      return std::sqrt(s);
    };
    double cost = dist(0, 0);
    for (std::size_t s = 1; s < path.size(); ++s) {
      const auto di = path[s].first - path[s - 1].first, dj = path[s].second - path[s - 1].second;
      CHECK(di <= 1);
      CHECK(dj <= 1);
      CHECK(di + dj >= 1);
      cost += dist(path[s].first, path[s].second);
    }
    // Oracle: plain DP over accumulated cost.
    std::vector<std::vector<double>> D(ta, std::vector<double>(tb, INFINITY));
    for (std::size_t i = 0; i < ta; ++i)
      for (std::size_t j = 0; j < tb; ++j) {
        double best = (i == 0 && j == 0) ? 0.0 : INFINITY;
        if (i > 0) best = std::min(best, D[i - 1][j]);
        if (j > 0) best = std::min(best, D[i][j - 1]);
        if (i > 0 && j > 0) best = std::min(best, D[i - 1][j - 1]);
        D[i][j] = best + dist(i, j);
      }
    CHECK(cost == Approx(D[ta - 1][tb - 1]).epsilon(1e-12));
  }
}

TEST_CASE("melb round trips and validates") {
  MelConfig cfg;
  cfg.n_mels = 6;
  Matrix f(7, 6);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(-11.0f, 0.0f);
  for (double& v : f.data) v = u(rng);  // f32-representable values
  const MelSpectrogram m(f, cfg);
  const std::string bytes = encode_melb(m);
  CHECK(bytes.size() == 4 + 4 * 4 + 4 + 4 * 7 * 6);
  const auto back = decode_melb(bytes);
  CHECK(back.frames() == m.frames());
  CHECK(back.config().fingerprint() == m.config().fingerprint());
  CHECK(encode_melb(back) == bytes);

  CHECK_THROWS_AS(decode_melb("MELX" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(decode_melb(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_melb(bytes + "x"), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_AS(decode_melb(v2), FormatError);

  const auto dir = testing::temp_dir("melb");
  save_melb(m, (dir / "a.melb").string());
  CHECK(load_melb((dir / "a.melb").string()) == back);
  CHECK_THROWS_AS(load_melb((dir / "missing.melb").string()), DataError);
}

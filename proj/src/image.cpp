#include "attnstitch/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"

namespace astitch::image {

Rgb colormap(double u) {
  u = std::clamp(u, 0.0, 1.0);
  // Piecewise-linear through five anchors.
  static const double anchors[5][3] = {
      {13, 8, 135}, {84, 2, 163}, {185, 50, 137}, {249, 142, 9}, {240, 249, 33}};
  const double pos = u * 4.0;
  const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(pos));
  const double f = pos - static_cast<double>(i);
  auto mix = [&](int c) {
    return static_cast<std::uint8_t>(std::lround(anchors[i][c] * (1.0 - f) + anchors[i + 1][c] * f));
  };
  return Rgb{mix(0), mix(1), mix(2)};
}

bool hatch_pixel(std::size_t x, std::size_t y) { return (x + y) % 6 < 2; }

Image render_mel(const mel::MelSpectrogram& mel, std::optional<align::MaskRegion> mask,
                 std::size_t scale) {
  if (scale == 0) throw UsageError("image scale must be >= 1");
  if (mask && (mask->start > mask->end || mask->end > mel.n_frames())) {
    throw DataError("mask [" + std::to_string(mask->start) + ", " + std::to_string(mask->end) +
                    ") exceeds " + std::to_string(mel.n_frames()) + " frames");
  }
  const std::size_t T = mel.n_frames(), M = mel.n_mels();
  Image img;
  img.width = T * scale;
  img.height = M * scale;
  img.pixels.resize(img.width * img.height);
  const auto& d = mel.frames().data;
  double lo = 0.0, hi = 0.0;
  if (!d.empty()) {
    const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
    lo = *mn;
    hi = *mx;
  }
  const double range = hi - lo;
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::size_t m = M - 1 - y / scale;
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t t = x / scale;
      const double u = range > 0.0 ? (mel(t, m) - lo) / range : 0.0;
      Rgb c = colormap(u);
      if (mask && mask->contains(t) && hatch_pixel(x, y)) c = Rgb{255, 255, 255};
      img.pixels[y * img.width + x] = c;
    }
  }
  return img;
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size() * 3);
  for (const Rgb& p : img.pixels) {
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  return out;
}

namespace {

void put_be32(std::string& s, std::uint32_t v) {
  for (int sh = 24; sh >= 0; sh -= 8) s.push_back(static_cast<char>((v >> sh) & 0xff));
}

void chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_png(const Image& img) {
  if (img.width == 0 || img.height == 0) throw DataError("cannot encode an empty image as PNG");
  std::string raw;
  raw.reserve(img.height * (1 + img.width * 3));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (std::size_t x = 0; x < img.width; ++x) {
      const Rgb p = img.at(x, y);
      raw.push_back(static_cast<char>(p.r));
      raw.push_back(static_cast<char>(p.g));
      raw.push_back(static_cast<char>(p.b));
    }
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string z(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw DataError("zlib compression failed");
  }
  z.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", "");
  return out;
}

void save_image(const Image& img, const std::string& path) {
  auto ends_with = [&](const std::string& ext) {
    return path.size() >= ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
  };
  if (ends_with(".png")) {
    io::write_file(path, encode_png(img));
  } else if (ends_with(".ppm")) {
    io::write_file(path, encode_ppm(img));
  } else {
    throw UsageError("image path must end in .png or .ppm: " + path);
  }
}

}  // namespace astitch::image

#pragma once

// Spectrogram rasters: time runs left to right, mel bin 0 sits on the
// bottom row. Each cell becomes a scale x scale block of pixels.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnstitch/align.hpp"
#include "attnstitch/melkit.hpp"

namespace astitch::image {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;  // row-major, top row first

  Rgb at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// Maps u in [0, 1] onto a dark-blue to yellow ramp.
Rgb colormap(double u);

/// Values are normalized to the mel's own min/max; a constant mel maps to
/// colormap(0). Mask columns get white diagonal hatching.
Image render_mel(const mel::MelSpectrogram& mel, std::optional<align::MaskRegion> mask = {},
                 std::size_t scale = 4);

/// True when pixel (x, y) of a hatched column is painted as a stripe.
bool hatch_pixel(std::size_t x, std::size_t y);

std::string encode_ppm(const Image& img);
std::string encode_png(const Image& img);
/// Format from the extension: .png or .ppm.
void save_image(const Image& img, const std::string& path);

}  // namespace astitch::image

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trb {

// 8-bit image, 1 (gray) or 3 (rgb) interleaved channels, row-major.
struct ImageU8 {
  int w = 0, h = 0, channels = 1;
  std::vector<std::uint8_t> data;

  static ImageU8 make(int w, int h, int channels, std::uint8_t fill = 0);
  std::uint8_t& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  bool inside(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

// Binary PGM (P5) for gray, PPM (P6) for rgb; picked by image channels.
void save_image(const ImageU8& img, const std::string& path);
ImageU8 load_image(const std::string& path);

ImageU8 gray_to_rgb(const ImageU8& gray);

using Rgb = std::array<std::uint8_t, 3>;

// Overlay primitives, clipped to bounds. Lines are 1px Bresenham.
void draw_line(ImageU8& rgb, float x0, float y0, float x1, float y1, Rgb color);
void draw_disc(ImageU8& rgb, float cx, float cy, float radius, Rgb color);

}  // namespace trb

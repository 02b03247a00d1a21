#include "trb/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace trb {

ImageU8 ImageU8::make(int w, int h, int channels, std::uint8_t fill) {
  if (w <= 0 || h <= 0 || (channels != 1 && channels != 3))
    throw std::invalid_argument("ImageU8: bad dims " + std::to_string(w) + "x" +
                                std::to_string(h) + "x" + std::to_string(channels));
  ImageU8 img;
  img.w = w;
  img.h = h;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(w) * h * channels, fill);
  return img;
}

void save_image(const ImageU8& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_image: cannot open " + path);
  f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!f) throw std::runtime_error("save_image: write failed for " + path);
}

ImageU8 load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_image: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("load_image: " + path + " is not a binary PGM/PPM");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (maxval != 255) throw std::runtime_error("load_image: only maxval 255 supported");
  f.get();  // single whitespace after the header
  ImageU8 img = ImageU8::make(w, h, magic == "P5" ? 1 : 3);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw std::runtime_error("load_image: truncated pixel data in " + path);
  return img;
}

ImageU8 gray_to_rgb(const ImageU8& gray) {
  if (gray.channels == 3) return gray;
  ImageU8 rgb = ImageU8::make(gray.w, gray.h, 3);
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = gray.at(y, x);
  return rgb;
}

namespace {

void put(ImageU8& img, int y, int x, Rgb color) {
  if (!img.inside(y, x)) return;
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
}

}  // namespace

void draw_line(ImageU8& rgb, float x0f, float y0f, float x1f, float y1f, Rgb color) {
  int x0 = static_cast<int>(std::lround(x0f)), y0 = static_cast<int>(std::lround(y0f));
  int x1 = static_cast<int>(std::lround(x1f)), y1 = static_cast<int>(std::lround(y1f));
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(rgb, y0, x0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_disc(ImageU8& rgb, float cx, float cy, float radius, Rgb color) {
  const int lo_y = static_cast<int>(std::floor(cy - radius)),
            hi_y = static_cast<int>(std::ceil(cy + radius));
  const int lo_x = static_cast<int>(std::floor(cx - radius)),
            hi_x = static_cast<int>(std::ceil(cx + radius));
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x) {
      const float dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) put(rgb, y, x, color);
    }
}

}  // namespace trb

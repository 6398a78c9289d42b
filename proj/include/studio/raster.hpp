#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace studio {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Normalized rectangle inside the unit square.
struct RectF {
  double x = 0.0, y = 0.0, w = 1.0, h = 1.0;
  bool operator==(const RectF&) const = default;
  bool within_unit_square() const;
};

/// 8-bit RGBA image, row-major.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {}, std::uint8_t alpha = 255);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  void fill_rect(int x, int y, int w, int h, Rgb color, std::uint8_t alpha = 255);
  /// Blends `color` over the rect with the given opacity (0–255).
  void shade_rect(int x, int y, int w, int h, Rgb color, std::uint8_t opacity);
  void outline_rect(int x, int y, int w, int h, Rgb color, int thickness = 2);

  /// Draws ASCII text with the built-in bitmap font; non-ASCII renders as '?'.
  void draw_text(int x, int y, std::string_view text, Rgb color, int scale = 1);

  /// Pastes `src` (alpha-composited) with its top-left at (x, y).
  void blit(const Raster& src, int x, int y);

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

int glyph_width();
int glyph_height();

/// Greedy word wrap to at most `max_chars` per line.
std::vector<std::string> wrap_text(std::string_view text, std::size_t max_chars);

std::vector<std::uint8_t> encode_png(const Raster& image);

/// Decodes PNG or JPEG; throws kValidation for anything else.
Raster decode_image(std::span<const std::uint8_t> bytes);

/// True when the bytes start with a PNG or JPEG signature.
bool looks_like_image(std::span<const std::uint8_t> bytes);

/// Bilinear resample of the normalized `rect` of `src` to out_w × out_h.
Raster crop_resize(const Raster& src, const RectF& rect, int out_w, int out_h);

/// Transparent canvas with a high-contrast band across its bottom third
/// holding the wrapped caption.
Raster caption_overlay(int width, int height, std::string_view caption);

}  // namespace studio

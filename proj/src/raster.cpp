#include "studio/raster.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "studio/errors.hpp"

namespace studio {

namespace {

#include "font_glyphs.inc"

std::uint8_t blend(std::uint8_t dst, std::uint8_t src, unsigned alpha) {
  return static_cast<std::uint8_t>((src * alpha + dst * (255 - alpha) + 127) / 255);
}

}  // namespace

bool RectF::within_unit_square() const {
  constexpr double eps = 1e-12;
  return x >= -eps && y >= -eps && w > 0 && h > 0 && x + w <= 1.0 + eps &&
         y + h <= 1.0 + eps;
}

Raster::Raster(int width, int height, Rgb fill, std::uint8_t alpha)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * height * 4) {
  for (std::size_t i = 0; i < pixels_.size(); i += 4) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
    pixels_[i + 3] = alpha;
  }
}

void Raster::fill_rect(int x, int y, int w, int h, Rgb color, std::uint8_t alpha) {
  int x0 = std::max(0, x), y0 = std::max(0, y);
  int x1 = std::min(width_, x + w), y1 = std::min(height_, y + h);
  for (int yy = y0; yy < y1; ++yy) {
    for (int xx = x0; xx < x1; ++xx) {
      auto* p = &pixels_[(static_cast<std::size_t>(yy) * width_ + xx) * 4];
      p[0] = color.r;
      p[1] = color.g;
      p[2] = color.b;
      p[3] = alpha;
    }
  }
}

void Raster::shade_rect(int x, int y, int w, int h, Rgb color, std::uint8_t opacity) {
  int x0 = std::max(0, x), y0 = std::max(0, y);
  int x1 = std::min(width_, x + w), y1 = std::min(height_, y + h);
  for (int yy = y0; yy < y1; ++yy) {
    for (int xx = x0; xx < x1; ++xx) {
      auto* p = &pixels_[(static_cast<std::size_t>(yy) * width_ + xx) * 4];
      p[0] = blend(p[0], color.r, opacity);
      p[1] = blend(p[1], color.g, opacity);
      p[2] = blend(p[2], color.b, opacity);
      p[3] = std::max(p[3], opacity);
    }
  }
}

void Raster::outline_rect(int x, int y, int w, int h, Rgb color, int t) {
  fill_rect(x, y, w, t, color);
  fill_rect(x, y + h - t, w, t, color);
  fill_rect(x, y, t, h, color);
  fill_rect(x + w - t, y, t, h, color);
}

void Raster::draw_text(int x, int y, std::string_view text, Rgb color, int scale) {
  int pen = x;
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    if (c < 32 || c > 126) c = '?';
    const auto& rows = kGlyphRows[c - 32];
    for (int gy = 0; gy < kGlyphHeight; ++gy) {
      for (int gx = 0; gx < kGlyphWidth; ++gx) {
        if (rows[gy] & (0x80 >> gx)) {
          fill_rect(pen + gx * scale, y + gy * scale, scale, scale, color);
        }
      }
    }
    pen += kGlyphWidth * scale;
  }
}

void Raster::blit(const Raster& src, int x, int y) {
  for (int sy = 0; sy < src.height_; ++sy) {
    int dy = y + sy;
    if (dy < 0 || dy >= height_) continue;
    for (int sx = 0; sx < src.width_; ++sx) {
      int dx = x + sx;
      if (dx < 0 || dx >= width_) continue;
      const auto* s = &src.pixels_[(static_cast<std::size_t>(sy) * src.width_ + sx) * 4];
      auto* d = &pixels_[(static_cast<std::size_t>(dy) * width_ + dx) * 4];
      unsigned a = s[3];
      d[0] = blend(d[0], s[0], a);
      d[1] = blend(d[1], s[1], a);
      d[2] = blend(d[2], s[2], a);
      d[3] = static_cast<std::uint8_t>(std::max<unsigned>(d[3], a));
    }
  }
}

int glyph_width() { return kGlyphWidth; }
int glyph_height() { return kGlyphHeight; }

std::vector<std::string> wrap_text(std::string_view text, std::size_t max_chars) {
  std::vector<std::string> lines;
  std::string line;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string word(text.substr(i, j - i));
    i = j;
    while (word.size() > max_chars) {
      if (!line.empty()) lines.push_back(std::exchange(line, {}));
      lines.push_back(word.substr(0, max_chars));
      word.erase(0, max_chars);
    }
    if (line.empty()) {
      line = word;
    } else if (line.size() + 1 + word.size() <= max_chars) {
      line += ' ' + word;
    } else {
      lines.push_back(std::exchange(line, word));
    }
  }
  if (!line.empty()) lines.push_back(line);
  return lines;
}

// ---- PNG --------------------------------------------------------------------

namespace {

void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

void png_warn(png_structp, png_const_charp) {}

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_consume(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes.size()) png_error(png, "truncated stream");
  std::memcpy(out, cur->bytes.data() + cur->pos, len);
  cur->pos += len;
}

// libpng reports errors by longjmp. The jump target lives in these helpers,
// which hold no locals with destructors; all C++ state belongs to callers.
bool png_read_into(png_structp png, png_infop info, Raster* out,
                   std::vector<png_bytep>* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
  png_read_update_info(png, info);
  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  *out = Raster(w, h);
  rows->resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    (*rows)[y] = out->pixels().data() + static_cast<std::size_t>(y) * w * 4;
  }
  png_read_image(png, rows->data());
  return true;
}

bool png_write_from(png_structp png, png_infop info, const Raster* image) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_IHDR(png, info, static_cast<png_uint_32>(image->width()),
               static_cast<png_uint_32>(image->height()), 8, PNG_COLOR_TYPE_RGBA,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  auto px = image->pixels();
  for (int y = 0; y < image->height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(y) *
                                                             image->width() * 4));
  }
  png_write_end(png, nullptr);
  return true;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  PngReadCursor cursor{bytes};
  png_set_read_fn(png, &cursor, png_consume);
  Raster out;
  std::vector<png_bytep> rows;
  bool ok = png_read_into(png, info, &out, &rows);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw Error(ErrorKind::kValidation, "png: undecodable image");
  return out;
}

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_jump(j_common_ptr c) {
  std::longjmp(reinterpret_cast<JpegErr*>(c->err)->jump, 1);
}

// Same contract as png_read_into: the setjmp frame owns nothing.
bool jpeg_read_into(jpeg_decompress_struct* cinfo, JpegErr* err,
                    std::span<const std::uint8_t> bytes, Raster* out,
                    std::vector<std::uint8_t>* rgb) {
  if (setjmp(err->jump)) return false;
  jpeg_create_decompress(cinfo);
  jpeg_mem_src(cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(cinfo, TRUE);
  cinfo->out_color_space = JCS_RGB;
  jpeg_start_decompress(cinfo);
  int w = static_cast<int>(cinfo->output_width);
  int h = static_cast<int>(cinfo->output_height);
  rgb->resize(static_cast<std::size_t>(w) * 3);
  *out = Raster(w, h);
  auto px = out->pixels();
  while (cinfo->output_scanline < cinfo->output_height) {
    int y = static_cast<int>(cinfo->output_scanline);
    JSAMPROW row = rgb->data();
    jpeg_read_scanlines(cinfo, &row, 1);
    for (int x = 0; x < w; ++x) {
      auto* d = &px[(static_cast<std::size_t>(y) * w + x) * 4];
      d[0] = (*rgb)[x * 3];
      d[1] = (*rgb)[x * 3 + 1];
      d[2] = (*rgb)[x * 3 + 2];
    }
  }
  jpeg_finish_decompress(cinfo);
  return true;
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErr err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_jump;
  Raster out;
  std::vector<std::uint8_t> rgb;
  bool ok = jpeg_read_into(&cinfo, &err, bytes, &out, &rgb);
  jpeg_destroy_decompress(&cinfo);
  if (!ok) throw Error(ErrorKind::kValidation, "jpeg: undecodable image");
  return out;
}

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& image) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  bool ok = png_write_from(png, info, &image);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(ErrorKind::kIo, "png: encoding failed");
  return out;
}

bool looks_like_image(std::span<const std::uint8_t> bytes) {
  return is_png(bytes) || is_jpeg(bytes);
}

Raster decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(ErrorKind::kValidation, "undecodable image: unknown format");
}

Raster crop_resize(const Raster& src, const RectF& rect, int out_w, int out_h) {
  Raster out(out_w, out_h);
  auto in = src.pixels();
  auto dst = out.pixels();
  const double sx0 = rect.x * src.width();
  const double sy0 = rect.y * src.height();
  const double sw = rect.w * src.width();
  const double sh = rect.h * src.height();
  for (int y = 0; y < out_h; ++y) {
    double fy = sy0 + (y + 0.5) * sh / out_h - 0.5;
    int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height() - 1);
    int y1 = std::min(y0 + 1, src.height() - 1);
    double ty = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      double fx = sx0 + (x + 0.5) * sw / out_w - 0.5;
      int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width() - 1);
      int x1 = std::min(x0 + 1, src.width() - 1);
      double tx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < 4; ++c) {
        auto at = [&](int xx, int yy) {
          return static_cast<double>(in[(static_cast<std::size_t>(yy) * src.width() + xx) * 4 + c]);
        };
        double top = at(x0, y0) * (1 - tx) + at(x1, y0) * tx;
        double bot = at(x0, y1) * (1 - tx) + at(x1, y1) * tx;
        dst[(static_cast<std::size_t>(y) * out_w + x) * 4 + c] =
            static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
      }
    }
  }
  return out;
}

Raster caption_overlay(int width, int height, std::string_view caption) {
  Raster out(width, height, Rgb{0, 0, 0}, 0);
  int band_top = height - height / 3;
  out.fill_rect(0, band_top, width, height - band_top, Rgb{12, 12, 16}, 200);
  int scale = width >= 1024 ? 2 : 1;
  int margin = 12 * scale;
  auto max_chars = static_cast<std::size_t>(
      std::max(8, (width - 2 * margin) / (glyph_width() * scale)));
  auto lines = wrap_text(caption, max_chars);
  int line_h = (glyph_height() + 4) * scale;
  int max_lines = std::max(1, (height - band_top - 2 * margin) / line_h);
  if (static_cast<int>(lines.size()) > max_lines) {
    lines.resize(static_cast<std::size_t>(max_lines));
    auto& last = lines.back();
    if (last.size() + 3 > max_chars) last.resize(max_chars - 3);
    last += "...";
  }
  int y = band_top + margin;
  for (const auto& line : lines) {
    out.draw_text(margin, y, line, Rgb{255, 255, 255}, scale);
    y += line_h;
  }
  return out;
}

}  // namespace studio

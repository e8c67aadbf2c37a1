#pragma once

// PNG encode/decode over libpng, in memory and on disk.

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ppm/core.hpp"

namespace ppm::png {

enum class Layout { gray, rgb, palette };

// Decoded samples as stored: 1 or 3 channels of 8 or 16 bits (16-bit
// samples in host order), or 8-bit palette indices.
struct Image {
  int width = 0;
  int height = 0;
  Layout layout = Layout::gray;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
  std::vector<std::array<std::uint8_t, 3>> palette;

  [[nodiscard]] int channels() const { return layout == Layout::rgb ? 3 : 1; }
};

namespace detail {

struct ReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->data + cur->pos, n);
  cur->pos += n;
}

inline void write_fn(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

inline void flush_fn(png_structp) {}

inline void silent_warning(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; everything with a destructor lives in
// the caller so no unwinding is skipped.
inline bool decode_raw(ReadCursor* cursor, Image* out, std::vector<std::uint8_t>* rowbuf, char* err,
                       std::size_t err_len) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    std::strncpy(err, "malformed PNG data", err_len - 1);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, cursor, read_fn);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) {
    out->layout = Layout::palette;
    if (depth < 8) png_set_packing(png);
    png_colorp plte = nullptr;
    int n = 0;
    if (png_get_PLTE(png, info, &plte, &n) == PNG_INFO_PLTE) {
      out->palette.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) out->palette[static_cast<std::size_t>(i)] = {plte[i].red, plte[i].green, plte[i].blue};
    }
    out->bit_depth = 8;
  } else {
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    out->layout = (color & PNG_COLOR_MASK_COLOR) ? Layout::rgb : Layout::gray;
    out->bit_depth = depth == 16 ? 16 : 8;
  }
  // Alpha channels are kept by libpng and skipped by the stride below.
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const int channels = png_get_channels(png, info);
  out->width = static_cast<int>(w);
  out->height = static_cast<int>(h);
  rowbuf->resize(rowbytes);
  out->samples.resize(static_cast<std::size_t>(w) * h * static_cast<std::size_t>(out->channels()));
  std::size_t k = 0;
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, rowbuf->data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < out->channels(); ++c) {
        const std::size_t at = static_cast<std::size_t>(x) * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c);
        if (out->bit_depth == 16) {
          out->samples[k++] = static_cast<std::uint16_t>(((*rowbuf)[2 * at] << 8) | (*rowbuf)[2 * at + 1]);
        } else {
          out->samples[k++] = (*rowbuf)[at];
        }
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool encode_raw(const Image* img, std::vector<std::uint8_t>* out, std::vector<std::uint8_t>* rowbuf) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, write_fn, flush_fn);
  const int color = img->layout == Layout::rgb ? PNG_COLOR_TYPE_RGB
                    : img->layout == Layout::palette ? PNG_COLOR_TYPE_PALETTE
                                                     : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img->width), static_cast<png_uint_32>(img->height),
               img->bit_depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> plte;
  if (img->layout == Layout::palette) {
    for (const auto& c : img->palette) plte.push_back({c[0], c[1], c[2]});
    png_set_PLTE(png, info, plte.data(), static_cast<int>(plte.size()));
  }
  png_write_info(png, info);
  const int channels = img->channels();
  const std::size_t bytes_per_sample = img->bit_depth == 16 ? 2 : 1;
  rowbuf->resize(static_cast<std::size_t>(img->width) * static_cast<std::size_t>(channels) * bytes_per_sample);
  std::size_t k = 0;
  for (int y = 0; y < img->height; ++y) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(img->width * channels); ++i) {
      const std::uint16_t s = img->samples[k++];
      if (bytes_per_sample == 2) {
        (*rowbuf)[2 * i] = static_cast<std::uint8_t>(s >> 8);
        (*rowbuf)[2 * i + 1] = static_cast<std::uint8_t>(s & 0xff);
      } else {
        (*rowbuf)[i] = static_cast<std::uint8_t>(s);
      }
    }
    png_write_row(png, rowbuf->data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

inline Image decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("data is not a PNG image");
  detail::ReadCursor cursor{bytes.data(), bytes.size(), 0};
  Image img;
  std::vector<std::uint8_t> rowbuf;
  char err[128] = "PNG decode failed";
  if (!detail::decode_raw(&cursor, &img, &rowbuf, err, sizeof err)) throw IoError(err);
  return img;
}

inline std::vector<std::uint8_t> encode(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw IoError("cannot encode an empty PNG image");
  std::vector<std::uint8_t> out, rowbuf;
  if (!detail::encode_raw(&img, &out, &rowbuf)) throw IoError("PNG encode failed");
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace ppm::png

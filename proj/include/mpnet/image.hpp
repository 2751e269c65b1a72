#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "mpnet/error.hpp"
#include "mpnet/tensor.hpp"

// PNG/JPEG decoding behind the dataset loader, plus bilinear resizing and
// grayscale/RGB conversion. Decoded images are h x w x c floats in [0,1].
namespace mpnet::image {

namespace detail {

struct JpegErrorTrap {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {0};
};

inline void jpeg_trap_exit(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, trap->message);
  std::longjmp(trap->jump, 1);
}

}  // namespace detail

inline bool has_extension(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const char* x : exts)
    if (e == x) return true;
  return false;
}

inline bool is_image_file(const std::filesystem::path& p) {
  return has_extension(p, {".png", ".jpg", ".jpeg"});
}

// 8-bit decode to h x w x 3 in [0,1].
inline Tensor decode_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError("unreadable image " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("unreadable image " + path.string() + ": " + msg);
  }
  const std::size_t h = img.height, w = img.width;
  Tensor out(Shape{h, w, 3});
  for (std::size_t i = 0; i < h * w * 3; ++i) out[i] = static_cast<float>(buf[i]) / 255.0f;
  return out;
}

inline Tensor decode_jpeg(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("unreadable image " + path.string() + ": cannot open");
  jpeg_decompress_struct cinfo;
  detail::JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = detail::jpeg_trap_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw DataError("unreadable image " + path.string() + ": " + trap.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t h = cinfo.output_height, w = cinfo.output_width;
  Tensor out(Shape{h, w, 3});
  std::vector<unsigned char> row(w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* rows[1] = {row.data()};
    jpeg_read_scanlines(&cinfo, rows, 1);
    const std::size_t y = cinfo.output_scanline - 1;
    for (std::size_t i = 0; i < w * 3; ++i)
      out[y * w * 3 + i] = static_cast<float>(row[i]) / 255.0f;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return out;
}

inline Tensor decode(const std::filesystem::path& path) {
  if (has_extension(path, {".png"})) return decode_png(path);
  if (has_extension(path, {".jpg", ".jpeg"})) return decode_jpeg(path);
  throw DataError("unreadable image " + path.string() + ": unsupported extension");
}

// Encoders, used by tests and tooling to produce real files.
inline void encode_png(const std::filesystem::path& path, const Tensor& x) {
  if (x.rank() != 3 || x.extent(2) != 3)
    throw ShapeError("encode_png: expects h x w x 3, got " + x.shape().str());
  const std::size_t h = x.extent(0), w = x.extent(1);
  std::vector<unsigned char> buf(h * w * 3);
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(x[i], 0.0f, 1.0f) * 255.0f));
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw DataError("cannot write " + path.string() + ": " + img.message);
}

inline void encode_jpeg(const std::filesystem::path& path, const Tensor& x, int quality = 95) {
  if (x.rank() != 3 || x.extent(2) != 3)
    throw ShapeError("encode_jpeg: expects h x w x 3, got " + x.shape().str());
  const std::size_t h = x.extent(0), w = x.extent(1);
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot write " + path.string());
  jpeg_compress_struct cinfo;
  detail::JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = detail::jpeg_trap_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
    throw DataError("cannot write " + path.string() + ": " + trap.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(w * 3);
  while (cinfo.next_scanline < cinfo.image_height) {
    const std::size_t y = cinfo.next_scanline;
    for (std::size_t i = 0; i < w * 3; ++i)
      row[i] = static_cast<unsigned char>(std::lround(std::clamp(x[y * w * 3 + i], 0.0f, 1.0f) * 255.0f));
    unsigned char* rows[1] = {row.data()};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

// Bilinear resize to side x side, channels preserved. Sample positions use
// the half-pixel convention so the identity size is exact.
inline Tensor resize_bilinear(const Tensor& x, std::size_t side) {
  if (x.rank() != 3) throw ShapeError("resize_bilinear: expects h x w x c, got " + x.shape().str());
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  if (h == side && w == side) return x;
  Tensor out(Shape{side, side, c});
  const double sy = static_cast<double>(h) / static_cast<double>(side);
  const double sx = static_cast<double>(w) / static_cast<double>(side);
  for (std::size_t oy = 0; oy < side; ++oy) {
    const double fy = std::max(0.0, (static_cast<double>(oy) + 0.5) * sy - 0.5);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const float wy = static_cast<float>(fy - static_cast<double>(y0));
    for (std::size_t ox = 0; ox < side; ++ox) {
      const double fx = std::max(0.0, (static_cast<double>(ox) + 0.5) * sx - 0.5);
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const float wx = static_cast<float>(fx - static_cast<double>(x0));
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float v00 = x.at({y0, x0, ch});
        const float v01 = x.at({y0, x1, ch});
        const float v10 = x.at({y1, x0, ch});
        const float v11 = x.at({y1, x1, ch});
        const float top = v00 + (v01 - v00) * wx;
        const float bot = v10 + (v11 - v10) * wx;
        out.at({oy, ox, ch}) = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

// Convert to the requested channel count: 3 -> 1 by luma-free average,
// 1 -> 3 by replication.
inline Tensor to_channels(const Tensor& x, int channels) {
  if (x.rank() != 3) throw ShapeError("to_channels: expects h x w x c, got " + x.shape().str());
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  if (channels != 1 && channels != 3) throw ValueError("to_channels: channels must be 1 or 3");
  if (c == static_cast<std::size_t>(channels)) return x;
  Tensor out(Shape{h, w, static_cast<std::size_t>(channels)});
  if (c == 3 && channels == 1) {
    for (std::size_t p = 0; p < h * w; ++p)
      out[p] = (x[p * 3] + x[p * 3 + 1] + x[p * 3 + 2]) / 3.0f;
  } else if (c == 1 && channels == 3) {
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) out[p * 3 + ch] = x[p];
  } else {
    throw ShapeError("to_channels: unsupported source channel count in " + x.shape().str());
  }
  return out;
}

// Decode, convert and resize one dataset image.
inline Tensor load_image(const std::filesystem::path& path, std::size_t target_side, int channels) {
  Tensor raw = decode(path);
  return resize_bilinear(to_channels(raw, channels), target_side);
}

}  // namespace mpnet::image

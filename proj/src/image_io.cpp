#include "evgo/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace evgo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kF32Magic[4] = {'E', 'V', 'G', 'F'};

void put_u32_le(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_png(const std::string& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth 8 or 16");
  const int c = image.channel_count();
  if (c != 1 && c != 3) throw std::invalid_argument("write_png: need 1 or 3 channels");
  const int h = image.height(), w = image.width();

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng failure on " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  if (bit_depth == 8) {
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          const double v = std::clamp(image.channels[static_cast<size_t>(ch)](y, x), 0.0, 1.0);
          row[static_cast<size_t>(x) * c + ch] = static_cast<unsigned char>(std::lround(v * scale));
        }
      }
      png_write_row(png, row.data());
    }
  } else {
    std::vector<uint16_t> row(static_cast<size_t>(w) * c);
    png_set_swap(png);  // host little-endian to PNG network order
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          const double v = std::clamp(image.channels[static_cast<size_t>(ch)](y, x), 0.0, 1.0);
          row[static_cast<size_t>(x) * c + ch] = static_cast<uint16_t>(std::lround(v * scale));
        }
      }
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng failure on " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  const int c = png_get_channels(png, info);
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: unsupported channel count in " + path);
  }

  Image image;
  image.channels.assign(static_cast<size_t>(c),
                        Eigen::ArrayXXd(static_cast<int>(h), static_cast<int>(w)));
  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<unsigned char> row(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double v;
        if (bit_depth == 8) {
          v = row[static_cast<size_t>(x) * c + ch] / scale;
        } else {
          uint16_t raw;
          std::memcpy(&raw, row.data() + (static_cast<size_t>(x) * c + ch) * 2, 2);
          v = raw / scale;
        }
        image.channels[static_cast<size_t>(ch)](static_cast<int>(y), static_cast<int>(x)) = v;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_f32(const std::string& path, const std::vector<Eigen::ArrayXXd>& planes) {
  if (planes.empty()) throw std::invalid_argument("write_f32: no planes");
  const auto h = planes[0].rows();
  const auto w = planes[0].cols();
  for (const auto& p : planes) {
    if (p.rows() != h || p.cols() != w) throw std::invalid_argument("write_f32: plane shape mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_f32: cannot open " + path);
  out.write(kF32Magic, 4);
  put_u32_le(out, static_cast<uint32_t>(h));
  put_u32_le(out, static_cast<uint32_t>(w));
  put_u32_le(out, static_cast<uint32_t>(planes.size()));
  std::vector<float> row(static_cast<size_t>(w));
  for (const auto& p : planes) {
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) row[static_cast<size_t>(x)] = static_cast<float>(p(y, x));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  if (!out) throw std::runtime_error("write_f32: write failed on " + path);
}

std::vector<Eigen::ArrayXXd> read_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_f32: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kF32Magic, 4) != 0) {
    throw ParseError("read_f32: bad magic in " + path);
  }
  const uint32_t h = get_u32_le(in);
  const uint32_t w = get_u32_le(in);
  const uint32_t c = get_u32_le(in);
  if (!in || h == 0 || w == 0 || c == 0 || c > 16) {
    throw ParseError("read_f32: bad header in " + path);
  }
  std::vector<Eigen::ArrayXXd> planes(c, Eigen::ArrayXXd(static_cast<int>(h), static_cast<int>(w)));
  std::vector<float> row(w);
  for (uint32_t ch = 0; ch < c; ++ch) {
    for (uint32_t y = 0; y < h; ++y) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
      if (!in) throw ParseError("read_f32: truncated data in " + path);
      for (uint32_t x = 0; x < w; ++x) {
        planes[ch](static_cast<int>(y), static_cast<int>(x)) = row[x];
      }
    }
  }
  return planes;
}

}  // namespace evgo

#include "blade/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "blade/grid.hpp"

namespace blade {
namespace {

// Decoded raster before conversion to real samples.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // interleaved
};

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

Raster read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Raster r;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  r.maxval = depth == 16 ? 65535 : 255;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(r.height));
  rows.resize(static_cast<std::size_t>(r.height));
  for (int y = 0; y < r.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count =
      static_cast<std::size_t>(r.width) * r.height * r.channels;
  r.samples.resize(count);
  if (depth == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      r.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) r.samples[i] = buffer[i];
  }
  if (r.channels != 1 && r.channels != 3) {
    throw IoError("unsupported PNG channel layout in " + path.string());
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& r) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  volatile const int depth = r.maxval > 255 ? 16 : 8;
  const std::size_t rowbytes =
      static_cast<std::size_t>(r.width) * r.channels * (depth / 8);
  std::vector<png_byte> buffer(rowbytes * static_cast<std::size_t>(r.height));
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(r.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(r.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(r.samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(r.height));
  for (int y = 0; y < r.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width),
               static_cast<png_uint_32>(r.height), depth,
               r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

int read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  Raster r;
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError(path.string() + " is not a binary PGM/PPM file");
  }
  r.channels = magic[1] == '5' ? 1 : 3;
  r.width = read_pnm_int(in);
  r.height = read_pnm_int(in);
  r.maxval = read_pnm_int(in);
  in.get();
  if (r.width < 1 || r.height < 1 || r.maxval < 1 || r.maxval > 65535) {
    throw IoError("malformed PNM header in " + path.string());
  }
  const std::size_t count =
      static_cast<std::size_t>(r.width) * r.height * r.channels;
  const int bytes = r.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(count * bytes);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError("truncated PNM data in " + path.string());
  r.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.samples[i] = bytes == 2
                       ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1])
                       : buf[i];
  }
  return r;
}

void write_pnm(const std::filesystem::path& path, const Raster& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (r.channels == 1 ? "P5" : "P6") << "\n"
      << r.width << " " << r.height << "\n"
      << r.maxval << "\n";
  const int bytes = r.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(r.samples.size() * bytes);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (bytes == 2) {
      buf[2 * i] = static_cast<unsigned char>(r.samples[i] >> 8);
      buf[2 * i + 1] = static_cast<unsigned char>(r.samples[i] & 0xff);
    } else {
      buf[i] = static_cast<unsigned char>(r.samples[i]);
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Raster read_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw IoError("unsupported image format: " + path.string());
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(path, r);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if (ext == ".pgm" && r.channels != 1) {
      throw IoError("PGM output requires a single channel");
    }
    if (ext == ".ppm" && r.channels != 3) {
      throw IoError("PPM output requires three channels");
    }
    return write_pnm(path, r);
  }
  throw IoError("unsupported image format: " + path.string());
}

Image channel_of(const Raster& r, int c, double peak) {
  Image img(r.width, r.height);
  const double scale = peak / r.maxval;
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = r.samples[i * r.channels + c] * scale;
  }
  return img;
}

std::uint16_t quantize(double v, const WriteOptions& opts, int maxval) {
  const double s = std::round(v / opts.peak * maxval);
  if (!(s > 0.0)) return 0;
  if (s >= maxval) return static_cast<std::uint16_t>(maxval);
  return static_cast<std::uint16_t>(s);
}

int maxval_for(const WriteOptions& opts) {
  if (opts.bit_depth == 8) return 255;
  if (opts.bit_depth == 16) return 65535;
  throw InvalidArgument("bit depth must be 8 or 16");
}

}  // namespace

Image read_image(const std::filesystem::path& path, double peak) {
  const Raster r = read_raster(path);
  if (r.channels == 1) return channel_of(r, 0, peak);
  return luma(ColorImage(channel_of(r, 0, peak), channel_of(r, 1, peak),
                         channel_of(r, 2, peak)));
}

ColorImage read_color_image(const std::filesystem::path& path, double peak) {
  const Raster r = read_raster(path);
  if (r.channels == 1) {
    Image g = channel_of(r, 0, peak);
    return ColorImage(g, g, g);
  }
  return ColorImage(channel_of(r, 0, peak), channel_of(r, 1, peak),
                    channel_of(r, 2, peak));
}

void write_image(const std::filesystem::path& path, const Image& img,
                 const WriteOptions& opts) {
  Raster r;
  r.width = img.width();
  r.height = img.height();
  r.channels = 1;
  r.maxval = maxval_for(opts);
  r.samples.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    r.samples[i] = quantize(img[i], opts, r.maxval);
  }
  write_raster(path, r);
}

void write_color_image(const std::filesystem::path& path, const ColorImage& img,
                       const WriteOptions& opts) {
  Raster r;
  r.width = img.width();
  r.height = img.height();
  r.channels = 3;
  r.maxval = maxval_for(opts);
  r.samples.resize(img.r.size() * 3);
  for (std::size_t i = 0; i < img.r.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      r.samples[i * 3 + c] = quantize(img.channel(c)[i], opts, r.maxval);
    }
  }
  write_raster(path, r);
}

}  // namespace blade

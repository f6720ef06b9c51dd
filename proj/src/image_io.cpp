#include "meshstitch/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include <jpeglib.h>

namespace meshstitch {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return tail == suffix;
}

RasterImage from_bytes(const std::vector<unsigned char>& bytes, int w, int h,
                       int ch) {
  RasterImage img = RasterImage::zeros(w, h, ch);
  for (std::size_t i = 0; i < img.samples.size(); ++i)
    img.samples[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

std::vector<unsigned char> to_bytes(const RasterImage& img) {
  std::vector<unsigned char> bytes(img.samples.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = img.samples[i];
    const int q = static_cast<int>(std::lround(v * 255.0f));
    bytes[i] = static_cast<unsigned char>(std::clamp(q, 0, 255));
  }
  return bytes;
}

RasterImage load_png(std::FILE* f, const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw StitchError(Stage::Io, "png init failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw StitchError(Stage::Io, "png init failed: " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw StitchError(Stage::Io, "png decode failed: " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw StitchError(Stage::Io,
                      "png with unsupported channel count: " + path);
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_bytes(bytes, w, h, ch);
}

struct JpegErrorJmp {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_longjmp(j_common_ptr cinfo) {
  std::longjmp(reinterpret_cast<JpegErrorJmp*>(cinfo->err)->jump, 1);
}

RasterImage load_jpeg(std::FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorJmp err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_longjmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw StitchError(Stage::Io, "jpeg decode failed: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int ch = cinfo.output_components;
  if (ch != 1 && ch != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw StitchError(Stage::Io, "jpeg with unsupported channels: " + path);
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * ch);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row =
        bytes.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * ch;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(bytes, w, h, ch);
}

}  // namespace

RasterImage load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw StitchError(Stage::Io, "cannot open image: " + path);
  unsigned char sig[8] = {0};
  const std::size_t got = std::fread(sig, 1, 8, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(f.get(), path);
  if (got >= 2 && sig[0] == 0xFF && sig[1] == 0xD8) return load_jpeg(f.get(), path);
  throw StitchError(Stage::Io, "not a PNG or JPEG file: " + path);
}

namespace {

void save_png(const std::string& path, const RasterImage& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw StitchError(Stage::Io, "cannot write image: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw StitchError(Stage::Io, "png init failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw StitchError(Stage::Io, "png init failed: " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw StitchError(Stage::Io, "png encode failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> bytes = to_bytes(img);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width * img.channels;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_jpeg(const std::string& path, const RasterImage& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw StitchError(Stage::Io, "cannot write image: " + path);
  jpeg_compress_struct cinfo;
  JpegErrorJmp err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_longjmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw StitchError(Stage::Io, "jpeg encode failed: " + path);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 90, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> bytes = to_bytes(img);
  while (cinfo.next_scanline < cinfo.image_height) {
    unsigned char* row = bytes.data() +
                         static_cast<std::size_t>(cinfo.next_scanline) *
                             img.width * img.channels;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

}  // namespace

void save_image(const std::string& path, const RasterImage& img) {
  if (img.empty()) throw StitchError(Stage::Io, "refusing to save empty image");
  if (has_suffix(path, ".jpg") || has_suffix(path, ".jpeg"))
    save_jpeg(path, img);
  else if (has_suffix(path, ".png"))
    save_png(path, img);
  else
    throw StitchError(Stage::Io, "unsupported image extension: " + path);
}

void save_mask(const std::string& path, const Mask& mask) {
  RasterImage img = RasterImage::zeros(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    img.samples[i] = mask.data[i] ? 1.0f : 0.0f;
  save_image(path, img);
}

Mask load_mask(const std::string& path) {
  const RasterImage img = to_luminance(load_image(path));
  Mask m = Mask::filled(img.width, img.height, 0);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = img.samples[i] >= 0.5f ? 1 : 0;
  return m;
}

}  // namespace meshstitch

#include <cstdio>
#include <memory>

#include <png.h>

#include "normgen/errors.hpp"
#include "normgen/image.hpp"

namespace normgen {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(const std::filesystem::path& path, const char* what) {
  throw Error(ErrorKind::Io, std::string(what) + ": " + path.string());
}

void on_png_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) png_fail(path, "cannot open image");

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    png_fail(path, "not a PNG file");
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    png_fail(path, "libpng initialisation failed");
  }

  Image image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  image.channels = png_get_channels(png, info);
  image.data.resize(static_cast<std::size_t>(image.width) * image.height * image.channels);
  rows.resize(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = image.data.data() + static_cast<std::size_t>(y) * image.width * image.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::MalformedImage, "only gray and RGB images can be written");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) png_fail(path, "cannot write image");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    png_fail(path, "libpng initialisation failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    png_fail(path, "failed writing PNG");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.data.data()) +
              static_cast<std::size_t>(y) * image.width * image.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image mask_to_image(const BinaryMask& mask) {
  Image image(static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1);
  for (Eigen::Index i = 0; i < mask.size(); ++i) image.data[i] = mask.data()[i] ? 255 : 0;
  return image;
}

BinaryMask image_to_mask(const Image& image) {
  if (image.channels != 1) {
    throw Error(ErrorKind::MalformedImage, "mask image must be single-channel");
  }
  BinaryMask mask(image.height, image.width);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = image.data[i] >= 128;
  return mask;
}

Image bytes_to_image(const ByteMap& bytes) {
  Image image(static_cast<int>(bytes.cols()), static_cast<int>(bytes.rows()), 1);
  for (Eigen::Index i = 0; i < bytes.size(); ++i) image.data[i] = bytes.data()[i];
  return image;
}

}  // namespace normgen

#include "uwe/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace uwe {

namespace {

std::uint32_t quantize(double v, std::uint32_t maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint32_t>(std::floor(c * maxval + 0.5));
}

void check_dimensions(std::uint64_t w, std::uint64_t h) {
  require(w > 0 && h > 0, Errc::empty_input, "image has zero width or height");
  require(w <= kMaxPixels && h <= kMaxPixels && w * h <= kMaxPixels, Errc::dimension_overflow,
          "image dimensions " + std::to_string(w) + "x" + std::to_string(h) + " exceed the supported maximum");
}

// ---- PPM -------------------------------------------------------------------

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::uint64_t {
    skip_ws();
    require(pos < bytes.size(), Errc::truncated, "PPM header ends early");
    require(std::isdigit(bytes[pos]), Errc::unsupported_format, "malformed PPM header");
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      require(v <= (std::uint64_t{1} << 40), Errc::dimension_overflow, "PPM header value too large");
    }
    return v;
  };
  const std::uint64_t w = read_uint(), h = read_uint(), maxval = read_uint();
  require(pos < bytes.size(), Errc::truncated, "PPM header ends early");
  require(std::isspace(bytes[pos]), Errc::unsupported_format, "malformed PPM header");
  ++pos;
  require(maxval == 255 || maxval == 65535, Errc::unsupported_format,
          "PPM maxval must be 255 or 65535, got " + std::to_string(maxval));
  check_dimensions(w, h);
  const std::size_t bps = maxval == 255 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w * h * 3) * bps;
  require(bytes.size() - pos >= need, Errc::truncated, "PPM pixel data is truncated");
  RgbImage img(w, h);
  auto out = img.data();
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < w * h * 3; ++i) {
    const std::uint32_t s = bps == 1 ? bytes[pos + i] : (std::uint32_t{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1];
    out[i] = s * scale;
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img, int bit_depth) {
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : img.data()) {
    const std::uint32_t q = quantize(v, maxval);
    if (bit_depth == 16) out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  return out;
}

// ---- PNG -------------------------------------------------------------------

struct PngReadContext {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  Errc failure = Errc::unsupported_format;
  char message[256] = {};
};

void png_read_bytes(png_structp png, png_bytep dst, png_size_t n) {
  auto* ctx = static_cast<PngReadContext*>(png_get_io_ptr(png));
  if (ctx->bytes.size() - ctx->pos < n) {
    ctx->failure = Errc::truncated;
    png_error(png, "PNG data is truncated");
  }
  std::memcpy(dst, ctx->bytes.data() + ctx->pos, n);
  ctx->pos += n;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngReadContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof ctx->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

struct DecodedPng {
  std::uint32_t width = 0, height = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> pixels;  // RGB rows, big-endian samples when 16-bit
};

// Returns false on libpng failure; ctx records why. Kept free of C++ objects
// with non-trivial lifetimes across setjmp except `out`, which is owned by the
// caller.
bool run_png_decode(PngReadContext& ctx, DecodedPng& out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, png_on_error, png_on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep>* volatile rows = nullptr;
  if (!info || setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    return false;
  }
  png_set_read_fn(png, &ctx, png_read_bytes);
  png_read_info(png, info);
  const std::uint64_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  if (w == 0 || h == 0 || w > kMaxPixels || h > kMaxPixels || w * h > kMaxPixels) {
    ctx.failure = Errc::dimension_overflow;
    png_error(png, "PNG dimensions exceed the supported maximum");
  }
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = static_cast<std::uint32_t>(w);
  out.height = static_cast<std::uint32_t>(h);
  out.bit_depth = png_get_bit_depth(png, info);
  if (png_get_channels(png, info) != 3 || (out.bit_depth != 8 && out.bit_depth != 16)) {
    ctx.failure = Errc::unsupported_format;
    png_error(png, "unsupported PNG layout");
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.assign(stride * h, 0);
  rows = new std::vector<png_bytep>(h);
  for (std::size_t y = 0; y < h; ++y) (*rows)[y] = out.pixels.data() + y * stride;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  delete rows;
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  PngReadContext ctx;
  ctx.bytes = bytes;
  DecodedPng png;
  if (!run_png_decode(ctx, png)) throw Error(ctx.failure, ctx.message[0] ? ctx.message : "PNG decode failed");
  RgbImage img(png.width, png.height);
  auto out = img.data();
  if (png.bit_depth == 8) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = png.pixels[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = ((std::uint32_t{png.pixels[2 * i]} << 8) | png.pixels[2 * i + 1]) / 65535.0;
  }
  return img;
}

struct PngWriteContext {
  std::vector<std::uint8_t>* out;
  char message[256] = {};
};

void png_write_bytes(png_structp png, png_bytep src, png_size_t n) {
  auto* ctx = static_cast<PngWriteContext*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), src, src + n);
}

void png_flush_noop(png_structp) {}

void png_on_write_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngWriteContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof ctx->message, "%s", msg);
  png_longjmp(png, 1);
}

bool run_png_encode(PngWriteContext& ctx, const std::vector<std::uint8_t>& raw, std::uint32_t w, std::uint32_t h,
                    int bit_depth) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_on_write_error, png_on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_set_write_fn(png, &ctx, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(w) * 3 * (bit_depth / 8);
  for (std::uint32_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(raw.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img, int bit_depth) {
  std::vector<std::uint8_t> raw;
  raw.reserve(img.data().size() * (bit_depth / 8));
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  for (double v : img.data()) {
    const std::uint32_t q = quantize(v, maxval);
    if (bit_depth == 16) raw.push_back(static_cast<std::uint8_t>(q >> 8));
    raw.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  std::vector<std::uint8_t> out;
  PngWriteContext ctx{&out};
  if (!run_png_encode(ctx, raw, static_cast<std::uint32_t>(img.width()), static_cast<std::uint32_t>(img.height()),
                      bit_depth))
    throw Error(Errc::io, ctx.message[0] ? ctx.message : "PNG encode failed");
  return out;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  require(!bytes.empty(), Errc::truncated, "image file is empty");
  if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kPngMagic)) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw Error(Errc::unsupported_format, "not a PNG or binary PPM file");
}

RgbImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_image(const RgbImage& img, ImageFormat format, int bit_depth) {
  require(!img.empty(), Errc::empty_input, "cannot encode an empty image");
  require(bit_depth == 8 || bit_depth == 16, Errc::parameter, "bit depth must be 8 or 16");
  return format == ImageFormat::png ? encode_png(img, bit_depth) : encode_ppm(img, bit_depth);
}

void save_image(const RgbImage& img, const std::filesystem::path& path, int bit_depth) {
  const std::string ext = lower_extension(path);
  ImageFormat format;
  if (ext == ".png")
    format = ImageFormat::png;
  else if (ext == ".ppm")
    format = ImageFormat::ppm;
  else
    throw Error(Errc::unsupported_format, "cannot infer image format from " + path.string());
  const auto bytes = encode_image(img, format, bit_depth);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), Errc::io, "write failed for " + path.string());
}

bool has_image_extension(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm";
}

}  // namespace uwe

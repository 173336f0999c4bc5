#include "melad/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

namespace melad {

namespace {

enum class Codec { png, jpeg, unknown };

Codec sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), sizeof sig);
  if (in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return Codec::png;
  if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return Codec::jpeg;
  return Codec::unknown;
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// Kept free of C++ objects with destructors between setjmp and longjmp.
bool decode_jpeg(std::FILE* f, RgbImage& out, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

RgbImage read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open image " + path.string());
  RgbImage out;
  char message[JMSG_LENGTH_MAX] = {};
  if (!decode_jpeg(f.get(), out, message)) {
    throw DataError("cannot decode JPEG " + path.string() + ": " + message);
  }
  return out;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  switch (sniff(path)) {
    case Codec::png:
      return read_png(path);
    case Codec::jpeg:
      return read_jpeg(path);
    case Codec::unknown:
      break;
  }
  throw DataError("not a PNG or JPEG image: " + path.string());
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.width * image.height * 3 || image.width == 0) {
    throw ShapeError("RGB image buffer does not match its extents");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Tensor to_planar(const RgbImage& image) {
  Tensor t = Tensor::chw(3, image.height, image.width);
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = image.pixels[i * 3 + c];
  return t;
}

Tensor resize_bilinear(const Tensor& chw, std::size_t out_h, std::size_t out_w) {
  if (chw.rank() != 3) throw ShapeError("resize_bilinear expects (C,H,W), got " + shape_string(chw.dims()));
  if (out_h == 0 || out_w == 0) throw ShapeError("resize target must be >= 1x1");
  const std::size_t c = chw.channels(), h = chw.height(), w = chw.width();
  if (h == out_h && w == out_w) return chw;

  struct Tap {
    std::size_t i0, i1;
    float f;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      t[d] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(s - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);

  Tensor out = Tensor::chw(c, out_h, out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = chw.raw() + ch * h * w;
    float* dst = out.raw() + ch * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const float* r0 = src + ty[y].i0 * w;
      const float* r1 = src + ty[y].i1 * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& t = tx[x];
        const float top = r0[t.i0] + t.f * (r0[t.i1] - r0[t.i0]);
        const float bot = r1[t.i0] + t.f * (r1[t.i1] - r1[t.i0]);
        dst[y * out_w + x] = top + ty[y].f * (bot - top);
      }
    }
  }
  return out;
}

Tensor preprocess(const RgbImage& image, std::size_t target_h, std::size_t target_w) {
  if (image.width == 0 || image.height == 0) throw DataError("empty image");
  Tensor t = resize_bilinear(to_planar(image), target_h, target_w);
  for (auto& v : t.data()) v /= 255.0f;
  return t;
}

Tensor preprocess(const std::filesystem::path& path, std::size_t target_h, std::size_t target_w) {
  return preprocess(read_image(path), target_h, target_w);
}

}  // namespace melad

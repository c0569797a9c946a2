// Copyright 2026 The ccbp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ccbp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>

#include "ccbp/error.hpp"

namespace ccbp {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngErr {
  char message[256] = {};
};

[[noreturn]] void PngError(png_structp png, png_const_charp msg) {
  auto* out = static_cast<PngErr*>(png_get_error_ptr(png));
  if (out) std::snprintf(out->message, sizeof out->message, "%s", msg);
  png_longjmp(png, 1);
}

void PngWarning(png_structp, png_const_charp) {}

FilePtr OpenForRead(const std::string& path) {
  if (!std::filesystem::exists(path)) Fail(ErrorCode::kIo, "no such file: " + path);
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) Fail(ErrorCode::kIo, "cannot open " + path);
  return f;
}

// The setjmp regions below own no C++ objects, so longjmp cannot skip a
// destructor.
bool Encode(std::FILE* f, const RgbImage& image, png_text* text, int text_count,
            PngErr* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, PngError, PngWarning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (text_count > 0) png_set_text(png, info, text, text_count);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + y * image.width * 3));
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return true;
}

// Reads the header, and the pixels into `alloc`'s buffer when `want_pixels`.
// Text chunks are copied through `on_text`.
struct DecodeResult {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  bool layout_ok = true;
};

using AllocFn = std::uint8_t* (*)(void* ctx, png_uint_32 w, png_uint_32 h);
using TextFn = void (*)(void* ctx, const png_text* text, int count);

bool Decode(std::FILE* f, bool want_pixels, AllocFn alloc, TextFn on_text, void* ctx,
            DecodeResult* result, PngErr* err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, PngError, PngWarning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  png_bytep* volatile rows = nullptr;
  if (!info || setjmp(png_jmpbuf(png))) {
    std::free(rows);
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  if (on_text) {
    png_textp text = nullptr;
    int count = 0;
    png_get_text(png, info, &text, &count);
    on_text(ctx, text, count);
  }
  if (want_pixels) {
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    result->width = png_get_image_width(png, info);
    result->height = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != static_cast<png_size_t>(result->width) * 3) {
      result->layout_ok = false;
      png_destroy_read_struct(&png, &info, nullptr);
      return true;
    }
    std::uint8_t* base = alloc(ctx, result->width, result->height);
    rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * result->height));
    for (png_uint_32 y = 0; y < result->height; ++y) rows[y] = base + y * result->width * 3;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    std::free(rows);
    rows = nullptr;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

void CheckSignature(std::FILE* f, const std::string& path) {
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    Fail(ErrorCode::kParse, "not a PNG file: " + path);
  }
}

}  // namespace

void WritePng(const std::string& path, const RgbImage& image,
              const std::map<std::string, std::string>& text) {
  Require(image.width > 0 && image.height > 0 &&
              image.rgb.size() == image.width * image.height * 3,
          ErrorCode::kInvalidArgument, "malformed raster for " + path);
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) Fail(ErrorCode::kIo, "cannot write " + path);
  std::vector<std::string> keys, values;
  for (const auto& [k, v] : text) {
    keys.push_back(k.substr(0, 79));
    values.push_back(v);
  }
  std::vector<png_text> chunks(keys.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = keys[i].data();
    chunks[i].text = values[i].data();
    chunks[i].text_length = values[i].size();
  }
  PngErr err;
  if (!Encode(f.get(), image, chunks.data(), static_cast<int>(chunks.size()), &err)) {
    Fail(ErrorCode::kIo, "png encode failed for " + path + ": " + err.message);
  }
}

RgbImage ReadPng(const std::string& path) {
  FilePtr f = OpenForRead(path);
  CheckSignature(f.get(), path);
  RgbImage out;
  DecodeResult res;
  PngErr err;
  AllocFn alloc = [](void* ctx, png_uint_32 w, png_uint_32 h) {
    auto* img = static_cast<RgbImage*>(ctx);
    img->width = w;
    img->height = h;
    img->rgb.assign(static_cast<std::size_t>(w) * h * 3, 0);
    return img->rgb.data();
  };
  if (!Decode(f.get(), true, alloc, nullptr, &out, &res, &err)) {
    Fail(ErrorCode::kParse, "corrupt PNG " + path + ": " + err.message);
  }
  Require(res.layout_ok, ErrorCode::kParse, "unsupported PNG layout in " + path);
  return out;
}

std::map<std::string, std::string> ReadPngText(const std::string& path) {
  FilePtr f = OpenForRead(path);
  CheckSignature(f.get(), path);
  std::map<std::string, std::string> out;
  DecodeResult res;
  PngErr err;
  TextFn on_text = [](void* ctx, const png_text* text, int count) {
    auto* m = static_cast<std::map<std::string, std::string>*>(ctx);
    for (int i = 0; i < count; ++i) {
      (*m)[text[i].key] = std::string(text[i].text, text[i].text_length);
    }
  };
  if (!Decode(f.get(), false, nullptr, on_text, &out, &res, &err)) {
    Fail(ErrorCode::kParse, "corrupt PNG " + path + ": " + err.message);
  }
  return out;
}

Tensor ToTensor(const RgbImage& image) {
  Tensor t({3, image.height, image.width});
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = image.rgb[i * 3 + c] / 255.0;
  }
  return t;
}

RgbImage ToRgb(const Tensor& chw) {
  Require(chw.rank() == 3 && chw.dim(0) == 3, ErrorCode::kShapeMismatch,
          "expected a (3, H, W) image, got " + ShapeString(chw.shape()));
  RgbImage img(chw.dim(2), chw.dim(1));
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(chw[c * plane + i], 0.0, 1.0);
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

}  // namespace ccbp

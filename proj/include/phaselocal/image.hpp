// Copyright 2026 The Phaselocal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phaselocal/util.hpp"

namespace phaselocal {

// Interleaved HWC float image with values in [0, 255].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c = 3, float fill = 0.f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
};

inline float clamp255(float v) { return v < 0.f ? 0.f : (v > 255.f ? 255.f : v); }

// Bilinear resampling with half-pixel centers; border samples clamp.
inline Image resize_bilinear(const Image& src, int target_w, int target_h) {
  check(src.width > 0 && src.height > 0, "resize_bilinear: empty source image");
  check(target_w > 0 && target_h > 0, "resize_bilinear: target size must be positive");
  Image dst(target_w, target_h, src.channels);
  const double sx = static_cast<double>(src.width) / target_w;
  const double sy = static_cast<double>(src.height) / target_h;
  for (int y = 0; y < target_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    int y1 = y0 + 1;
    y0 = std::clamp(y0, 0, src.height - 1);
    y1 = std::clamp(y1, 0, src.height - 1);
    for (int x = 0; x < target_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      int x1 = x0 + 1;
      x0 = std::clamp(x0, 0, src.width - 1);
      x1 = std::clamp(x1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return dst;
}

// Pixel crop over the half-open box [x0,x1) x [y0,y1), clipped to bounds.
inline Image crop(const Image& src, int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, src.width);
  x1 = std::clamp(x1, 0, src.width);
  y0 = std::clamp(y0, 0, src.height);
  y1 = std::clamp(y1, 0, src.height);
  check(x1 > x0 && y1 > y0, "crop: empty region after clipping");
  Image dst(x1 - x0, y1 - y0, src.channels);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < src.channels; ++c)
        dst.at(y - y0, x - x0, c) = src.at(y, x, c);
  return dst;
}

// --- drawing primitives (fixtures, plots) ---

inline void fill_rect(Image& img, int x0, int y0, int x1, int y1,
                      float r, float g, float b) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
}

inline void fill_disk(Image& img, double cx, double cy, double radius,
                      float r, float g, float b) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
      }
    }
}

// --- binary PPM (P6) I/O; the on-disk frame format of this project ---

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  check(img.channels == 3, "write_ppm: image must have 3 channels");
  check(!img.empty(), "write_ppm: empty image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(clamp255(img.at(y, x, c))));
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image: " + path.string());
  std::string magic;
  is >> magic;
  check(magic == "P6", "unsupported image format in " + path.string());
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  check(w > 0 && h > 0 && maxval == 255, "bad PPM header in " + path.string());
  is.get();  // single whitespace after header
  Image img(w, h, 3);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw std::runtime_error("truncated PPM: " + path.string());
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]);
  return img;
}

}  // namespace phaselocal

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "focus/geometry.hpp"

namespace focus {

/// Per-view prediction rasters: TOC mean and log-variance, camera-frame
/// surface normal, foreground mask and depth. Row-major, channel-interleaved
/// float32, pixel (u, v) at index v * width + u.
struct TocImage {
  int width = 0;
  int height = 0;
  std::vector<float> toc_mean;    // 3 channels
  std::vector<float> toc_logvar;  // 3 channels, natural log of sigma^2
  std::vector<float> normal;      // 3 channels, camera frame
  std::vector<float> mask;        // 1 channel
  std::vector<float> depth;       // 1 channel, +inf on background

  static constexpr float kMaskThreshold = 0.5f;
  static constexpr double kNoiselessVariance = 1e-12;

  static TocImage blank(int width, int height) {
    TocImage img;
    img.width = width;
    img.height = height;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    img.toc_mean.assign(3 * n, 0.0f);
    img.toc_logvar.assign(3 * n, 0.0f);
    img.normal.assign(3 * n, 0.0f);
    img.mask.assign(n, 0.0f);
    img.depth.assign(n, std::numeric_limits<float>::infinity());
    return img;
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  bool in_mask(std::size_t i) const { return mask[i] > kMaskThreshold; }
  bool in_mask(int u, int v) const { return contains(u, v) && in_mask(index(u, v)); }

  Vec3 toc(std::size_t i) const { return read3(toc_mean, i); }
  Vec3 logvar(std::size_t i) const { return read3(toc_logvar, i); }
  Vec3 normal_at(std::size_t i) const { return read3(normal, i); }
  Vec3 toc_variance(std::size_t i) const { return logvar(i).array().exp().matrix(); }

  std::size_t mask_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pixel_count(); ++i) n += in_mask(i) ? 1 : 0;
    return n;
  }

  static Vec3 read3(const std::vector<float>& buf, std::size_t i) {
    return {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
  }
  static void write3(std::vector<float>& buf, std::size_t i, const Vec3& v) {
    buf[3 * i] = static_cast<float>(v.x());
    buf[3 * i + 1] = static_cast<float>(v.y());
    buf[3 * i + 2] = static_cast<float>(v.z());
  }
};

}  // namespace focus

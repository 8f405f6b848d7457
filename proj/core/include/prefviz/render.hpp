#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prefviz/common.hpp"
#include "prefviz/env.hpp"

namespace prefviz::render {

inline constexpr int kFrameSize = 64;
inline constexpr int kCropSize = 56;
inline constexpr int kMaxCropOffset = kFrameSize - kCropSize;  // 8 -> 9x9 placements
/// Half width of a drawn link, in pixels.
inline constexpr double kLineHalfWidth = 1.0;
inline constexpr double kTargetRadius = 2.0;

/// Grayscale image, row-major, values in [0, 1].
struct Frame {
  int height = kFrameSize;
  int width = kFrameSize;
  std::vector<double> pixels = std::vector<double>(kFrameSize * kFrameSize, 0.0);

  double at(int row, int col) const { return pixels[row * width + col]; }
  double& at(int row, int col) { return pixels[row * width + col]; }
  double mean() const;
  /// Column vector view for network input (row-major flattening).
  Eigen::Map<const Eigen::VectorXd> flat() const {
    return {pixels.data(), static_cast<Eigen::Index>(pixels.size())};
  }
  bool operator==(const Frame&) const = default;
};

/// Line segment in pixel coordinates (x to the right, y downward).
struct Segment {
  double x0, y0, x1, y1;
};

struct Disk {
  double cx, cy, radius;
};

/// Primitives that make up the picture of a state.
struct Scene {
  std::vector<Segment> links;
  std::vector<Disk> disks;
};

Scene scene_of(const env::EnvSpec& spec, const env::EnvState& state);

/// Rasterizes `scene`: a pixel is lit when its center lies within
/// kLineHalfWidth of a link or inside a disk.
Frame rasterize(const Scene& scene);

Frame render(const env::EnvSpec& spec, const env::EnvState& state);

/// 56x56 window at (row_offset, col_offset), rescaled to 64x64 by
/// nearest-neighbour sampling.
Frame crop_at(const Frame& frame, int row_offset, int col_offset);

/// crop_at with offsets uniform on {0..8}^2.
Frame random_crop(const Frame& frame, Rng& rng);

/// 8-bit grayscale PNG.
std::string encode_png(const Frame& frame);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage decode_png(const std::string& bytes);

/// The 8-bit value a frame pixel is exported as.
inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(v <= 0.0 ? 0 : v >= 1.0 ? 255 : static_cast<int>(v * 255.0 + 0.5));
}

}  // namespace prefviz::render

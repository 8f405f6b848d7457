#include "prefviz/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <png.h>

namespace prefviz::render {

namespace {

constexpr double kCenter = kFrameSize / 2.0;
constexpr double kReacherScale = 130.0;  // pixels per world unit
constexpr double kTiltLength = 24.0;
constexpr double kCurlBodyHalf = 10.0;
constexpr double kCurlRotor = 14.0;

double distance_to_segment(double px, double py, const Segment& s) {
  double dx = s.x1 - s.x0;
  double dy = s.y1 - s.y0;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

}  // namespace

double Frame::mean() const {
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

Scene scene_of(const env::EnvSpec& spec, const env::EnvState& state) {
  Scene scene;
  const auto& q = state.obs;
  switch (spec.name) {
    case env::EnvName::kPlanarReacher: {
      auto to_px = [](double x, double y) {
        return std::pair{kCenter + kReacherScale * x, kCenter - kReacherScale * y};
      };
      double ex = env::kReacherLink * std::cos(q[0]);
      double ey = env::kReacherLink * std::sin(q[0]);
      auto tip = env::fingertip(q[0], q[1]);
      auto [bx, by] = to_px(0.0, 0.0);
      auto [jx, jy] = to_px(ex, ey);
      auto [tx, ty] = to_px(tip[0], tip[1]);
      scene.links.push_back({bx, by, jx, jy});
      scene.links.push_back({jx, jy, tx, ty});
      auto [gx, gy] = to_px(env::kReacherTarget[0], env::kReacherTarget[1]);
      scene.disks.push_back({gx, gy, kTargetRadius});
      break;
    }
    case env::EnvName::kTiltStand:
      scene.links.push_back({kCenter, kCenter, kCenter + kTiltLength * std::cos(q[0]),
                             kCenter - kTiltLength * std::sin(q[0])});
      break;
    case env::EnvName::kChainCurl: {
      double lx = kCenter - kCurlBodyHalf;
      double rx = kCenter + kCurlBodyHalf;
      scene.links.push_back({lx, kCenter, rx, kCenter});
      // Positive angles bend both rotors downward, so a positive product is a
      // horseshoe and mixed signs give a Z shape.
      scene.links.push_back(
          {lx, kCenter, lx - kCurlRotor * std::cos(q[0]), kCenter + kCurlRotor * std::sin(q[0])});
      scene.links.push_back(
          {rx, kCenter, rx + kCurlRotor * std::cos(q[1]), kCenter + kCurlRotor * std::sin(q[1])});
      break;
    }
  }
  return scene;
}

Frame rasterize(const Scene& scene) {
  Frame frame;
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      double px = c + 0.5;
      double py = r + 0.5;
      bool lit = std::any_of(scene.links.begin(), scene.links.end(), [&](const Segment& s) {
        return distance_to_segment(px, py, s) <= kLineHalfWidth;
      });
      lit = lit || std::any_of(scene.disks.begin(), scene.disks.end(), [&](const Disk& d) {
              return std::hypot(px - d.cx, py - d.cy) <= d.radius;
            });
      if (lit) frame.at(r, c) = 1.0;
    }
  }
  return frame;
}

Frame render(const env::EnvSpec& spec, const env::EnvState& state) {
  return rasterize(scene_of(spec, state));
}

Frame crop_at(const Frame& frame, int row_offset, int col_offset) {
  if (row_offset < 0 || col_offset < 0 || row_offset > kMaxCropOffset || col_offset > kMaxCropOffset)
    throw std::out_of_range("crop offset outside frame");
  Frame out;
  for (int r = 0; r < kFrameSize; ++r) {
    int src_r = row_offset + (r * kCropSize) / kFrameSize;
    for (int c = 0; c < kFrameSize; ++c) {
      int src_c = col_offset + (c * kCropSize) / kFrameSize;
      out.at(r, c) = frame.at(src_r, src_c);
    }
  }
  return out;
}

Frame random_crop(const Frame& frame, Rng& rng) {
  std::uniform_int_distribution<int> offset(0, kMaxCropOffset);
  int row = offset(rng);
  int col = offset(rng);
  return crop_at(frame, row, col);
}

std::string encode_png(const Frame& frame) {
  std::vector<std::uint8_t> bytes(frame.pixels.size());
  std::transform(frame.pixels.begin(), frame.pixels.end(), bytes.begin(), quantize);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(std::string("png sizing failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

GrayImage decode_png(const std::string& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw std::runtime_error(std::string("png decode failed: ") + image.message);
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error(std::string("png decode failed: ") + image.message);
  }
  return out;
}

}  // namespace prefviz::render

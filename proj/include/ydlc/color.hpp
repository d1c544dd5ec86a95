#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ydlc/tensor.hpp"

namespace ydlc {

// One planar 8-bit 4:2:0 frame. width/height are the luma extents.
struct Yuv420Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> u;
  std::vector<std::uint8_t> v;

  Yuv420Frame() = default;
  Yuv420Frame(int width, int height);

  int chroma_width() const { return width / 2; }
  int chroma_height() const { return height / 2; }
  static std::size_t frame_bytes(int width, int height) {
    return static_cast<std::size_t>(width) * height * 3 / 2;
  }
  // Throws DataError on odd extents or plane sizes that do not match.
  void validate() const;
  friend bool operator==(const Yuv420Frame&, const Yuv420Frame&) = default;
};

// Normalized float view: y is [N,1,H,W], uv is [N,2,H/2,W/2], values in [0,1].
struct FrameTensors {
  Tensor y;
  Tensor uv;
};

// Planar I420: all of Y, then U, then V.
Yuv420Frame read_yuv420(const std::string& path, int width, int height, std::size_t frame_index);
void write_yuv420(const Yuv420Frame& frame, const std::string& path, bool append);
std::size_t count_yuv420_frames(const std::string& path, int width, int height);
std::vector<std::uint8_t> to_i420_bytes(const Yuv420Frame& frame);
Yuv420Frame from_i420_bytes(std::span<const std::uint8_t> bytes, int width, int height);

FrameTensors to_tensors(const Yuv420Frame& frame);
// Rounds half-up and clamps to [0, 255]; uses batch item `index`.
Yuv420Frame from_tensors(const FrameTensors& t, int index = 0);
float byte_to_unit(std::uint8_t v);
std::uint8_t unit_to_byte(float v);

// [N,1,H,W] -> [N,4,H/2,W/2]: (even,even), (even,odd), (odd,even), (odd,odd).
Tensor luma_split4(const Tensor& y);
Tensor luma_merge4(const Tensor& split);
// Channels 0-3: luma_split4(y); 4, 5: U, V.
Tensor pack_six(const FrameTensors& frame);
FrameTensors unpack_six(const Tensor& packed);

// Binary P6, maxval 255. Full-range BT.601 with 2x2 box-averaged chroma; odd
// extents are cropped by one.
Yuv420Frame ppm_to_yuv420(std::span<const std::uint8_t> ppm);
// Nearest-neighbour chroma upsampling.
std::vector<std::uint8_t> yuv420_to_ppm(const Yuv420Frame& frame);

inline constexpr double kPsnrCap = 100.0;

double plane_mse(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> test);
// 10 log10(peak^2 / MSE), capped at kPsnrCap for identical planes.
double psnr(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> test,
            double peak = 255.0);

struct PlaneQuality {
  double y = 0.0;
  double u = 0.0;
  double v = 0.0;
};
PlaneQuality frame_psnr(const Yuv420Frame& reference, const Yuv420Frame& test);
PlaneQuality frame_mse(const Yuv420Frame& reference, const Yuv420Frame& test);

struct PaddedFrame {
  FrameTensors tensors;
  // Extents before padding.
  int width = 0;
  int height = 0;
};

// Reflect-pads luma on the right/bottom to a multiple of `multiple`, chroma to
// the matching half extents.
PaddedFrame pad_to_multiple(const FrameTensors& frame, int multiple = 64);
FrameTensors crop_back(const FrameTensors& padded, int width, int height);

// Every `stride`-th frame index of a sequence with `frames` frames.
std::vector<std::size_t> sampled_frame_indices(std::size_t frames, std::size_t stride = 8);

}  // namespace ydlc

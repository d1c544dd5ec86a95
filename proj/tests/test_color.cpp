#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ydlc/bytes.hpp"
#include "ydlc/color.hpp"
#include "ydlc/error.hpp"

using namespace ydlc;
namespace fs = std::filesystem;

namespace {

Yuv420Frame random_frame(int w, int h, std::mt19937_64& rng) {
  Yuv420Frame f(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto* p : {&f.y, &f.u, &f.v})
    for (auto& b : *p) b = static_cast<std::uint8_t>(d(rng));
  return f;
}

std::vector<std::uint8_t> ppm(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int i = 0; i < w * h; ++i) {
    out.push_back(r);
    out.push_back(g);
    out.push_back(b);
  }
  return out;
}

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("ydlc_color_" + name)).string();
}

}  // namespace

TEST(Yuv420, FrameByteCount) {
  EXPECT_EQ(Yuv420Frame::frame_bytes(4, 2), 12u);
  EXPECT_THROW(Yuv420Frame(3, 2), DataError);
}

TEST(Yuv420, WriteReadIsByteIdenticalAndIndexed) {
  std::mt19937_64 rng(1);
  const std::string path = temp_path("seq.yuv");
  const Yuv420Frame a = random_frame(8, 6, rng), b = random_frame(8, 6, rng);
  write_yuv420(a, path, false);
  write_yuv420(b, path, true);
  EXPECT_EQ(fs::file_size(path), 2 * Yuv420Frame::frame_bytes(8, 6));
  EXPECT_EQ(count_yuv420_frames(path, 8, 6), 2u);
  EXPECT_EQ(read_yuv420(path, 8, 6, 0), a);
  EXPECT_EQ(read_yuv420(path, 8, 6, 1), b);
  // Frame k starts at byte k * 1.5 * W * H, laid out Y then U then V.
  const auto raw = read_file(path);
  EXPECT_EQ(raw[72], b.y[0]);
  EXPECT_EQ(raw[72 + 48], b.u[0]);
  EXPECT_EQ(raw[72 + 48 + 12], b.v[0]);
  EXPECT_THROW(read_yuv420(path, 8, 6, 2), DataError);
  EXPECT_THROW(read_yuv420(path, 7, 6, 0), DataError);
  fs::remove(path);
}

TEST(LumaSplit, FourPhasesOfAFourByFourBlock) {
  Tensor y({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) y[i] = static_cast<float>(i);
  const Tensor s = luma_split4(y);
  ASSERT_EQ(s.shape(), (Shape{1, 4, 2, 2}));
  EXPECT_EQ(s.at(0, 0, 0, 0), 0.0f);
  EXPECT_EQ(s.at(0, 0, 1, 1), 10.0f);
  EXPECT_EQ(s.at(0, 1, 0, 0), 1.0f);
  EXPECT_EQ(s.at(0, 2, 0, 0), 4.0f);
  EXPECT_EQ(s.at(0, 3, 0, 0), 5.0f);
  EXPECT_EQ(s.at(0, 3, 1, 1), 15.0f);
}

TEST(LumaSplit, ConstantPlaneAndInverse) {
  const Tensor c = luma_split4(Tensor({1, 1, 6, 8}, 0.25f));
  for (float v : c.data()) EXPECT_EQ(v, 0.25f);
  std::mt19937_64 rng(2);
  const Tensor y = gradcheck::random_tensor({2, 1, 8, 10}, rng);
  const Tensor back = luma_merge4(luma_split4(y));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(back[i], y[i]);
  EXPECT_THROW(luma_split4(Tensor({1, 1, 5, 4})), ShapeError);
}

TEST(PackSix, LayoutAndInverse) {
  std::mt19937_64 rng(3);
  const FrameTensors f = to_tensors(random_frame(64, 64, rng));
  const Tensor p = pack_six(f);
  EXPECT_EQ(p.shape(), (Shape{1, 6, 32, 32}));
  for (int i = 0; i < 32 * 32; ++i) EXPECT_EQ(p.plane(0, 4)[i], f.uv.plane(0, 0)[i]);
  const FrameTensors back = unpack_six(p);
  EXPECT_EQ(from_tensors(back), from_tensors(f));
  EXPECT_THROW(pack_six(FrameTensors{Tensor({1, 1, 64, 64}), Tensor({1, 2, 16, 16})}),
               ShapeError);
}

TEST(Ppm, ConversionMatrix) {
  const auto convert = [](std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const Yuv420Frame f = ppm_to_yuv420(ppm(2, 2, r, g, b));
    return std::array<int, 3>{f.y[0], f.u[0], f.v[0]};
  };
  EXPECT_EQ(convert(128, 128, 128), (std::array<int, 3>{128, 128, 128}));
  EXPECT_EQ(convert(255, 255, 255), (std::array<int, 3>{255, 128, 128}));
  EXPECT_EQ(convert(255, 0, 0), (std::array<int, 3>{76, 85, 255}));
}

TEST(Ppm, OddExtentsAreCroppedAndBadHeadersRejected) {
  const Yuv420Frame f = ppm_to_yuv420(ppm(5, 3, 10, 20, 30));
  EXPECT_EQ(f.width, 4);
  EXPECT_EQ(f.height, 2);
  auto bad = ppm(2, 2, 0, 0, 0);
  bad[1] = '3';
  EXPECT_THROW(ppm_to_yuv420(bad), DataError);
  const std::string p16 = "P6\n2 2\n65535\n";
  EXPECT_THROW(ppm_to_yuv420(std::vector<std::uint8_t>(p16.begin(), p16.end())), DataError);
}

TEST(Ppm, AchromaticRoundTripWithinOneLevel) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(0, 255);
  const std::string header = "P6\n8 8\n255\n";
  std::vector<std::uint8_t> img(header.begin(), header.end());
  std::vector<int> grays;
  for (int i = 0; i < 64; ++i) {
    const int g = d(rng);
    grays.push_back(g);
    for (int k = 0; k < 3; ++k) img.push_back(static_cast<std::uint8_t>(g));
  }
  const auto back = yuv420_to_ppm(ppm_to_yuv420(img));
  for (int i = 0; i < 64; ++i) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_LE(std::abs(back[header.size() + 3 * i + k] - grays[i]), 1);
    }
  }
}

TEST(Normalization, EveryByteRoundTrips) {
  for (int v = 0; v < 256; ++v) {
    EXPECT_EQ(unit_to_byte(byte_to_unit(static_cast<std::uint8_t>(v))), v);
  }
  EXPECT_EQ(unit_to_byte(-0.2f), 0);
  EXPECT_EQ(unit_to_byte(1.3f), 255);
}

TEST(Psnr, ClosedForms) {
  const std::vector<std::uint8_t> a(100, 100), b(100, 101), c(4, 0), d(4, 255);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, b), 48.1308, 1e-4);
  EXPECT_NEAR(psnr(c, d), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(plane_mse(a, b), 1.0);
}

TEST(Padding, NextMultipleAndInverse) {
  const PaddedFrame aligned = pad_to_multiple(FrameTensors{Tensor({1, 1, 64, 128}, 0.5f),
                                                           Tensor({1, 2, 32, 64}, 0.5f)});
  EXPECT_EQ(aligned.tensors.y.shape(), (Shape{1, 1, 64, 128}));
  const PaddedFrame hd = pad_to_multiple(
      FrameTensors{Tensor({1, 1, 1080, 1920}), Tensor({1, 2, 540, 960})});
  EXPECT_EQ(hd.tensors.y.shape(), (Shape{1, 1, 1088, 1920}));
  EXPECT_EQ(hd.tensors.uv.shape(), (Shape{1, 2, 544, 960}));

  std::mt19937_64 rng(5);
  const Yuv420Frame f = random_frame(30, 18, rng);
  const PaddedFrame p = pad_to_multiple(to_tensors(f));
  EXPECT_EQ(p.tensors.y.shape(), (Shape{1, 1, 64, 64}));
  // Reflection: the first padded column mirrors the one before the edge.
  EXPECT_EQ(p.tensors.y.at(0, 0, 3, 30), p.tensors.y.at(0, 0, 3, 28));
  EXPECT_EQ(from_tensors(crop_back(p.tensors, p.width, p.height)), f);
}

TEST(Sampling, EveryEighthFrame) {
  const auto idx = sampled_frame_indices(64);
  ASSERT_EQ(idx.size(), 8u);
  EXPECT_EQ(idx[1], 8u);
  EXPECT_EQ(idx.back(), 56u);
}

#include "ydlc/color.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <filesystem>
#include <fstream>

#include "ydlc/bytes.hpp"
#include "ydlc/error.hpp"

namespace ydlc {

Yuv420Frame::Yuv420Frame(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0 || w % 2 != 0 || h % 2 != 0) {
    throw DataError("YUV 4:2:0 frame needs positive even extents, got " + std::to_string(w) + "x" +
                    std::to_string(h));
  }
  y.assign(static_cast<std::size_t>(w) * h, 0);
  u.assign(static_cast<std::size_t>(w / 2) * (h / 2), 128);
  v.assign(u.size(), 128);
}

void Yuv420Frame::validate() const {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw DataError("YUV 4:2:0 frame needs positive even extents, got " + std::to_string(width) +
                    "x" + std::to_string(height));
  }
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  if (y.size() != luma || u.size() != luma / 4 || v.size() != luma / 4) {
    throw DataError("YUV 4:2:0 plane sizes do not match " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

std::vector<std::uint8_t> to_i420_bytes(const Yuv420Frame& frame) {
  frame.validate();
  std::vector<std::uint8_t> out;
  out.reserve(Yuv420Frame::frame_bytes(frame.width, frame.height));
  out.insert(out.end(), frame.y.begin(), frame.y.end());
  out.insert(out.end(), frame.u.begin(), frame.u.end());
  out.insert(out.end(), frame.v.begin(), frame.v.end());
  return out;
}

Yuv420Frame from_i420_bytes(std::span<const std::uint8_t> bytes, int width, int height) {
  Yuv420Frame f(width, height);
  if (bytes.size() != Yuv420Frame::frame_bytes(width, height)) {
    throw DataError("I420 frame of " + std::to_string(width) + "x" + std::to_string(height) +
                    " needs " + std::to_string(Yuv420Frame::frame_bytes(width, height)) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  const std::size_t luma = f.y.size(), chroma = f.u.size();
  std::copy_n(bytes.begin(), luma, f.y.begin());
  std::copy_n(bytes.begin() + luma, chroma, f.u.begin());
  std::copy_n(bytes.begin() + luma + chroma, chroma, f.v.begin());
  return f;
}

Yuv420Frame read_yuv420(const std::string& path, int width, int height, std::size_t frame_index) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw DataError("YUV 4:2:0 needs positive even extents, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
  const std::size_t frame_bytes = Yuv420Frame::frame_bytes(width, height);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  in.seekg(0, std::ios::end);
  const auto length = static_cast<std::size_t>(in.tellg());
  if (length < (frame_index + 1) * frame_bytes) {
    throw DataError("'" + path + "' holds " + std::to_string(length) + " bytes; frame " +
                    std::to_string(frame_index) + " needs " +
                    std::to_string((frame_index + 1) * frame_bytes));
  }
  std::vector<std::uint8_t> buf(frame_bytes);
  in.seekg(static_cast<std::streamoff>(frame_index * frame_bytes));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(frame_bytes));
  if (!in) throw DataError("short read from '" + path + "'");
  return from_i420_bytes(buf, width, height);
}

void write_yuv420(const Yuv420Frame& frame, const std::string& path, bool append) {
  write_file(path, to_i420_bytes(frame), append);
}

std::size_t count_yuv420_frames(const std::string& path, int width, int height) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot stat '" + path + "'");
  return static_cast<std::size_t>(size) / Yuv420Frame::frame_bytes(width, height);
}

float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

std::uint8_t unit_to_byte(float v) {
  const float scaled = std::floor(v * 255.0f + 0.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

FrameTensors to_tensors(const Yuv420Frame& frame) {
  frame.validate();
  const int cw = frame.chroma_width(), ch = frame.chroma_height();
  FrameTensors t{Tensor({1, 1, frame.height, frame.width}), Tensor({1, 2, ch, cw})};
  for (std::size_t i = 0; i < frame.y.size(); ++i) t.y[i] = byte_to_unit(frame.y[i]);
  for (std::size_t i = 0; i < frame.u.size(); ++i) {
    t.uv.plane(0, 0)[i] = byte_to_unit(frame.u[i]);
    t.uv.plane(0, 1)[i] = byte_to_unit(frame.v[i]);
  }
  return t;
}

Yuv420Frame from_tensors(const FrameTensors& t, int index) {
  const Shape& ys = t.y.shape();
  const Shape& cs = t.uv.shape();
  if (ys.c != 1 || cs.c != 2 || cs.h * 2 != ys.h || cs.w * 2 != ys.w || index >= ys.n ||
      index >= cs.n) {
    throw ShapeError("from_tensors: inconsistent luma " + ys.str() + " / chroma " + cs.str());
  }
  Yuv420Frame f(ys.w, ys.h);
  const float* yp = t.y.plane(index, 0);
  for (std::size_t i = 0; i < f.y.size(); ++i) f.y[i] = unit_to_byte(yp[i]);
  const float* up = t.uv.plane(index, 0);
  const float* vp = t.uv.plane(index, 1);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = unit_to_byte(up[i]);
    f.v[i] = unit_to_byte(vp[i]);
  }
  return f;
}

Tensor luma_split4(const Tensor& y) {
  const Shape& s = y.shape();
  if (s.c != 1) throw ShapeError("luma_split4: expected one channel, got " + s.str());
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("luma_split4: odd extents " + s.str());
  Tensor out({s.n, 4, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int k = 0; k < 4; ++k) {
      const int dy = k / 2, dx = k % 2;
      for (int r = 0; r < s.h / 2; ++r)
        for (int c = 0; c < s.w / 2; ++c) out.at(n, k, r, c) = y.at(n, 0, 2 * r + dy, 2 * c + dx);
    }
  return out;
}

Tensor luma_merge4(const Tensor& split) {
  const Shape& s = split.shape();
  if (s.c != 4) throw ShapeError("luma_merge4: expected four channels, got " + s.str());
  Tensor out({s.n, 1, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int k = 0; k < 4; ++k) {
      const int dy = k / 2, dx = k % 2;
      for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) out.at(n, 0, 2 * r + dy, 2 * c + dx) = split.at(n, k, r, c);
    }
  return out;
}

Tensor pack_six(const FrameTensors& frame) {
  const Shape& ys = frame.y.shape();
  const Shape& cs = frame.uv.shape();
  if (cs.c != 2 || cs.n != ys.n || cs.h * 2 != ys.h || cs.w * 2 != ys.w) {
    throw ShapeError("pack_six: luma " + ys.str() + " and chroma " + cs.str() + " disagree");
  }
  const Tensor luma = luma_split4(frame.y);
  Tensor out({cs.n, 6, cs.h, cs.w});
  const std::size_t plane = cs.plane();
  for (int n = 0; n < cs.n; ++n) {
    std::copy_n(luma.plane(n, 0), 4 * plane, out.plane(n, 0));
    std::copy_n(frame.uv.plane(n, 0), 2 * plane, out.plane(n, 4));
  }
  return out;
}

FrameTensors unpack_six(const Tensor& packed) {
  const Shape& s = packed.shape();
  if (s.c != 6) throw ShapeError("unpack_six: expected six channels, got " + s.str());
  Tensor luma({s.n, 4, s.h, s.w});
  Tensor uv({s.n, 2, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(packed.plane(n, 0), 4 * plane, luma.plane(n, 0));
    std::copy_n(packed.plane(n, 4), 2 * plane, uv.plane(n, 0));
  }
  return {luma_merge4(luma), std::move(uv)};
}

namespace {

std::uint8_t round_clamp(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Skips whitespace and '#' comments in a PNM header.
std::size_t skip_blank(std::span<const std::uint8_t> in, std::size_t pos) {
  while (pos < in.size()) {
    if (in[pos] == '#') {
      while (pos < in.size() && in[pos] != '\n') ++pos;
    } else if (std::isspace(in[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

int header_int(std::span<const std::uint8_t> in, std::size_t& pos) {
  pos = skip_blank(in, pos);
  long value = 0;
  int digits = 0;
  while (pos < in.size() && std::isdigit(in[pos]) && digits < 9) {
    value = value * 10 + (in[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0) throw DataError("PPM: malformed header");
  return static_cast<int>(value);
}

}  // namespace

Yuv420Frame ppm_to_yuv420(std::span<const std::uint8_t> ppm) {
  if (ppm.size() < 2 || ppm[0] != 'P' || ppm[1] != '6') throw DataError("PPM: not a binary P6 file");
  std::size_t pos = 2;
  const int width = header_int(ppm, pos);
  const int height = header_int(ppm, pos);
  const int maxval = header_int(ppm, pos);
  if (maxval != 255) throw DataError("PPM: maxval must be 255, got " + std::to_string(maxval));
  if (pos >= ppm.size() || !std::isspace(ppm[pos])) throw DataError("PPM: malformed header");
  ++pos;
  if (ppm.size() - pos < static_cast<std::size_t>(width) * height * 3) {
    throw DataError("PPM: truncated pixel data");
  }
  const int w = width & ~1, h = height & ~1;
  if (w == 0 || h == 0) throw DataError("PPM: image too small for 4:2:0");
  const std::uint8_t* rgb = ppm.data() + pos;
  Yuv420Frame f(w, h);
  std::vector<double> u_full(static_cast<std::size_t>(w) * h), v_full(u_full.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::uint8_t* p = rgb + (static_cast<std::size_t>(r) * width + c) * 3;
      const double R = p[0], G = p[1], B = p[2];
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      f.y[i] = round_clamp(0.299 * R + 0.587 * G + 0.114 * B);
      u_full[i] = 128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B;
      v_full[i] = 128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B;
    }
  const int cw = w / 2;
  for (int r = 0; r < h / 2; ++r)
    for (int c = 0; c < cw; ++c) {
      const std::size_t a = static_cast<std::size_t>(2 * r) * w + 2 * c;
      const std::size_t b = a + static_cast<std::size_t>(w);
      const std::size_t o = static_cast<std::size_t>(r) * cw + c;
      f.u[o] = round_clamp((u_full[a] + u_full[a + 1] + u_full[b] + u_full[b + 1]) / 4.0);
      f.v[o] = round_clamp((v_full[a] + v_full[a + 1] + v_full[b] + v_full[b + 1]) / 4.0);
    }
  return f;
}

std::vector<std::uint8_t> yuv420_to_ppm(const Yuv420Frame& frame) {
  frame.validate();
  const std::string header =
      "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + frame.y.size() * 3);
  const int cw = frame.chroma_width();
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      const double Y = frame.y[static_cast<std::size_t>(r) * frame.width + c];
      const std::size_t ci = static_cast<std::size_t>(r / 2) * cw + c / 2;
      const double U = frame.u[ci] - 128.0, V = frame.v[ci] - 128.0;
      out.push_back(round_clamp(Y + 1.402 * V));
      out.push_back(round_clamp(Y - 0.344136 * U - 0.714136 * V));
      out.push_back(round_clamp(Y + 1.772 * U));
    }
  return out;
}

double plane_mse(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> test) {
  if (reference.size() != test.size()) throw ShapeError("plane_mse: plane sizes differ");
  if (reference.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - test[i];
    acc += d * d;
  }
  return acc / static_cast<double>(reference.size());
}

double psnr(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> test,
            double peak) {
  const double e = plane_mse(reference, test);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

PlaneQuality frame_psnr(const Yuv420Frame& reference, const Yuv420Frame& test) {
  return {psnr(reference.y, test.y), psnr(reference.u, test.u), psnr(reference.v, test.v)};
}

PlaneQuality frame_mse(const Yuv420Frame& reference, const Yuv420Frame& test) {
  return {plane_mse(reference.y, test.y), plane_mse(reference.u, test.u),
          plane_mse(reference.v, test.v)};
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor reflect_pad(const Tensor& t, int h, int w) {
  const Shape& s = t.shape();
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < h; ++r) {
        const int sr = reflect_index(r, s.h);
        for (int col = 0; col < w; ++col) out.at(n, c, r, col) = t.at(n, c, sr, reflect_index(col, s.w));
      }
  return out;
}

Tensor crop_tensor(const Tensor& t, int h, int w) {
  const Shape& s = t.shape();
  if (h > s.h || w > s.w) throw ShapeError("crop_back: target exceeds padded extents");
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < h; ++r)
        std::copy_n(t.plane(n, c) + static_cast<std::size_t>(r) * s.w, w,
                    out.plane(n, c) + static_cast<std::size_t>(r) * w);
  return out;
}

}  // namespace

PaddedFrame pad_to_multiple(const FrameTensors& frame, int multiple) {
  const Shape& s = frame.y.shape();
  if (multiple < 2 || multiple % 2 != 0) throw ShapeError("pad_to_multiple: multiple must be even");
  const int h = (s.h + multiple - 1) / multiple * multiple;
  const int w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return {frame, s.w, s.h};
  return {{reflect_pad(frame.y, h, w), reflect_pad(frame.uv, h / 2, w / 2)}, s.w, s.h};
}

FrameTensors crop_back(const FrameTensors& padded, int width, int height) {
  return {crop_tensor(padded.y, height, width), crop_tensor(padded.uv, height / 2, width / 2)};
}

std::vector<std::size_t> sampled_frame_indices(std::size_t frames, std::size_t stride) {
  if (stride == 0) throw UsageError("frame stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames; i += stride) out.push_back(i);
  return out;
}

}  // namespace ydlc

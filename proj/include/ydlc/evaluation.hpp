#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ydlc/codec.hpp"
#include "ydlc/color.hpp"
#include "ydlc/training.hpp"

namespace ydlc {

struct RdPoint {
  std::string label;
  // Bits per luma pixel.
  double rate_bpp = 0.0;
  double rate_kbps = 0.0;
  double psnr_y = 0.0;
  double psnr_u = 0.0;
  double psnr_v = 0.0;
  // Optional grouping for class-wise aggregation.
  std::string sequence;
  std::string cls;

  friend bool operator==(const RdPoint&, const RdPoint&) = default;
};

struct RdCurve {
  std::string codec;
  std::vector<RdPoint> points;

  void sort_by_rate();
  // >= 4 points, strictly increasing positive rates, finite PSNRs.
  void validate() const;
  friend bool operator==(const RdCurve&, const RdCurve&) = default;
};

enum class Component { y, u, v };

inline constexpr int kBdSamples = 1000;

// Cubic least-squares fit of log10(rate) against PSNR for each curve, mean
// log-rate difference over the common PSNR interval. Percent; negative means
// `test` needs less rate.
double bd_rate(const RdCurve& anchor, const RdCurve& test, Component component);

double cbdr(double y_bdr, double u_bdr, double v_bdr);

struct BdRow {
  std::string codec;
  // "overall", "class:<name>" or "sequence:<name>".
  std::string scope;
  double y = 0.0;
  double u = 0.0;
  double v = 0.0;
  double cbdr = 0.0;
};

struct BdReport {
  std::string anchor;
  std::string method;
  std::vector<BdRow> rows;
};

// When points carry sequence names, BD-rates are computed per sequence,
// averaged per class, and the class means are averaged into the overall row.
BdReport bd_report(std::span<const RdCurve> curves, const std::string& anchor);

struct Measurement {
  std::size_t frames = 0;
  double bpp = 0.0;
  PlaneQuality psnr;
  PlaneQuality mse;
};

// Codes each frame through a real bitstream and averages rate, PSNR and MSE.
Measurement measure(Codec& codec, std::span<const Yuv420Frame> frames,
                    std::uint8_t beta = kUnknownBeta);

struct SweepModel {
  double beta = 0.0;
  std::string checkpoint;
  // Chroma model for separate coding.
  std::string uv_checkpoint;
};

struct SweepOptions {
  std::size_t frame_stride = 8;
  double fps = 30.0;
  std::string sequence;
  std::string cls;
};

// One point per model, sorted by rate. Every model must share one codec.
RdCurve sweep(std::span<const SweepModel> models, std::span<const Yuv420Frame> sequence,
              const SweepOptions& options = {});

// codec,label,rate_bpp,rate_kbps,psnr_y,psnr_u,psnr_v[,sequence,class]
std::string curves_csv(std::span<const RdCurve> curves);
std::vector<RdCurve> parse_curves_csv(std::string_view text);
std::string bd_table_csv(const BdReport& report);
std::string rd_plot_svg(std::span<const RdCurve> curves);

struct ReportFiles {
  std::string curves;
  std::string bd_table;
  std::string plot;
};

// Writes <prefix>_rd.csv, <prefix>_bdr.csv and <prefix>_rd.svg.
ReportFiles emit_report(std::span<const RdCurve> curves, const std::string& anchor,
                        const std::string& prefix);

}  // namespace ydlc

#include "ydlc/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "ydlc/bytes.hpp"
#include "ydlc/error.hpp"

namespace ydlc {

namespace {

double component_psnr(const RdPoint& p, Component c) {
  switch (c) {
    case Component::y:
      return p.psnr_y;
    case Component::u:
      return p.psnr_u;
    default:
      return p.psnr_v;
  }
}

struct Cubic {
  Eigen::Vector4d coef;
  double center = 0.0;
  double operator()(double x) const {
    const double t = x - center;
    return coef[0] + t * (coef[1] + t * (coef[2] + t * coef[3]));
  }
};

Cubic fit_log_rate(const RdCurve& c, Component comp, double& lo, double& hi) {
  const auto n = static_cast<Eigen::Index>(c.points.size());
  Cubic f;
  lo = hi = component_psnr(c.points[0], comp);
  for (const auto& p : c.points) {
    const double q = component_psnr(p, comp);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
    f.center += q / static_cast<double>(n);
  }
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = component_psnr(c.points[i], comp) - f.center;
    a.row(i) << 1.0, t, t * t, t * t * t;
    b[i] = std::log10(c.points[i].rate_bpp);
  }
  f.coef = a.colPivHouseholderQr().solve(b);
  if (!f.coef.allFinite()) throw DataError(c.codec + ": degenerate curve, cubic fit failed");
  return f;
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string fixed(double v, int digits) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return {buf, r.ptr};
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw UsageError("csv field '" + s + "' contains a separator");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Points of one codec, grouped per sequence (empty name when ungrouped).
std::map<std::string, RdCurve> by_sequence(const RdCurve& c) {
  std::map<std::string, RdCurve> out;
  for (const auto& p : c.points) {
    RdCurve& s = out[p.sequence];
    s.codec = c.codec;
    s.points.push_back(p);
  }
  return out;
}

BdRow compare(const RdCurve& anchor, const RdCurve& test, std::string scope) {
  BdRow r;
  r.codec = test.codec;
  r.scope = std::move(scope);
  r.y = bd_rate(anchor, test, Component::y);
  r.u = bd_rate(anchor, test, Component::u);
  r.v = bd_rate(anchor, test, Component::v);
  r.cbdr = cbdr(r.y, r.u, r.v);
  return r;
}

}  // namespace

void RdCurve::sort_by_rate() {
  std::stable_sort(points.begin(), points.end(),
                   [](const RdPoint& a, const RdPoint& b) { return a.rate_bpp < b.rate_bpp; });
}

void RdCurve::validate() const {
  if (points.size() < 4) {
    throw DataError(codec + ": " + std::to_string(points.size()) +
                    " RD points, at least 4 are needed for a cubic fit");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const RdPoint& p = points[i];
    if (!(p.rate_bpp > 0.0) || !std::isfinite(p.rate_bpp)) {
      throw DataError(codec + ": point '" + p.label + "' has a non-positive rate");
    }
    if (!std::isfinite(p.psnr_y) || !std::isfinite(p.psnr_u) || !std::isfinite(p.psnr_v)) {
      throw DataError(codec + ": point '" + p.label + "' has a non-finite PSNR");
    }
    if (i > 0 && !(p.rate_bpp > points[i - 1].rate_bpp)) {
      throw DataError(codec + ": rates must strictly increase");
    }
  }
}

double bd_rate(const RdCurve& anchor, const RdCurve& test, Component component) {
  RdCurve a = anchor, t = test;
  a.sort_by_rate();
  t.sort_by_rate();
  a.validate();
  t.validate();
  double a_lo, a_hi, t_lo, t_hi;
  const Cubic fa = fit_log_rate(a, component, a_lo, a_hi);
  const Cubic ft = fit_log_rate(t, component, t_lo, t_hi);
  const double lo = std::max(a_lo, t_lo);
  const double hi = std::min(a_hi, t_hi);
  if (!(hi > lo)) {
    throw DataError("no PSNR overlap between " + anchor.codec + " and " + test.codec);
  }
  const double step = (hi - lo) / (kBdSamples - 1);
  double area = 0.0;
  double prev = ft(lo) - fa(lo);
  for (int i = 1; i < kBdSamples; ++i) {
    const double x = i == kBdSamples - 1 ? hi : lo + step * i;
    const double cur = ft(x) - fa(x);
    area += 0.5 * (prev + cur) * step;
    prev = cur;
  }
  return (std::pow(10.0, area / (hi - lo)) - 1.0) * 100.0;
}

double cbdr(double y_bdr, double u_bdr, double v_bdr) {
  return (12.0 * y_bdr + u_bdr + v_bdr) / 14.0;
}

BdReport bd_report(std::span<const RdCurve> curves, const std::string& anchor) {
  const auto it = std::find_if(curves.begin(), curves.end(),
                               [&](const RdCurve& c) { return c.codec == anchor; });
  if (it == curves.end()) throw UsageError("anchor codec '" + anchor + "' is not among the curves");
  BdReport report;
  report.anchor = anchor;
  const auto anchor_seqs = by_sequence(*it);
  const bool grouped = anchor_seqs.size() > 1 || !anchor_seqs.begin()->first.empty();
  report.method = grouped ? "per-sequence BD-rate, mean per class, mean of class means overall"
                          : "single curve per codec";
  for (const RdCurve& c : curves) {
    if (c.codec == anchor) continue;
    if (!grouped) {
      report.rows.push_back(compare(*it, c, "overall"));
      continue;
    }
    std::map<std::string, std::vector<BdRow>> classes;
    for (const auto& [name, seq] : by_sequence(c)) {
      const auto a = anchor_seqs.find(name);
      if (a == anchor_seqs.end()) {
        throw DataError(c.codec + ": sequence '" + name + "' has no anchor curve");
      }
      BdRow row = compare(a->second, seq, "sequence:" + name);
      report.rows.push_back(row);
      classes[seq.points.front().cls].push_back(row);
    }
    BdRow overall{c.codec, "overall", 0, 0, 0, 0};
    for (const auto& [cls, rows] : classes) {
      BdRow mean{c.codec, "class:" + cls, 0, 0, 0, 0};
      for (const BdRow& r : rows) {
        mean.y += r.y / rows.size();
        mean.u += r.u / rows.size();
        mean.v += r.v / rows.size();
      }
      mean.cbdr = cbdr(mean.y, mean.u, mean.v);
      report.rows.push_back(mean);
      overall.y += mean.y / classes.size();
      overall.u += mean.u / classes.size();
      overall.v += mean.v / classes.size();
    }
    overall.cbdr = cbdr(overall.y, overall.u, overall.v);
    report.rows.push_back(overall);
  }
  return report;
}

Measurement measure(Codec& codec, std::span<const Yuv420Frame> frames, std::uint8_t beta) {
  if (frames.empty()) throw DataError("no frames to measure");
  Measurement m;
  for (const Yuv420Frame& f : frames) {
    const EncodeResult e = encode_frame(f, codec, beta);
    const PlaneQuality q = frame_psnr(f, e.reconstruction);
    const PlaneQuality s = frame_mse(f, e.reconstruction);
    m.bpp += bits_per_pixel(e.bitstream);
    m.psnr.y += q.y;
    m.psnr.u += q.u;
    m.psnr.v += q.v;
    m.mse.y += s.y;
    m.mse.u += s.u;
    m.mse.v += s.v;
  }
  const double n = static_cast<double>(frames.size());
  m.frames = frames.size();
  m.bpp /= n;
  m.psnr = {m.psnr.y / n, m.psnr.u / n, m.psnr.v / n};
  m.mse = {m.mse.y / n, m.mse.u / n, m.mse.v / n};
  return m;
}

RdCurve sweep(std::span<const SweepModel> models, std::span<const Yuv420Frame> sequence,
              const SweepOptions& options) {
  if (models.empty()) throw UsageError("sweep needs at least one checkpoint");
  std::vector<Yuv420Frame> frames;
  for (std::size_t i : sampled_frame_indices(sequence.size(), options.frame_stride)) {
    frames.push_back(sequence[i]);
  }
  RdCurve curve;
  for (const SweepModel& m : models) {
    Codec codec = [&] {
      try {
        return Codec::load(m.checkpoint, m.uv_checkpoint);
      } catch (const Error& e) {
        throw DataError("checkpoint for beta " + num(m.beta) + ": " + e.what());
      }
    }();
    if (curve.codec.empty()) curve.codec = codec.name();
    if (codec.name() != curve.codec) {
      throw DataError("checkpoint for beta " + num(m.beta) + " is " + codec.name() +
                      ", the sweep is " + curve.codec);
    }
    const Measurement r = measure(codec, frames, beta_id(m.beta));
    RdPoint p;
    p.label = num(m.beta);
    p.rate_bpp = r.bpp;
    p.rate_kbps = r.bpp * frames.front().width * frames.front().height * options.fps / 1000.0;
    p.psnr_y = r.psnr.y;
    p.psnr_u = r.psnr.u;
    p.psnr_v = r.psnr.v;
    p.sequence = options.sequence;
    p.cls = options.cls;
    curve.points.push_back(p);
  }
  curve.sort_by_rate();
  return curve;
}

std::string curves_csv(std::span<const RdCurve> curves) {
  bool grouped = false;
  for (const auto& c : curves)
    for (const auto& p : c.points) grouped |= !p.sequence.empty() || !p.cls.empty();
  std::string out = "codec,label,rate_bpp,rate_kbps,psnr_y,psnr_u,psnr_v";
  out += grouped ? ",sequence,class\n" : "\n";
  for (const auto& c : curves) {
    check_field(c.codec);
    for (const auto& p : c.points) {
      check_field(p.label);
      check_field(p.sequence);
      check_field(p.cls);
      out += c.codec + "," + p.label + "," + num(p.rate_bpp) + "," + num(p.rate_kbps) + "," +
             num(p.psnr_y) + "," + num(p.psnr_u) + "," + num(p.psnr_v);
      if (grouped) out += "," + p.sequence + "," + p.cls;
      out += "\n";
    }
  }
  return out;
}

std::vector<RdCurve> parse_curves_csv(std::string_view text) {
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  std::vector<RdCurve> curves;
  bool header = false;
  std::size_t columns = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_csv_line(line);
    if (!header) {
      const std::vector<std::string> base = {"codec",  "label",  "rate_bpp", "rate_kbps",
                                             "psnr_y", "psnr_u", "psnr_v"};
      if (f.size() < base.size() || !std::equal(base.begin(), base.end(), f.begin()) ||
          (f.size() != 7 && !(f.size() == 9 && f[7] == "sequence" && f[8] == "class"))) {
        throw DataError("csv: unexpected header '" + line + "'");
      }
      columns = f.size();
      header = true;
      continue;
    }
    if (f.size() != columns) {
      throw DataError("csv line " + std::to_string(lineno) + ": expected " +
                      std::to_string(columns) + " fields, got " + std::to_string(f.size()));
    }
    RdPoint p;
    p.label = f[1];
    p.rate_bpp = parse_double(f[2], lineno);
    p.rate_kbps = parse_double(f[3], lineno);
    p.psnr_y = parse_double(f[4], lineno);
    p.psnr_u = parse_double(f[5], lineno);
    p.psnr_v = parse_double(f[6], lineno);
    if (columns == 9) {
      p.sequence = f[7];
      p.cls = f[8];
    }
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const RdCurve& c) { return c.codec == f[0]; });
    if (it == curves.end()) {
      curves.push_back({f[0], {}});
      it = curves.end() - 1;
    }
    it->points.push_back(p);
  }
  if (!header) throw DataError("csv: missing header");
  return curves;
}

std::string bd_table_csv(const BdReport& r) {
  std::string out = "# anchor: " + r.anchor + "\n# aggregation: " + r.method + "\n";
  out += "codec,scope,y_bdr,u_bdr,v_bdr,cbdr\n";
  for (const BdRow& row : r.rows) {
    out += row.codec + "," + row.scope + "," + fixed(row.y, 2) + "," + fixed(row.u, 2) + "," +
           fixed(row.v, 2) + "," + fixed(row.cbdr, 2) + "\n";
  }
  return out;
}

std::string rd_plot_svg(std::span<const RdCurve> curves) {
  constexpr double kW = 640, kH = 480, kLeft = 70, kRight = 160, kTop = 30, kBottom = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf"};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.rate_bpp);
      x1 = std::max(x1, p.rate_bpp);
      y0 = std::min(y0, p.psnr_y);
      y1 = std::max(y1, p.psnr_y);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-9) x1 = x0 + 1;
  if (y1 - y0 < 1e-9) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<!-- ydlc-data\n" + curves_csv(curves) + "-->\n";
  s += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  s += "<rect x=\"" + fixed(kLeft, 1) + "\" y=\"" + fixed(kTop, 1) + "\" width=\"" + fixed(pw, 1) +
       "\" height=\"" + fixed(ph, 1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    s += "<text x=\"" + fixed(sx(xv), 1) + "\" y=\"" + fixed(kTop + ph + 18, 1) +
         "\" text-anchor=\"middle\">" + fixed(xv, 3) + "</text>\n";
    s += "<text x=\"" + fixed(kLeft - 6, 1) + "\" y=\"" + fixed(sy(yv) + 4, 1) +
         "\" text-anchor=\"end\">" + fixed(yv, 2) + "</text>\n";
  }
  s += "<text x=\"" + fixed(kLeft + pw / 2, 1) + "\" y=\"" + fixed(kH - 15, 1) +
       "\" text-anchor=\"middle\">rate (bits per luma pixel)</text>\n";
  s += "<text x=\"18\" y=\"" + fixed(kTop + ph / 2, 1) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fixed(kTop + ph / 2, 1) + ")\">PSNR-Y (dB)</text>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    RdCurve c = curves[k];
    c.sort_by_rate();
    std::string pts;
    for (const auto& p : c.points) pts += fixed(sx(p.rate_bpp), 2) + "," + fixed(sy(p.psnr_y), 2) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
         pts + "\"/>\n";
    for (const auto& p : c.points) {
      s += "<circle cx=\"" + fixed(sx(p.rate_bpp), 2) + "\" cy=\"" + fixed(sy(p.psnr_y), 2) +
           "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 16 + 18.0 * k;
    s += "<line x1=\"" + fixed(kW - kRight + 12, 1) + "\" y1=\"" + fixed(ly, 1) + "\" x2=\"" +
         fixed(kW - kRight + 32, 1) + "\" y2=\"" + fixed(ly, 1) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fixed(kW - kRight + 38, 1) + "\" y=\"" + fixed(ly + 4, 1) + "\">" +
         c.codec + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

ReportFiles emit_report(std::span<const RdCurve> curves, const std::string& anchor,
                        const std::string& prefix) {
  if (curves.size() < 2) throw UsageError("a report needs at least two curves");
  ReportFiles files{prefix + "_rd.csv", prefix + "_bdr.csv", prefix + "_rd.svg"};
  const auto put = [](const std::string& path, const std::string& text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  };
  const BdReport report = bd_report(curves, anchor);
  put(files.curves, curves_csv(curves));
  put(files.bd_table, bd_table_csv(report));
  put(files.plot, rd_plot_svg(curves));
  return files;
}

}  // namespace ydlc

#include "ydlc/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "ydlc/bytes.hpp"
#include "ydlc/codec.hpp"
#include "ydlc/color.hpp"
#include "ydlc/entropy.hpp"
#include "ydlc/evaluation.hpp"
#include "ydlc/model.hpp"
#include "ydlc/network.hpp"
#include "ydlc/training.hpp"

namespace ydlc {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return kExitUsage;
    case ErrorKind::data:
      return kExitData;
    default:
      return kExitInvariant;
  }
}

std::string resolve_checkpoint(const std::string& path) {
  const char* dir = std::getenv("YDLC_CHECKPOINT_DIR");
  if (dir == nullptr || *dir == '\0' || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(dir) / path).string();
}

namespace {

std::string text_of(const std::string& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

void put_text(const std::string& path, const std::string& s) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

bool has_ext(const std::string& path, const char* ext) {
  return fs::path(path).extension() == ext;
}

double parse_beta(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !(v > 0.0)) {
    throw UsageError("bad beta '" + s + "'");
  }
  return v;
}

// "beta=path" pairs.
std::map<double, std::string> parse_models(const std::vector<std::string>& specs) {
  std::map<double, std::string> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--model expects beta=checkpoint, got '" + s + "'");
    out[parse_beta(s.substr(0, eq))] = resolve_checkpoint(s.substr(eq + 1));
  }
  return out;
}

// ---- params ---------------------------------------------------------------

void print_stack(std::ostream& out, const LayerStack& stack) {
  for (const LayerSpec& l : stack) {
    out << std::left << std::setw(34) << l.name << std::setw(8) << to_string(l.kind) << std::right
        << std::setw(6) << l.in_channels << std::setw(6) << l.out_channels << std::setw(4)
        << l.kernel << std::setw(4) << l.stride << std::setw(12) << count_params(l) << "\n";
  }
}

long long print_network(std::ostream& out, ArchitectureId id, int n, int m, bool layers) {
  const NetworkSpec spec = build_architecture(id, n, m);
  const long long total = count_params(spec);
  out << "architecture " << to_string(id) << " N=" << n << " M=" << m << "\n";
  if (layers) {
    out << std::left << std::setw(34) << "layer" << std::setw(8) << "kind" << std::right
        << std::setw(6) << "in" << std::setw(6) << "out" << std::setw(4) << "k" << std::setw(4)
        << "s" << std::setw(12) << "params" << "\n";
    for (const auto& b : spec.analysis.branches) print_stack(out, b);
    print_stack(out, spec.analysis.trunk);
    print_stack(out, spec.synthesis.trunk);
    for (const auto& b : spec.synthesis.branches) print_stack(out, b);
  }
  out << "transform params " << total << "\n";
  out << "entropy model params " << count_entropy_model_params(spec) << "\n";
  return total;
}

int cmd_params(const std::string& arch, int n, int m, bool all, bool quiet, std::ostream& out) {
  const auto one = [&](const std::string& name) {
    if (name == "separate") {
      long long total = print_network(out, ArchitectureId::separate_y, n, m, !quiet);
      total += print_network(out, ArchitectureId::separate_uv, n, m, !quiet);
      out << "codec separate total " << total << "\n";
    } else {
      const long long total = print_network(out, parse_architecture(name), n, m, !quiet);
      out << "codec " << name << " total " << total << "\n";
    }
  };
  if (all) {
    for (const char* name :
         {"separate", "six-channel", "proposed-gdn", "proposed-mixed", "proposed-prelu"}) {
      one(name);
    }
  } else {
    one(arch);
  }
  return kExitOk;
}

// ---- convert --------------------------------------------------------------

struct ConvertArgs {
  std::string input, output;
  int width = 0, height = 0;
  std::size_t frame = 0;
  std::size_t stride = 0;
  bool append = false;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  if (has_ext(a.input, ".ppm")) {
    const Yuv420Frame f = ppm_to_yuv420(read_file(a.input));
    write_yuv420(f, a.output, a.append);
    out << "wrote " << f.width << "x" << f.height << " frame to " << a.output << "\n";
    return kExitOk;
  }
  if (a.width <= 0 || a.height <= 0) throw UsageError("raw YUV input needs --width and --height");
  if (has_ext(a.output, ".ppm")) {
    const Yuv420Frame f = read_yuv420(a.input, a.width, a.height, a.frame);
    write_file(a.output, yuv420_to_ppm(f));
    out << "wrote frame " << a.frame << " to " << a.output << "\n";
    return kExitOk;
  }
  std::vector<std::size_t> frames{a.frame};
  if (a.stride > 0) frames = sampled_frame_indices(count_yuv420_frames(a.input, a.width, a.height), a.stride);
  bool append = a.append;
  for (std::size_t i : frames) {
    write_yuv420(read_yuv420(a.input, a.width, a.height, i), a.output, append);
    append = true;
  }
  out << "extracted " << frames.size() << " frame(s) to " << a.output << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, bool quiet,
              std::ostream& out) {
  std::string text = config_path.empty() ? std::string() : text_of(config_path);
  for (const auto& s : sets) text += "\n" + s;
  TrainConfig c = parse_train_config(text);
  c.checkpoint = resolve_checkpoint(c.checkpoint);
  if (c.checkpoint.empty()) throw UsageError("train: set checkpoint = <path> in the config");
  const Dataset data = load_dataset(c);
  out << "training " << to_string(c.arch) << " beta=" << c.beta << " steps=" << c.steps
      << " on " << data.frames.size() << " frame(s)\n";
  const TrainResult r = train(c, data, [&](const TrainRecord& rec) {
    if (!quiet) {
      out << "step " << rec.step << " rate " << rec.rate << " distortion " << rec.distortion
          << " loss " << rec.loss << " lr " << rec.lr << "\n";
    }
  });
  out << "saved " << c.checkpoint << "\n";
  return kExitOk;
}

// ---- encode / decode ------------------------------------------------------

struct CodingArgs {
  std::string input, output, ckpt, ckpt_uv, recon;
  int width = 0, height = 0;
  std::size_t frame = 0;
  std::size_t stride = 0;
  double beta = 0.0;
};

Codec load_codec(const CodingArgs& a) {
  if (a.ckpt.empty()) throw UsageError("--ckpt is required");
  return Codec::load(resolve_checkpoint(a.ckpt),
                     a.ckpt_uv.empty() ? "" : resolve_checkpoint(a.ckpt_uv));
}

int cmd_encode(const CodingArgs& a, std::ostream& out) {
  if (a.width <= 0 || a.height <= 0) throw UsageError("encode needs --width and --height");
  Codec codec = load_codec(a);
  std::vector<std::size_t> frames{a.frame};
  const bool sequence = a.stride > 0;
  if (sequence) {
    frames = sampled_frame_indices(count_yuv420_frames(a.input, a.width, a.height), a.stride);
    fs::create_directories(a.output);
  }
  const std::uint8_t beta = a.beta > 0.0 ? beta_id(a.beta) : kUnknownBeta;
  bool append = false;
  for (std::size_t idx : frames) {
    const Yuv420Frame f = read_yuv420(a.input, a.width, a.height, idx);
    const EncodeResult e = encode_frame(f, codec, beta);
    const auto bytes = e.bitstream.serialize();
    std::string path = a.output;
    if (sequence) {
      std::ostringstream name;
      name << "frame_" << std::setw(5) << std::setfill('0') << idx << ".ydlb";
      path = (fs::path(a.output) / name.str()).string();
    }
    write_file(path, bytes);
    if (!a.recon.empty()) {
      write_yuv420(e.reconstruction, a.recon, append);
      append = true;
    }
    const PlaneQuality q = frame_psnr(f, e.reconstruction);
    out << "frame " << idx << " bytes " << bytes.size() << " bpp " << bits_per_pixel(e.bitstream)
        << " psnr_y " << q.y << " psnr_u " << q.u << " psnr_v " << q.v << " -> " << path << "\n";
    if (e.clamped != 0) out << "warning: " << e.clamped << " latent value(s) clamped to 16 bits\n";
  }
  return kExitOk;
}

int cmd_decode(const CodingArgs& a, const std::vector<std::string>& inputs, std::ostream& out) {
  Codec codec = load_codec(a);
  bool append = false;
  for (const auto& in : inputs) {
    const Yuv420Frame f = decode_frame(read_file(in), codec);
    write_yuv420(f, a.output, append);
    append = true;
    out << "decoded " << in << " (" << f.width << "x" << f.height << ")\n";
  }
  return kExitOk;
}

// ---- eval / bdrate --------------------------------------------------------

struct EvalArgs {
  std::string input, anchor, out_prefix, sequence, cls;
  int width = 0, height = 0;
  std::size_t stride = 8;
  double fps = 30.0;
  int jobs = 1;
  std::vector<std::string> models, models_uv, curves;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.width <= 0 || a.height <= 0) throw UsageError("eval needs --width and --height");
  const auto models = parse_models(a.models);
  const auto uv = parse_models(a.models_uv);
  if (models.empty()) throw UsageError("eval needs at least one --model beta=checkpoint");
  std::vector<SweepModel> list;
  for (const auto& [beta, path] : models) {
    SweepModel m{beta, path, {}};
    if (!uv.empty()) {
      const auto it = uv.find(beta);
      if (it == uv.end()) {
        std::ostringstream msg;
        msg << "no chroma checkpoint for beta " << beta;
        throw DataError(msg.str());
      }
      m.uv_checkpoint = it->second;
    }
    list.push_back(m);
  }
  std::vector<Yuv420Frame> seq;
  const std::size_t n = count_yuv420_frames(a.input, a.width, a.height);
  for (std::size_t i = 0; i < n; ++i) seq.push_back(read_yuv420(a.input, a.width, a.height, i));
  SweepOptions opts;
  opts.frame_stride = a.stride;
  opts.fps = a.fps;
  opts.sequence = a.sequence;
  opts.cls = a.cls;

  // One sweep per model in parallel, merged in beta order.
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, a.jobs));
  std::vector<RdCurve> parts(list.size());
  for (std::size_t start = 0; start < list.size(); start += jobs) {
    std::vector<std::future<RdCurve>> running;
    for (std::size_t i = start; i < std::min(list.size(), start + jobs); ++i) {
      running.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, [&, i] {
        return sweep(std::span(&list[i], 1), seq, opts);
      }));
    }
    for (std::size_t i = 0; i < running.size(); ++i) parts[start + i] = running[i].get();
  }
  RdCurve curve{parts.front().codec, {}};
  for (const auto& p : parts) {
    if (p.codec != curve.codec) throw DataError("eval: checkpoints belong to different codecs");
    curve.points.insert(curve.points.end(), p.points.begin(), p.points.end());
  }
  curve.sort_by_rate();

  std::vector<RdCurve> curves{curve};
  for (const auto& path : a.curves) {
    for (auto& c : parse_curves_csv(text_of(path))) curves.push_back(std::move(c));
  }
  out << curves_csv(curves);
  if (!a.out_prefix.empty()) {
    if (curves.size() >= 2) {
      const auto files = emit_report(curves, a.anchor.empty() ? curves.back().codec : a.anchor,
                                     a.out_prefix);
      out << "report: " << files.curves << " " << files.bd_table << " " << files.plot << "\n";
    } else {
      put_text(a.out_prefix + "_rd.csv", curves_csv(curves));
      put_text(a.out_prefix + "_rd.svg", rd_plot_svg(curves));
      out << "report: " << a.out_prefix << "_rd.csv " << a.out_prefix << "_rd.svg\n";
    }
  }
  return kExitOk;
}

int cmd_bdrate(const std::string& anchor_csv, const std::string& test_csv,
               const std::string& output, const std::string& svg, std::ostream& out) {
  std::vector<RdCurve> curves = parse_curves_csv(text_of(anchor_csv));
  if (curves.empty()) throw DataError(anchor_csv + ": no curves");
  const std::string anchor = curves.front().codec;
  for (auto& c : parse_curves_csv(text_of(test_csv))) {
    if (c.codec == anchor) c.codec += " (test)";
    curves.push_back(std::move(c));
  }
  if (curves.size() < 2) throw DataError("bdrate needs a test curve");
  const std::string table = bd_table_csv(bd_report(curves, anchor));
  out << table;
  if (!output.empty()) put_text(output, table);
  if (!svg.empty()) put_text(svg, rd_plot_svg(curves));
  return kExitOk;
}

// ---- selftest -------------------------------------------------------------

struct Check {
  std::string name;
  bool ok;
  std::string detail;
};

Check check_params() {
  const long long sep = count_params(build_architecture(ArchitectureId::separate_y, 192, 320)) +
                        count_params(build_architecture(ArchitectureId::separate_uv, 192, 320));
  const auto c = [](ArchitectureId id) { return count_params(build_architecture(id, 192, 320)); };
  const long long six = c(ArchitectureId::six_channel), gdn = c(ArchitectureId::proposed_gdn),
                  mix = c(ArchitectureId::proposed_mixed), pre = c(ArchitectureId::proposed_prelu);
  const bool order = sep > gdn && gdn > mix && mix > six && six > pre;
  const auto near = [](long long v, double ref) { return std::abs(v - ref) <= 0.01 * ref; };
  const bool close = near(sep, 14004411) && near(six, 7014690) && near(gdn, 7306927) &&
                     near(mix, 7232809) && near(pre, 6936337);
  return {"parameter counts at N=192 M=320", order && close, ""};
}

Check check_rans() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(-20.0, 20.0), ls(std::log(0.11), std::log(40.0));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CdfTable> tables;
    std::vector<std::int32_t> values;
    for (int i = 0; i < 50; ++i) {
      const double m = mu(rng), s = std::exp(ls(rng));
      tables.push_back(gaussian_cdf_table(m, s));
      std::normal_distribution<double> d(m, s);
      values.push_back(static_cast<std::int32_t>(std::lround(d(rng))) + (i == 0 ? 5000 : 0));
    }
    const auto map = identity_table_map(values.size());
    if (rans_decode(rans_encode(values, tables, map), tables, map, values.size()) != values) {
      return {"rANS round trip", false, "trial " + std::to_string(trial)};
    }
  }
  return {"rANS round trip", true, ""};
}

Yuv420Frame random_frame(std::mt19937_64& rng, int w, int h) {
  Yuv420Frame f(w, h);
  std::uniform_int_distribution<int> b(0, 255);
  for (auto* p : {&f.y, &f.u, &f.v})
    for (auto& v : *p) v = static_cast<std::uint8_t>(b(rng));
  return f;
}

Check check_layouts() {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const int w = 2 * (1 + static_cast<int>(rng() % 40)), h = 2 * (1 + static_cast<int>(rng() % 40));
    const Yuv420Frame f = random_frame(rng, w, h);
    const FrameTensors t = to_tensors(f);
    if (from_tensors(unpack_six(pack_six(t))) != f) return {"lossless layouts", false, "pack_six"};
    const PaddedFrame p = pad_to_multiple(t, 64);
    if (from_tensors(crop_back(p.tensors, w, h)) != f) return {"lossless layouts", false, "pad"};
    if (from_i420_bytes(to_i420_bytes(f), w, h) != f) return {"lossless layouts", false, "i420"};
  }
  return {"lossless layouts", true, ""};
}

Check check_codec() {
  std::mt19937_64 rng(13);
  const NetworkSpec spec = build_architecture(ArchitectureId::proposed_prelu, 8, 12);
  ModelWeights w = ModelWeights::initialize(spec, 3);
  const ModelWeights back = ModelWeights::deserialize(w.serialize());
  if (back.serialize() != w.serialize()) return {"checkpoint and codec", false, "checkpoint"};
  Codec codec = Codec::from_weights(std::move(w));
  const Yuv420Frame f = random_frame(rng, 70, 46);
  const EncodeResult e = encode_frame(f, codec);
  const bool same = decode_frame(e.bitstream.serialize(), codec) == e.reconstruction;
  return {"checkpoint and codec", same, same ? "" : "decode differs from encoder"};
}

Check check_metrics() {
  const bool fixtures = std::abs(cbdr(-3.07, -1.87, -4.85) + 3.11) <= 0.02 &&
                        std::abs(cbdr(-18.12, 74.46, -10.32) + 10.95) <= 0.02;
  RdCurve a{"a", {}}, b{"b", {}};
  for (int i = 0; i < 5; ++i) {
    RdPoint p;
    p.rate_bpp = 0.1 * (i + 1);
    p.psnr_y = 28 + 2.0 * i + 0.1 * i * i;
    p.psnr_u = p.psnr_v = p.psnr_y + 5;
    a.points.push_back(p);
    p.rate_bpp *= 2;
    b.points.push_back(p);
  }
  const bool bd = std::abs(bd_rate(a, a, Component::y)) < 1e-9 &&
                  std::abs(bd_rate(a, b, Component::y) - 100.0) < 1e-6;
  return {"CBDR and BD-rate", fixtures && bd, ""};
}

int cmd_selftest(std::ostream& out) {
  bool ok = true;
  for (const auto& fn : {check_params, check_rans, check_layouts, check_codec, check_metrics}) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c = {"check", false, e.what()};
    }
    out << (c.ok ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    ok &= c.ok;
  }
  return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"YUV 4:2:0 learned image codec tools", "ydlc"};
  app.require_subcommand(1);

  std::string arch = "proposed-prelu";
  int n = 192, m = 320;
  bool all = false, quiet = false;
  auto* params = app.add_subcommand("params", "Parameter counts per layer and in total");
  params->add_option("--arch", arch, "Architecture, or 'separate' for the Y+UV pair");
  params->add_option("--n", n, "Internal channels")->check(CLI::PositiveNumber);
  params->add_option("--m", m, "Bottleneck channels")->check(CLI::PositiveNumber);
  params->add_flag("--all", all, "Every codec");
  params->add_flag("--quiet", quiet, "Totals only");

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "PPM to YUV, YUV to PPM, or frame extraction");
  convert->add_option("--input,-i", conv.input)->required();
  convert->add_option("--output,-o", conv.output)->required();
  convert->add_option("--width", conv.width);
  convert->add_option("--height", conv.height);
  convert->add_option("--frame", conv.frame, "Frame index");
  convert->add_option("--stride", conv.stride, "Extract every k-th frame");
  convert->add_flag("--append", conv.append, "Append to the output YUV file");

  std::string config;
  std::vector<std::string> sets;
  auto* trainc = app.add_subcommand("train", "Train a model from a key = value config");
  trainc->add_option("--config,-c", config, "Config file");
  trainc->add_option("--set", sets, "Extra key=value lines (override the file)");
  trainc->add_flag("--quiet", quiet, "No per-interval log lines");

  CodingArgs cod;
  auto* encode = app.add_subcommand("encode", "Encode frame(s) of a raw YUV file");
  encode->add_option("--input,-i", cod.input)->required();
  encode->add_option("--output,-o", cod.output, "Bitstream file, or directory with --stride")->required();
  encode->add_option("--width", cod.width)->required();
  encode->add_option("--height", cod.height)->required();
  encode->add_option("--ckpt", cod.ckpt)->required();
  encode->add_option("--ckpt-uv", cod.ckpt_uv, "Chroma checkpoint for separate coding");
  encode->add_option("--frame", cod.frame);
  encode->add_option("--stride", cod.stride, "Encode every k-th frame");
  encode->add_option("--beta", cod.beta, "Beta recorded in the header");
  encode->add_option("--recon", cod.recon, "Write the encoder-side reconstruction (YUV)");

  std::vector<std::string> decode_inputs;
  auto* decode = app.add_subcommand("decode", "Decode bitstream(s) into a raw YUV file");
  decode->add_option("--input,-i", decode_inputs)->required();
  decode->add_option("--output,-o", cod.output)->required();
  decode->add_option("--ckpt", cod.ckpt)->required();
  decode->add_option("--ckpt-uv", cod.ckpt_uv);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Beta sweep over a sequence, RD curve and report");
  eval->add_option("--input,-i", ev.input)->required();
  eval->add_option("--width", ev.width)->required();
  eval->add_option("--height", ev.height)->required();
  eval->add_option("--model", ev.models, "beta=checkpoint")->required();
  eval->add_option("--model-uv", ev.models_uv, "beta=checkpoint of the chroma model");
  eval->add_option("--stride", ev.stride, "Frame sampling stride")->check(CLI::PositiveNumber);
  eval->add_option("--fps", ev.fps);
  eval->add_option("--sequence", ev.sequence);
  eval->add_option("--class", ev.cls);
  eval->add_option("--curves", ev.curves, "Extra RD curves (CSV) for the report");
  eval->add_option("--anchor", ev.anchor, "Anchor codec of the BD table");
  eval->add_option("--out", ev.out_prefix, "Report prefix");
  eval->add_option("--jobs,-j", ev.jobs)->check(CLI::PositiveNumber);

  std::string anchor_csv, test_csv, bd_out, bd_svg;
  auto* bdrate = app.add_subcommand("bdrate", "BD-rate table of a test CSV against an anchor CSV");
  bdrate->add_option("--anchor", anchor_csv)->required();
  bdrate->add_option("--test", test_csv)->required();
  bdrate->add_option("--output,-o", bd_out);
  bdrate->add_option("--svg", bd_svg);

  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*params) return cmd_params(arch, n, m, all, quiet, out);
    if (*convert) return cmd_convert(conv, out);
    if (*trainc) return cmd_train(config, sets, quiet, out);
    if (*encode) return cmd_encode(cod, out);
    if (*decode) return cmd_decode(cod, decode_inputs, out);
    if (*eval) return cmd_eval(ev, out);
    if (*bdrate) return cmd_bdrate(anchor_csv, test_csv, bd_out, bd_svg, out);
    if (*selftest) return cmd_selftest(out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ydlc

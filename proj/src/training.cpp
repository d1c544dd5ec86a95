#include "ydlc/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ydlc/bytes.hpp"
#include "ydlc/error.hpp"
#include "ydlc/optim.hpp"

namespace ydlc {

namespace {

constexpr double kSampleScale = 255.0 * 255.0;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

DistortionWeights parse_weights(const std::string& value) {
  if (value == "luma" || value == "8,2,2") return DistortionWeights::luma_heavy();
  if (value == "chroma" || value == "6,3,3") return DistortionWeights::chroma_boosted();
  DistortionWeights w;
  std::stringstream ss(value);
  std::string part;
  double* slots[] = {&w.y, &w.u, &w.v};
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw UsageError("config: weights takes three values");
    *slots[i++] = parse_number<double>("weights", trim(part));
  }
  if (i != 3) throw UsageError("config: weights takes three values");
  return w;
}

std::string number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

void copy_patch(const Yuv420Frame& src, int p, int ox, int oy, FrameTensors& out, int item) {
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      out.y.at(item, 0, y, x) = byte_to_unit(src.y[static_cast<std::size_t>(oy + y) * src.width + ox + x]);
    }
  const int cw = src.chroma_width();
  for (int y = 0; y < p / 2; ++y)
    for (int x = 0; x < p / 2; ++x) {
      const std::size_t i = static_cast<std::size_t>(oy / 2 + y) * cw + ox / 2 + x;
      out.uv.at(item, 0, y, x) = byte_to_unit(src.u[i]);
      out.uv.at(item, 1, y, x) = byte_to_unit(src.v[i]);
    }
}

std::vector<ComponentPair> components(ArchitectureId arch,
                                      const std::vector<Var>& outputs,
                                      const std::vector<Var>& inputs, const DistortionWeights& w) {
  const int uv_sizes[] = {1, 1};
  const int six_sizes[] = {4, 1, 1};
  switch (arch) {
    case ArchitectureId::separate_y:
      return {{outputs[0], inputs[0], w.y}};
    case ArchitectureId::separate_uv: {
      auto p = split_channels(outputs[0], uv_sizes);
      auto t = split_channels(inputs[0], uv_sizes);
      return {{p[0], t[0], w.u}, {p[1], t[1], w.v}};
    }
    case ArchitectureId::six_channel: {
      // The four luma channels are a permutation of Y, so their joint MSE is MSE_Y.
      auto p = split_channels(outputs[0], six_sizes);
      auto t = split_channels(inputs[0], six_sizes);
      return {{p[0], t[0], w.y}, {p[1], t[1], w.u}, {p[2], t[2], w.v}};
    }
    default: {
      auto p = split_channels(outputs[1], uv_sizes);
      auto t = split_channels(inputs[1], uv_sizes);
      return {{outputs[0], inputs[0], w.y}, {p[0], t[0], w.u}, {p[1], t[1], w.v}};
    }
  }
}

}  // namespace

double weighted_distortion(const PlaneQuality& mse, const DistortionWeights& w) {
  return (w.y * mse.y + w.u * mse.u + w.v * mse.v) / w.total();
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw UsageError("train config: " + msg); };
  if (n < 1 || m < 1) fail("n and m must be positive");
  if (!(beta > 0.0)) fail("beta must be positive");
  if (!(weights.y > 0.0 && weights.u > 0.0 && weights.v > 0.0)) fail("weights must be positive");
  if (steps < 1) fail("steps must be positive");
  if (batch < 1) fail("batch must be positive");
  if (patch < 16 || patch % 16 != 0) fail("patch must be a positive multiple of 16");
  if (!(lr > 0.0) || !(lr_dropped > 0.0)) fail("learning rates must be positive");
  if (log_every < 1) fail("log_every must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (data.empty() && (synthetic_frames < 1 || synthetic_size < patch || synthetic_size % 2 != 0)) {
    fail("synthetic_frames must be positive and synthetic_size an even value >= patch");
  }
  if (!data.empty() && (data_width <= 0 || data_height <= 0)) {
    fail("data_width and data_height are required with data");
  }
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key == "arch") c.arch = parse_architecture(value);
    else if (key == "n") c.n = parse_number<int>(key, value);
    else if (key == "m") c.m = parse_number<int>(key, value);
    else if (key == "beta") c.beta = parse_number<double>(key, value);
    else if (key == "weights") c.weights = parse_weights(value);
    else if (key == "steps") c.steps = parse_number<long>(key, value);
    else if (key == "batch") c.batch = parse_number<int>(key, value);
    else if (key == "patch") c.patch = parse_number<int>(key, value);
    else if (key == "lr") c.lr = parse_number<double>(key, value);
    else if (key == "lr_drop_step") c.lr_drop_step = parse_number<long>(key, value);
    else if (key == "lr_dropped") c.lr_dropped = parse_number<double>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "log_every") c.log_every = parse_number<long>(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_number<long>(key, value);
    else if (key == "checkpoint") c.checkpoint = value;
    else if (key == "log") c.log = value;
    else if (key == "data") c.data = value;
    else if (key == "data_width") c.data_width = parse_number<int>(key, value);
    else if (key == "data_height") c.data_height = parse_number<int>(key, value);
    else if (key == "synthetic_frames") c.synthetic_frames = parse_number<int>(key, value);
    else if (key == "synthetic_size") c.synthetic_size = parse_number<int>(key, value);
    else throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_train_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "arch = " << to_string(c.arch) << "\n"
    << "n = " << c.n << "\nm = " << c.m << "\n"
    << "beta = " << number(c.beta) << "\n"
    << "weights = " << number(c.weights.y) << "," << number(c.weights.u) << ","
    << number(c.weights.v) << "\n"
    << "steps = " << c.steps << "\nbatch = " << c.batch << "\npatch = " << c.patch << "\n"
    << "lr = " << number(c.lr) << "\nlr_drop_step = " << c.lr_drop_step << "\n"
    << "lr_dropped = " << number(c.lr_dropped) << "\nseed = " << c.seed << "\n"
    << "log_every = " << c.log_every << "\ncheckpoint_every = " << c.checkpoint_every << "\n";
  if (!c.checkpoint.empty()) o << "checkpoint = " << c.checkpoint << "\n";
  if (!c.log.empty()) o << "log = " << c.log << "\n";
  if (!c.data.empty()) {
    o << "data = " << c.data << "\ndata_width = " << c.data_width
      << "\ndata_height = " << c.data_height << "\n";
  }
  o << "synthetic_frames = " << c.synthetic_frames << "\nsynthetic_size = " << c.synthetic_size
    << "\n";
  return o.str();
}

Dataset synthetic_dataset(int count, int width, int height, std::uint64_t seed) {
  if (count < 1 || width < 2 || height < 2 || width % 2 || height % 2) {
    throw UsageError("synthetic dataset needs a positive count and even extents");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 2.0);
  Dataset d;
  for (int f = 0; f < count; ++f) {
    std::vector<double> rgb(static_cast<std::size_t>(width) * height * 3);
    double c0[3], c1[3];
    for (int k = 0; k < 3; ++k) {
      c0[k] = 255.0 * unit(rng);
      c1[k] = 255.0 * unit(rng);
    }
    const double angle = 2.0 * M_PI * unit(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double t = std::clamp(
            0.5 + ((x - width / 2.0) * ca + (y - height / 2.0) * sa) / (width + height), 0.0, 1.0);
        for (int k = 0; k < 3; ++k) {
          rgb[(static_cast<std::size_t>(y) * width + x) * 3 + k] = c0[k] + (c1[k] - c0[k]) * t;
        }
      }
    const int shapes = 3 + static_cast<int>(unit(rng) * 6);
    for (int s = 0; s < shapes; ++s) {
      const double cx = unit(rng) * width, cy = unit(rng) * height;
      const double rx = (0.05 + 0.3 * unit(rng)) * width, ry = (0.05 + 0.3 * unit(rng)) * height;
      const bool ellipse = unit(rng) < 0.5;
      const bool striped = unit(rng) < 0.4;
      const double period = 3.0 + 12.0 * unit(rng), phase = unit(rng) * 2.0 * M_PI;
      double color[3], alt[3];
      for (int k = 0; k < 3; ++k) {
        color[k] = 255.0 * unit(rng);
        alt[k] = 255.0 * unit(rng);
      }
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double dx = (x - cx) / rx, dy = (y - cy) / ry;
          const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
          if (!inside) continue;
          const double mix =
              striped ? 0.5 + 0.5 * std::sin(2.0 * M_PI * (x * ca - y * sa) / period + phase) : 0.0;
          for (int k = 0; k < 3; ++k) {
            rgb[(static_cast<std::size_t>(y) * width + x) * 3 + k] =
                color[k] + (alt[k] - color[k]) * mix;
          }
        }
    }
    std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> ppm(header.begin(), header.end());
    for (double v : rgb) {
      ppm.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v + grain(rng)), 0L, 255L)));
    }
    d.frames.push_back(ppm_to_yuv420(ppm));
  }
  return d;
}

Dataset load_dataset(const TrainConfig& c) {
  if (c.data.empty()) {
    return synthetic_dataset(c.synthetic_frames, c.synthetic_size, c.synthetic_size, c.seed);
  }
  Dataset d;
  const std::size_t frames = count_yuv420_frames(c.data, c.data_width, c.data_height);
  for (std::size_t i = 0; i < frames; ++i) {
    d.frames.push_back(read_yuv420(c.data, c.data_width, c.data_height, i));
  }
  return d;
}

FrameTensors sample_patches(const Dataset& data, int batch, int patch, std::mt19937_64& rng) {
  if (data.frames.empty()) throw DataError("training dataset is empty");
  for (const auto& f : data.frames) {
    if (f.width < patch || f.height < patch) {
      throw DataError("patch " + std::to_string(patch) + " exceeds a " + std::to_string(f.width) +
                      "x" + std::to_string(f.height) + " training frame");
    }
  }
  FrameTensors out{Tensor({batch, 1, patch, patch}), Tensor({batch, 2, patch / 2, patch / 2})};
  std::uniform_int_distribution<std::size_t> pick(0, data.frames.size() - 1);
  for (int b = 0; b < batch; ++b) {
    const Yuv420Frame& f = data.frames[pick(rng)];
    std::uniform_int_distribution<int> ox(0, (f.width - patch) / 2);
    std::uniform_int_distribution<int> oy(0, (f.height - patch) / 2);
    const int x = 2 * ox(rng);
    const int y = 2 * oy(rng);
    copy_patch(f, patch, x, y, out, b);
  }
  return out;
}

Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Tensor t(shape);
  for (float& v : t.data()) v = u(rng);
  return t;
}

Var weighted_distortion(std::span<const ComponentPair> parts) {
  if (parts.empty()) throw UsageError("weighted_distortion: no components");
  double total = 0.0;
  for (const auto& p : parts) total += p.weight;
  Var d;
  for (const auto& p : parts) {
    Var term = scale(mse(p.prediction, p.target), static_cast<float>(kSampleScale * p.weight / total));
    d = d.valid() ? add(d, term) : term;
  }
  return d;
}

Var rate_term(Var latent, const GaussianVars& latent_model, Var hyper,
              const GaussianVars& hyper_model, double luma_pixels) {
  Var bits = add(gaussian_rate_bits(latent, latent_model.mean, latent_model.scale),
                 gaussian_rate_bits(hyper, hyper_model.mean, hyper_model.scale));
  return scale(bits, static_cast<float>(1.0 / luma_pixels));
}

RdTerms rd_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                   const FrameTensors& batch, double beta, const DistortionWeights& dw,
                   std::mt19937_64& noise_rng) {
  std::vector<Var> inputs;
  for (Tensor& t : model_inputs(spec.arch, batch)) inputs.push_back(g.input(std::move(t)));
  const Var y = analysis_forward(g, spec, weights, inputs);
  const Var z = hyper_analysis(g, spec, weights, y);
  const Var z_noisy = add(z, g.input(uniform_noise(z.shape(), noise_rng)));
  const Var y_noisy = add(y, g.input(uniform_noise(y.shape(), noise_rng)));
  const GaussianVars latent_model = hyper_synthesis(g, spec, weights, z_noisy, y.shape());
  const Shape zs = z.shape();
  const GaussianVars hyper_model = hyper_prior(g, weights, zs);
  const auto outputs = synthesis_forward(g, spec, weights, y_noisy);

  const Shape& luma = batch.y.shape();
  const double pixels = static_cast<double>(luma.n) * luma.h * luma.w;
  RdTerms t;
  t.rate = rate_term(y_noisy, latent_model, z_noisy, hyper_model, pixels);
  const auto parts = components(spec.arch, outputs, inputs, dw);
  t.distortion = weighted_distortion(parts);
  t.loss = add(t.rate, scale(t.distortion, static_cast<float>(beta)));
  return t;
}

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainCallback& on_log) {
  config.validate();
  if (data.frames.empty()) throw DataError("training dataset is empty");
  const NetworkSpec spec = build_architecture(config.arch, config.n, config.m);
  TrainResult result;
  result.weights = ModelWeights::initialize(spec, config.seed);
  std::mt19937_64 data_rng(config.seed * 2 + 1);
  std::mt19937_64 noise_rng(config.seed * 2 + 2);
  const std::vector<Param*> params = result.weights.params();
  result.losses.reserve(static_cast<std::size_t>(config.steps));

  TrainRecord acc;
  long in_interval = 0;
  for (long step = 0; step < config.steps; ++step) {
    const FrameTensors batch = sample_patches(data, config.batch, config.patch, data_rng);
    Graph g;
    const RdTerms t =
        rd_forward(g, spec, result.weights, batch, config.beta, config.weights, noise_rng);
    const double loss = t.loss.value()[0];
    if (!std::isfinite(loss)) {
      throw InvariantError("training loss is not finite at step " + std::to_string(step));
    }
    g.backward(t.loss);
    AdamOptions opts;
    opts.lr = static_cast<float>(config.lr_at(step));
    adam_step(params, opts);

    result.losses.push_back(loss);
    acc.rate += t.rate.value()[0];
    acc.distortion += t.distortion.value()[0];
    acc.loss += loss;
    ++in_interval;
    if ((step + 1) % config.log_every == 0 || step + 1 == config.steps) {
      TrainRecord r;
      r.step = step + 1;
      r.rate = acc.rate / in_interval;
      r.distortion = acc.distortion / in_interval;
      r.loss = acc.loss / in_interval;
      r.lr = config.lr_at(step);
      result.log.push_back(r);
      if (on_log) on_log(r);
      acc = {};
      in_interval = 0;
    }
    if (!config.checkpoint.empty() && config.checkpoint_every > 0 &&
        (step + 1) % config.checkpoint_every == 0) {
      result.weights.save(config.checkpoint);
    }
  }
  if (!config.checkpoint.empty()) result.weights.save(config.checkpoint);
  if (!config.log.empty()) {
    const std::string csv = train_log_csv(result.log);
    write_file(config.log, {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
  }
  return result;
}

std::string train_log_csv(const std::vector<TrainRecord>& log) {
  std::string out = "step,rate_bpp,distortion,loss,lr\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + number(r.rate) + "," + number(r.distortion) + "," +
           number(r.loss) + "," + number(r.lr) + "\n";
  }
  return out;
}

std::vector<double> smooth(std::span<const double> values, std::size_t window) {
  std::vector<double> out;
  out.reserve(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out.push_back(acc / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

}  // namespace ydlc

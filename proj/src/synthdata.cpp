#include "flowcnn/synthdata.hpp"

#include <cmath>

#include "flowcnn/rng.hpp"

namespace flowcnn {

void SynthConfig::validate() const {
  if (height < 16 || width < 16)
    fail(ErrorKind::ConfigInvalid, "synthetic frames must be at least 16x16");
  if (reversal_period < 1) fail(ErrorKind::ConfigInvalid, "reversal_period must be >= 1");
  if (frames < reversal_period + 2)
    fail(ErrorKind::ConfigInvalid, "frames must be >= reversal_period + 2");
  if (!(speed > 0) || speed > 2.0)
    fail(ErrorKind::ConfigInvalid, "speed must be in (0, 2] for single-level flow");
  if (noise_sigma < 0) fail(ErrorKind::ConfigInvalid, "noise_sigma must be >= 0");
  if (n_blobs < 1) fail(ErrorKind::ConfigInvalid, "need at least one blob");
}

namespace {

// bilinear value noise; static per clip so only the blobs move
struct BackgroundTexture {
  std::size_t gh, gw, cell;
  std::vector<double> grid;

  BackgroundTexture(std::size_t height, std::size_t width, Rng& rng) : cell(4) {
    gh = height / cell + 2;
    gw = width / cell + 2;
    grid.resize(gh * gw);
    for (double& g : grid) g = rng.uniform(0.25, 0.75);
  }

  double at(std::size_t y, std::size_t x) const {
    double fy = static_cast<double>(y) / static_cast<double>(cell);
    double fx = static_cast<double>(x) / static_cast<double>(cell);
    std::size_t y0 = static_cast<std::size_t>(fy);
    std::size_t x0 = static_cast<std::size_t>(fx);
    double ty = fy - static_cast<double>(y0);
    double tx = fx - static_cast<double>(x0);
    double a = grid[y0 * gw + x0] * (1 - tx) + grid[y0 * gw + x0 + 1] * tx;
    double b = grid[(y0 + 1) * gw + x0] * (1 - tx) + grid[(y0 + 1) * gw + x0 + 1] * tx;
    return a * (1 - ty) + b * ty;
  }
};

struct Blob {
  double radius;
  double kx, ky, phase;        // stripe pattern in blob-local coordinates
  std::vector<double> px, py;  // center per frame

  // opaque coverage in [0,1], smooth at the rim
  double coverage(double dx, double dy) const {
    double q = 1.0 - (dx * dx + dy * dy) / (radius * radius);
    if (q <= 0) return 0.0;
    return q * q * (3.0 - 2.0 * q);
  }

  double pattern(double dx, double dy) const {
    return 0.5 + 0.45 * std::sin(kx * dx + ky * dy + phase);
  }
};

}  // namespace

LabeledClip gen_clip(int label, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (label != 0 && label != 1) fail(ErrorKind::ConfigInvalid, "label must be 0 or 1");

  Rng scene(Rng::derive(seed, 1));
  Rng noise(Rng::derive(seed, 2));

  const std::size_t h = cfg.height;
  const std::size_t w = cfg.width;
  const std::size_t t_count = cfg.frames;
  const double min_dim = static_cast<double>(h < w ? h : w);

  BackgroundTexture bg(h, w, scene);

  std::vector<Blob> blobs(cfg.n_blobs);
  for (Blob& blob : blobs) {
    blob.radius = min_dim * scene.uniform(0.17, 0.23);
    double wavelength = blob.radius * scene.uniform(0.9, 1.3);
    double stripe_angle = scene.uniform(0.0, 6.283185307179586);
    blob.kx = std::cos(stripe_angle) * 6.283185307179586 / wavelength;
    blob.ky = std::sin(stripe_angle) * 6.283185307179586 / wavelength;
    blob.phase = scene.uniform(0.0, 6.283185307179586);

    double mx = blob.radius + 1.0;
    double lo_x = mx, hi_x = static_cast<double>(w - 1) - mx;
    double lo_y = mx, hi_y = static_cast<double>(h - 1) - mx;
    double x = scene.uniform(lo_x, hi_x);
    double y = scene.uniform(lo_y, hi_y);
    double dir = scene.uniform(0.0, 6.283185307179586);
    double vx = cfg.speed * std::cos(dir);
    double vy = cfg.speed * std::sin(dir);
    blob.px.resize(t_count);
    blob.py.resize(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      blob.px[t] = x;
      blob.py[t] = y;
      if (t + 1 == t_count) break;
      if (label == 1 && t > 0 && t % cfg.reversal_period == 0) {
        vx = -vx;
        vy = -vy;
      }
      x += vx;
      y += vy;
      while (x < lo_x || x > hi_x) {
        if (x < lo_x) x = 2 * lo_x - x; else x = 2 * hi_x - x;
        vx = -vx;
      }
      while (y < lo_y || y > hi_y) {
        if (y < lo_y) y = 2 * lo_y - y; else y = 2 * hi_y - y;
        vy = -vy;
      }
    }
  }

  LabeledClip out;
  out.label = label;
  out.clip.frames = t_count;
  out.clip.height = h;
  out.clip.width = w;
  out.clip.data.resize(t_count * h * w * 3);
  for (std::size_t t = 0; t < t_count; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double val = bg.at(y, x);
        for (const Blob& blob : blobs) {
          double dx = static_cast<double>(x) - blob.px[t];
          double dy = static_cast<double>(y) - blob.py[t];
          double e = blob.coverage(dx, dy);
          if (e > 0) val = val * (1 - e) + blob.pattern(dx, dy) * e;
        }
        val += cfg.noise_sigma * noise.gaussian();
        if (val < 0) val = 0;
        if (val > 1) val = 1;
        float f = static_cast<float>(val);
        std::size_t base = out.clip.offset(t, y, x, 0);
        out.clip.data[base] = f;
        out.clip.data[base + 1] = f;
        out.clip.data[base + 2] = f;
      }
  return out;
}

std::vector<LabeledClip> gen_dataset(std::size_t n, const SynthConfig& cfg,
                                     std::uint64_t seed) {
  if (n % 2 != 0) fail(ErrorKind::OddCount, "dataset size must be even");
  cfg.validate();

  std::vector<LabeledClip> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = i < n / 2 ? 1 : 0;
    out.push_back(gen_clip(label, cfg, Rng::derive(seed, 0x10 + i)));
  }
  Rng order(Rng::derive(seed, 3));
  shuffle(out, order);
  return out;
}

}  // namespace flowcnn

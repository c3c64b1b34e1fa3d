#include "flowcnn/opticalflow.hpp"

#include <cmath>

namespace flowcnn {

void FlowConfig::validate() const {
  if (window < 3 || window % 2 == 0)
    fail(ErrorKind::ConfigInvalid, "flow window must be odd and >= 3");
  if (!(det_epsilon > 0)) fail(ErrorKind::ConfigInvalid, "det_epsilon must be > 0");
  if (!(v_max > 0)) fail(ErrorKind::ConfigInvalid, "v_max must be > 0");
}

FlowField lucas_kanade(const GrayFrame& prev, const GrayFrame& next,
                       const FlowConfig& cfg) {
  cfg.validate();
  if (prev.height != next.height || prev.width != next.width)
    fail(ErrorKind::DimMismatch, "frame dimensions differ");
  if (prev.height < cfg.window || prev.width < cfg.window)
    fail(ErrorKind::FrameTooSmall, "frame smaller than the flow window");

  const std::size_t h = prev.height;
  const std::size_t w = prev.width;
  const std::size_t half = cfg.window / 2;

  FlowField out;
  out.height = h;
  out.width = w;
  out.u.assign(h * w, 0.0f);
  out.v.assign(h * w, 0.0f);

  // Gradients on the one-pixel-inset interior. Spatial gradients are central
  // differences averaged over both frames, which makes lucas_kanade(b,a) the
  // exact negation of lucas_kanade(a,b).
  std::vector<double> ix(h * w, 0.0), iy(h * w, 0.0), it(h * w, 0.0);
  for (std::size_t y = 1; y + 1 < h; ++y)
    for (std::size_t x = 1; x + 1 < w; ++x) {
      std::size_t i = y * w + x;
      ix[i] = (static_cast<double>(prev.at(y, x + 1)) - prev.at(y, x - 1) +
               static_cast<double>(next.at(y, x + 1)) - next.at(y, x - 1)) * 0.25;
      iy[i] = (static_cast<double>(prev.at(y + 1, x)) - prev.at(y - 1, x) +
               static_cast<double>(next.at(y + 1, x)) - next.at(y - 1, x)) * 0.25;
      it[i] = static_cast<double>(next.at(y, x)) - prev.at(y, x);
    }

  // valid centers keep the window plus its gradient ring inside the image
  if (h < cfg.window + 2 || w < cfg.window + 2) return out;
  for (std::size_t y = half + 1; y + half + 1 < h; ++y)
    for (std::size_t x = half + 1; x + half + 1 < w; ++x) {
      double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
      for (std::size_t wy = y - half; wy <= y + half; ++wy)
        for (std::size_t wx = x - half; wx <= x + half; ++wx) {
          std::size_t i = wy * w + wx;
          a11 += ix[i] * ix[i];
          a12 += ix[i] * iy[i];
          a22 += iy[i] * iy[i];
          b1 -= ix[i] * it[i];
          b2 -= iy[i] * it[i];
        }
      double det = a11 * a22 - a12 * a12;
      if (det < cfg.det_epsilon) continue;  // ill-conditioned: leave (0,0)
      std::size_t i = y * w + x;
      out.u[i] = static_cast<float>((a22 * b1 - a12 * b2) / det);
      out.v[i] = static_cast<float>((a11 * b2 - a12 * b1) / det);
    }
  return out;
}

std::vector<float> encode_flow(const FlowField& flow, const FlowConfig& cfg) {
  constexpr double kTwoPi = 6.283185307179586;
  std::vector<float> rgb(flow.height * flow.width * 3, 0.0f);
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    double u = flow.u[i];
    double v = flow.v[i];
    double mag = std::hypot(u, v);
    double value = mag / cfg.v_max;
    if (value > 1.0) value = 1.0;
    if (value == 0.0) continue;  // black

    double theta = std::atan2(v, u);
    if (theta < 0) theta += kTwoPi;
    double sector = theta * 3.0 / 3.141592653589793;  // hue in [0,6)
    if (sector >= 6.0) sector = 0.0;
    // saturation = 1, so chroma equals value
    double c = value;
    double xx = c * (1.0 - std::fabs(std::fmod(sector, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(sector)) {
      case 0: r = c; g = xx; break;
      case 1: r = xx; g = c; break;
      case 2: g = c; b = xx; break;
      case 3: g = xx; b = c; break;
      case 4: r = xx; b = c; break;
      default: r = c; b = xx; break;
    }
    rgb[3 * i + 0] = static_cast<float>(r);
    rgb[3 * i + 1] = static_cast<float>(g);
    rgb[3 * i + 2] = static_cast<float>(b);
  }
  return rgb;
}

Tensor clip_to_flow(const Clip& clip, const FlowConfig& cfg) {
  clip.validate();
  const std::size_t depth = clip.frames - 1;
  const std::size_t h = clip.height;
  const std::size_t w = clip.width;
  Tensor out({3, depth, h, w});

  GrayFrame prev = to_grayscale(clip, 0);
  for (std::size_t t = 1; t < clip.frames; ++t) {
    GrayFrame next = to_grayscale(clip, t);
    FlowField flow = lucas_kanade(prev, next, cfg);
    std::vector<float> rgb = encode_flow(flow, cfg);
    // interleaved frame -> channel-planar tensor slot t-1
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          out[((c * depth + (t - 1)) * h + y) * w + x] = rgb[(y * w + x) * 3 + c];
    prev = std::move(next);
  }
  return out;
}

}  // namespace flowcnn

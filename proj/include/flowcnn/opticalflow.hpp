#pragma once

#include <cstddef>
#include <vector>

#include "flowcnn/tensor.hpp"
#include "flowcnn/videoio.hpp"

namespace flowcnn {

// Per-pixel displacement field between two frames. u is horizontal
// (positive rightward), v vertical (positive downward), in pixels/frame.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> u;
  std::vector<float> v;

  float u_at(std::size_t y, std::size_t x) const { return u[y * width + x]; }
  float v_at(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

struct FlowConfig {
  std::size_t window = 5;      // odd, >= 3
  double det_epsilon = 1e-6;   // structure-tensor conditioning threshold
  double v_max = 8.0;          // magnitude that saturates at full intensity

  void validate() const;
};

// Dense single-level Lucas-Kanade. Spatial gradients are central differences
// averaged over the two frames; the temporal gradient is next - prev. Pixels
// whose window or gradient stencil leaves the image, and pixels where the
// structure-tensor determinant falls below det_epsilon, get (0,0).
FlowField lucas_kanade(const GrayFrame& prev, const GrayFrame& next,
                       const FlowConfig& cfg);

// Direction -> hue (theta = 0, rightward, maps to red; counterclockwise),
// magnitude -> value, clamped at v_max; saturation fixed at 1. Returns an
// H*W*3 interleaved RGB image in [0,1]. Zero flow encodes to black.
std::vector<float> encode_flow(const FlowField& flow, const FlowConfig& cfg);

// Encoded flow stack of shape (3, T-1, H, W): channel-planar so the tensor
// feeds the model directly.
Tensor clip_to_flow(const Clip& clip, const FlowConfig& cfg);

}  // namespace flowcnn

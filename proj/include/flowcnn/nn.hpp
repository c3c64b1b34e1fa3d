#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "flowcnn/tensor.hpp"

namespace flowcnn {

// 3D convolution layer: kernels (F, C, N, 3, 3), bias (F). N is the temporal
// kernel depth; the spatial extent is fixed at 3x3.
struct Conv3dLayer {
  Tensor kernels;
  Tensor bias;
};

struct DenseLayer {
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)
};

// Valid (no padding) correlation, stride 1 in all three dims.
// x: (C, D, H, W) -> (F, D-N+1, H-2, W-2). Accumulation runs in fixed
// (c, n, i, j) order per output element.
Tensor conv3d_forward(const Tensor& x, const Conv3dLayer& layer);

struct Conv3dGrads {
  Tensor x;
  Tensor kernels;
  Tensor bias;
};
Conv3dGrads conv3d_backward(const Tensor& x, const Conv3dLayer& layer,
                            const Tensor& grad_out);

// Disjoint-window max pooling with floor semantics (trailing remainder
// dropped). Ties break to the lowest flat input index. argmax holds the flat
// input index feeding each output element.
struct PoolResult {
  Tensor y;
  std::vector<std::size_t> argmax;
  std::vector<std::size_t> input_shape;
};
PoolResult maxpool3d(const Tensor& x, std::array<std::size_t, 3> pool);
Tensor maxpool3d_backward(const PoolResult& pooled, const Tensor& grad_out);

Tensor relu(const Tensor& x);
// gradient passes where x > 0; the subgradient at exactly 0 is 0
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

std::vector<float> dense_forward(const std::vector<float>& x, const DenseLayer& layer);

struct DenseGrads {
  std::vector<float> x;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const std::vector<float>& x, const DenseLayer& layer,
                          const std::vector<float>& grad_out);

// Numerically stable sigmoid + binary cross-entropy on a single logit.
struct BceResult {
  double loss;
  double dlogit;  // p - y
  double prob;
};
BceResult sigmoid_bce(double logit, int label);

struct AdamHyper {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// One moment pair per parameter tensor; t counts completed steps.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState like(const std::vector<Tensor*>& params);
};

// Bias-corrected Adam update applied in place, one step for all tensors.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamHyper& hyper);

// Central differences (f(p+h e_i) - f(p-h e_i)) / (2h) per coordinate; the
// quotient is computed in double.
std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<float>&)>& loss_fn,
    std::vector<float> params, double h);

}  // namespace flowcnn

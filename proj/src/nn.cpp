#include "flowcnn/nn.hpp"

#include <cmath>

namespace flowcnn {

namespace {

void require(bool ok, ErrorKind kind, const char* msg) {
  if (!ok) fail(kind, msg);
}

}  // namespace

Tensor conv3d_forward(const Tensor& x, const Conv3dLayer& layer) {
  require(x.rank() == 4, ErrorKind::ShapeMismatch, "conv3d input must be rank 4");
  require(layer.kernels.rank() == 5, ErrorKind::ShapeMismatch, "conv3d kernels must be rank 5");
  const std::size_t c_in = x.extent(0), d = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t f_count = layer.kernels.extent(0);
  const std::size_t kc = layer.kernels.extent(1);
  const std::size_t n = layer.kernels.extent(2);
  const std::size_t kh = layer.kernels.extent(3);
  const std::size_t kw = layer.kernels.extent(4);
  require(kh == 3 && kw == 3, ErrorKind::ShapeMismatch, "kernel spatial extent must be 3x3");
  require(kc == c_in, ErrorKind::ShapeMismatch, "kernel channel count does not match input");
  require(layer.bias.rank() == 1 && layer.bias.extent(0) == f_count,
          ErrorKind::ShapeMismatch, "bias length does not match filter count");
  require(n >= 1 && n <= d, ErrorKind::KernelTooDeep, "kernel deeper than input");
  require(h >= 3 && w >= 3, ErrorKind::ShapeMismatch, "input smaller than the 3x3 kernel");

  const std::size_t od = d - n + 1, oh = h - 2, ow = w - 2;
  Tensor out({f_count, od, oh, ow});

  const float* xd = x.data();
  const float* kd = layer.kernels.data();
  float* yd = out.data();
  for (std::size_t f = 0; f < f_count; ++f) {
    const float bias = layer.bias[f];
    for (std::size_t zd = 0; zd < od; ++zd)
      for (std::size_t zy = 0; zy < oh; ++zy)
        for (std::size_t zx = 0; zx < ow; ++zx) {
          float sum = bias;
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t kn = 0; kn < n; ++kn)
              for (std::size_t i = 0; i < 3; ++i) {
                const float* xrow = xd + ((c * d + zd + kn) * h + zy + i) * w + zx;
                const float* krow = kd + (((f * c_in + c) * n + kn) * 3 + i) * 3;
                sum += xrow[0] * krow[0] + xrow[1] * krow[1] + xrow[2] * krow[2];
              }
          yd[((f * od + zd) * oh + zy) * ow + zx] = sum;
        }
  }
  return out;
}

Conv3dGrads conv3d_backward(const Tensor& x, const Conv3dLayer& layer,
                            const Tensor& grad_out) {
  const std::size_t c_in = x.extent(0), d = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t f_count = layer.kernels.extent(0);
  const std::size_t n = layer.kernels.extent(2);
  require(n <= d, ErrorKind::KernelTooDeep, "kernel deeper than input");
  const std::size_t od = d - n + 1, oh = h - 2, ow = w - 2;
  require(grad_out.rank() == 4 && grad_out.extent(0) == f_count &&
              grad_out.extent(1) == od && grad_out.extent(2) == oh &&
              grad_out.extent(3) == ow,
          ErrorKind::ShapeMismatch, "grad_out does not match the forward output shape");

  Conv3dGrads grads;
  grads.x = Tensor(x.shape());
  grads.kernels = Tensor(layer.kernels.shape());
  grads.bias = Tensor(layer.bias.shape());

  const float* xd = x.data();
  const float* kd = layer.kernels.data();
  const float* god = grad_out.data();
  float* gxd = grads.x.data();
  float* gkd = grads.kernels.data();
  for (std::size_t f = 0; f < f_count; ++f) {
    float bias_sum = 0.0f;
    for (std::size_t zd = 0; zd < od; ++zd)
      for (std::size_t zy = 0; zy < oh; ++zy)
        for (std::size_t zx = 0; zx < ow; ++zx) {
          const float g = god[((f * od + zd) * oh + zy) * ow + zx];
          bias_sum += g;
          if (g == 0.0f) continue;
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t kn = 0; kn < n; ++kn)
              for (std::size_t i = 0; i < 3; ++i) {
                const float* xrow = xd + ((c * d + zd + kn) * h + zy + i) * w + zx;
                float* gxrow = gxd + ((c * d + zd + kn) * h + zy + i) * w + zx;
                const float* krow = kd + (((f * c_in + c) * n + kn) * 3 + i) * 3;
                float* gkrow = gkd + (((f * c_in + c) * n + kn) * 3 + i) * 3;
                for (std::size_t j = 0; j < 3; ++j) {
                  gkrow[j] += g * xrow[j];
                  gxrow[j] += g * krow[j];
                }
              }
        }
    grads.bias[f] = bias_sum;
  }
  return grads;
}

PoolResult maxpool3d(const Tensor& x, std::array<std::size_t, 3> pool) {
  require(x.rank() == 4, ErrorKind::ShapeMismatch, "maxpool3d input must be rank 4");
  const std::size_t c_count = x.extent(0), d = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t pd = pool[0], ph = pool[1], pw = pool[2];
  require(pd >= 1 && ph >= 1 && pw >= 1, ErrorKind::PoolTooLarge, "pool extents must be >= 1");
  const std::size_t od = d / pd, oh = h / ph, ow = w / pw;
  require(od >= 1 && oh >= 1 && ow >= 1, ErrorKind::PoolTooLarge,
          "pool window larger than the input");

  PoolResult res;
  res.y = Tensor({c_count, od, oh, ow});
  res.argmax.resize(res.y.size());
  res.input_shape = x.shape();

  const float* xd = x.data();
  float* yd = res.y.data();
  std::size_t out_i = 0;
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t zd = 0; zd < od; ++zd)
      for (std::size_t zy = 0; zy < oh; ++zy)
        for (std::size_t zx = 0; zx < ow; ++zx) {
          float best = 0.0f;
          std::size_t best_i = 0;
          bool first = true;
          // scan in ascending flat order so ties keep the lowest index
          for (std::size_t dd = 0; dd < pd; ++dd)
            for (std::size_t dy = 0; dy < ph; ++dy)
              for (std::size_t dx = 0; dx < pw; ++dx) {
                std::size_t i = ((c * d + zd * pd + dd) * h + zy * ph + dy) * w + zx * pw + dx;
                if (first || xd[i] > best) {
                  best = xd[i];
                  best_i = i;
                  first = false;
                }
              }
          yd[out_i] = best;
          res.argmax[out_i] = best_i;
          ++out_i;
        }
  return res;
}

Tensor maxpool3d_backward(const PoolResult& pooled, const Tensor& grad_out) {
  require(grad_out.same_shape(pooled.y), ErrorKind::ShapeMismatch,
          "grad_out does not match the pooled shape");
  Tensor grad_x(pooled.input_shape);
  for (std::size_t i = 0; i < pooled.argmax.size(); ++i)
    grad_x[pooled.argmax[i]] += grad_out[i];
  return grad_x;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require(x.same_shape(grad_out), ErrorKind::ShapeMismatch, "relu grad shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
  return out;
}

std::vector<float> dense_forward(const std::vector<float>& x, const DenseLayer& layer) {
  const std::size_t out_n = layer.weights.extent(0);
  const std::size_t in_n = layer.weights.extent(1);
  require(x.size() == in_n, ErrorKind::ShapeMismatch, "dense input length mismatch");
  require(layer.bias.size() == out_n, ErrorKind::ShapeMismatch, "dense bias length mismatch");

  std::vector<float> y(out_n);
  const float* wd = layer.weights.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    float sum = layer.bias[o];
    const float* row = wd + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) sum += row[i] * x[i];
    y[o] = sum;
  }
  return y;
}

DenseGrads dense_backward(const std::vector<float>& x, const DenseLayer& layer,
                          const std::vector<float>& grad_out) {
  const std::size_t out_n = layer.weights.extent(0);
  const std::size_t in_n = layer.weights.extent(1);
  require(x.size() == in_n, ErrorKind::ShapeMismatch, "dense input length mismatch");
  require(grad_out.size() == out_n, ErrorKind::ShapeMismatch, "dense grad length mismatch");

  DenseGrads grads;
  grads.x.assign(in_n, 0.0f);
  grads.weights = Tensor(layer.weights.shape());
  grads.bias = Tensor(layer.bias.shape());
  const float* wd = layer.weights.data();
  float* gwd = grads.weights.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    const float g = grad_out[o];
    grads.bias[o] = g;
    const float* row = wd + o * in_n;
    float* grow = gwd + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) {
      grow[i] = g * x[i];
      grads.x[i] += row[i] * g;
    }
  }
  return grads;
}

BceResult sigmoid_bce(double logit, int label) {
  if (label != 0 && label != 1) fail(ErrorKind::ConfigInvalid, "label must be 0 or 1");
  const double y = static_cast<double>(label);
  // log(1+exp(-|z|)) form avoids overflow at large |logit|
  const double abs_z = std::fabs(logit);
  BceResult res;
  res.loss = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-abs_z));
  res.prob = 1.0 / (1.0 + std::exp(-logit));
  res.dlogit = res.prob - y;
  return res;
}

void AdamHyper::validate() const {
  if (!(alpha > 0) || !(epsilon > 0))
    fail(ErrorKind::ConfigInvalid, "adam alpha and epsilon must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    fail(ErrorKind::ConfigInvalid, "adam betas must lie in [0,1)");
}

AdamState AdamState::like(const std::vector<Tensor*>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor* p : params) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamHyper& hyper) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          ErrorKind::ShapeMismatch, "adam parameter/gradient/state counts differ");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    require(p.same_shape(g) && p.same_shape(m), ErrorKind::ShapeMismatch,
            "adam tensor shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      p[i] = static_cast<float>(p[i] - hyper.alpha * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
    }
  }
}

std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<float>&)>& loss_fn,
    std::vector<float> params, double h) {
  if (!(h > 0)) fail(ErrorKind::ConfigInvalid, "finite difference step must be > 0");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float saved = params[i];
    params[i] = static_cast<float>(static_cast<double>(saved) + h);
    const double up = loss_fn(params);
    const double hi = params[i];
    params[i] = static_cast<float>(static_cast<double>(saved) - h);
    const double down = loss_fn(params);
    const double lo = params[i];
    params[i] = saved;
    // divide by the span actually applied after float rounding, not 2h
    const double span = hi - lo;
    grad[i] = span != 0.0 ? (up - down) / span : 0.0;
  }
  return grad;
}

}  // namespace flowcnn

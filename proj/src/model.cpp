#include "flowcnn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace flowcnn {

namespace {

struct PipelineDims {
  std::size_t pooled_d, pooled_h, pooled_w;  // after the pre-conv pool
  std::size_t conv_d, conv_h, conv_w;        // after the valid conv
  std::size_t out_d, out_h, out_w;           // after the post-conv pool
};

PipelineDims pipeline_dims(std::size_t n_frames, std::array<std::size_t, 4> in) {
  if (in[0] != 3) fail(ErrorKind::ShapeMismatch, "model input must have 3 channels");
  if (n_frames < 1) fail(ErrorKind::ConfigInvalid, "n_frames must be >= 1");

  PipelineDims dims;
  dims.pooled_d = in[1] / kPrePool[0];
  dims.pooled_h = in[2] / kPrePool[1];
  dims.pooled_w = in[3] / kPrePool[2];
  if (dims.pooled_d == 0 || dims.pooled_h < 3 || dims.pooled_w < 3)
    fail(ErrorKind::ArchitectureUnderflow, "input too small for the pre-conv pool");
  if (n_frames > dims.pooled_d)
    fail(ErrorKind::ArchitectureUnderflow, "temporal depth exceeds the pooled flow depth");
  dims.conv_d = dims.pooled_d - n_frames + 1;
  dims.conv_h = dims.pooled_h - 2;
  dims.conv_w = dims.pooled_w - 2;
  dims.out_d = dims.conv_d / kPostPool[0];
  dims.out_h = dims.conv_h / kPostPool[1];
  dims.out_w = dims.conv_w / kPostPool[2];
  if (dims.out_d == 0 || dims.out_h == 0 || dims.out_w == 0)
    fail(ErrorKind::ArchitectureUnderflow, "a pooled extent reached zero");
  return dims;
}

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(-bound, bound));
}

struct ForwardCache {
  PoolResult pre_pool;
  Tensor conv_out;
  Tensor conv_act;
  PoolResult post_pool;
  std::vector<float> fc1_out;
  std::vector<float> fc1_act;
  double logit = 0;
};

double run_forward(const ModelParams& params, const Tensor& x, ForwardCache* cache) {
  if (x.shape() != std::vector<std::size_t>(params.input_dims.begin(), params.input_dims.end()))
    fail(ErrorKind::ShapeMismatch, "input does not match the model's input dims");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.pre_pool = maxpool3d(x, kPrePool);
  c.conv_out = conv3d_forward(c.pre_pool.y, params.conv);
  c.conv_act = relu(c.conv_out);
  c.post_pool = maxpool3d(c.conv_act, kPostPool);
  c.fc1_out = dense_forward(c.post_pool.y.values(), params.fc1);
  std::vector<float> fc1_act(c.fc1_out.size());
  for (std::size_t i = 0; i < fc1_act.size(); ++i)
    fc1_act[i] = c.fc1_out[i] > 0.0f ? c.fc1_out[i] : 0.0f;
  c.fc1_act = std::move(fc1_act);
  std::vector<float> out = dense_forward(c.fc1_act, params.fc2);
  c.logit = out[0];
  return c.logit;
}

int predict(double prob, double threshold) { return prob > threshold ? 1 : 0; }

}  // namespace

std::vector<Tensor*> ModelParams::parameter_list() {
  return {&conv.kernels, &conv.bias, &fc1.weights, &fc1.bias, &fc2.weights, &fc2.bias};
}

std::vector<const Tensor*> ModelParams::parameter_list() const {
  return {&conv.kernels, &conv.bias, &fc1.weights, &fc1.bias, &fc2.weights, &fc2.bias};
}

std::size_t ModelParams::flat_features() const {
  PipelineDims dims = pipeline_dims(n_frames, input_dims);
  return kNumFilters * dims.out_d * dims.out_h * dims.out_w;
}

ModelParams build_model(std::size_t n_frames, std::array<std::size_t, 4> input_dims,
                        std::uint64_t seed) {
  PipelineDims dims = pipeline_dims(n_frames, input_dims);
  const std::size_t flat = kNumFilters * dims.out_d * dims.out_h * dims.out_w;

  ModelParams params;
  params.n_frames = n_frames;
  params.input_dims = input_dims;
  params.conv.kernels = Tensor({kNumFilters, 3, n_frames, 3, 3});
  params.conv.bias = Tensor({kNumFilters});
  params.fc1.weights = Tensor({kHiddenUnits, flat});
  params.fc1.bias = Tensor({kHiddenUnits});
  params.fc2.weights = Tensor({1, kHiddenUnits});
  params.fc2.bias = Tensor({1});

  // weights drawn in a fixed order so the seed pins every value
  Rng rng(seed);
  he_uniform(params.conv.kernels, 3 * n_frames * 3 * 3, rng);
  he_uniform(params.fc1.weights, flat, rng);
  he_uniform(params.fc2.weights, kHiddenUnits, rng);
  return params;
}

double model_forward(const ModelParams& params, const Tensor& x) {
  return sigmoid_bce(run_forward(params, x, nullptr), 0).prob;
}

GradientSet GradientSet::zeros_like(const ModelParams& params) {
  GradientSet set;
  for (const Tensor* p : params.parameter_list()) set.grads.emplace_back(p->shape());
  return set;
}

void GradientSet::add(const GradientSet& other) {
  for (std::size_t k = 0; k < grads.size(); ++k)
    for (std::size_t i = 0; i < grads[k].size(); ++i) grads[k][i] += other.grads[k][i];
}

void GradientSet::scale(float factor) {
  for (Tensor& t : grads)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= factor;
}

std::vector<const Tensor*> GradientSet::list() const {
  std::vector<const Tensor*> out;
  out.reserve(grads.size());
  for (const Tensor& t : grads) out.push_back(&t);
  return out;
}

double model_loss_grad(const ModelParams& params, const Tensor& x, int label,
                       GradientSet& accum, double* prob_out) {
  ForwardCache cache;
  const double logit = run_forward(params, x, &cache);
  const BceResult bce = sigmoid_bce(logit, label);
  if (prob_out) *prob_out = bce.prob;

  // fc2
  std::vector<float> grad_logit{static_cast<float>(bce.dlogit)};
  DenseGrads g2 = dense_backward(cache.fc1_act, params.fc2, grad_logit);
  // fc1 (through the hidden ReLU)
  std::vector<float> grad_fc1(g2.x.size());
  for (std::size_t i = 0; i < grad_fc1.size(); ++i)
    grad_fc1[i] = cache.fc1_out[i] > 0.0f ? g2.x[i] : 0.0f;
  DenseGrads g1 = dense_backward(cache.post_pool.y.values(), params.fc1, grad_fc1);
  // un-flatten and route back through the pool and conv ReLU
  Tensor grad_pooled(cache.post_pool.y.shape(), std::move(g1.x));
  Tensor grad_conv_act = maxpool3d_backward(cache.post_pool, grad_pooled);
  Tensor grad_conv_out = relu_backward(cache.conv_out, grad_conv_act);
  Conv3dGrads gc = conv3d_backward(cache.pre_pool.y, params.conv, grad_conv_out);

  Tensor* slots[6] = {&gc.kernels, &gc.bias, &g1.weights, &g1.bias, &g2.weights, &g2.bias};
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t i = 0; i < slots[k]->size(); ++i)
      accum.grads[k][i] += (*slots[k])[i];
  return bce.loss;
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::ConfigInvalid, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::ConfigInvalid, "batch_size must be >= 1");
  if (!(split_frac > 0.0 && split_frac < 1.0))
    fail(ErrorKind::ConfigInvalid, "split_frac must lie in (0,1)");
  if (!(threshold > 0.0 && threshold < 1.0))
    fail(ErrorKind::ConfigInvalid, "threshold must lie in (0,1)");
  adam.validate();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const std::vector<int>& labels, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac < 1.0))
    fail(ErrorKind::ConfigInvalid, "split fraction must lie in (0,1)");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      fail(ErrorKind::ConfigInvalid, "labels must be binary");
    by_class[labels[i]].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    fail(ErrorKind::ClassMissing, "both classes must be present to split");

  // Test-set size is round(frac * total), allocated across classes by
  // largest remainder so the split stays as stratified as the counts allow.
  const std::size_t total_test = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(labels.size())));
  double ideal[2] = {frac * static_cast<double>(by_class[0].size()),
                     frac * static_cast<double>(by_class[1].size())};
  std::size_t take[2] = {static_cast<std::size_t>(ideal[0]),
                         static_cast<std::size_t>(ideal[1])};
  take[0] = std::min(take[0], by_class[0].size());
  take[1] = std::min(take[1], by_class[1].size());
  while (take[0] + take[1] < total_test) {
    double rem0 = by_class[0].size() > take[0] ? ideal[0] - static_cast<double>(take[0]) : -1.0;
    double rem1 = by_class[1].size() > take[1] ? ideal[1] - static_cast<double>(take[1]) : -1.0;
    if (rem0 < 0 && rem1 < 0) break;
    if (rem1 > rem0) ++take[1]; else ++take[0];
  }
  while (take[0] + take[1] > total_test) {
    if (take[1] > take[0]) --take[1]; else --take[0];
  }

  std::vector<bool> in_test(labels.size(), false);
  for (int cls = 0; cls < 2; ++cls) {
    Rng rng(Rng::derive(seed, 0x51 + static_cast<std::uint64_t>(cls)));
    shuffle(by_class[cls], rng);
    for (std::size_t k = 0; k < take[cls]; ++k) in_test[by_class[cls][k]] = true;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (in_test[i] ? test_idx : train_idx).push_back(i);
  return {std::move(train_idx), std::move(test_idx)};
}

std::vector<EpochMetrics> train(ModelParams& params,
                                const std::vector<Sample>& train_set,
                                const std::vector<Sample>& val_set,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    fail(ErrorKind::EmptySet, "train and validation sets must be nonempty");

  std::vector<Tensor*> param_list = params.parameter_list();
  AdamState state = AdamState::like(param_list);
  std::vector<EpochMetrics> metrics;
  metrics.reserve(cfg.epochs);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 0xE0000 + epoch));
    shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      GradientSet accum = GradientSet::zeros_like(params);
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& sample = train_set[order[k]];
        double prob = 0.0;
        const double loss = model_loss_grad(params, sample.flow, sample.label, accum, &prob);
        if (!std::isfinite(loss)) fail(ErrorKind::NumericFailure, "non-finite training loss");
        loss_sum += loss;
        if (predict(prob, cfg.threshold) == sample.label) ++correct;
      }
      accum.scale(1.0f / static_cast<float>(stop - start));
      adam_step(param_list, accum.list(), state, cfg.adam);
    }

    double val_loss = 0.0;
    std::size_t val_correct = 0;
    for (const Sample& sample : val_set) {
      ForwardCache cache;
      const double logit = run_forward(params, sample.flow, &cache);
      const BceResult bce = sigmoid_bce(logit, sample.label);
      if (!std::isfinite(bce.loss)) fail(ErrorKind::NumericFailure, "non-finite validation loss");
      val_loss += bce.loss;
      if (predict(bce.prob, cfg.threshold) == sample.label) ++val_correct;
    }

    EpochMetrics row;
    row.epoch = epoch + 1;
    row.train_loss = loss_sum / static_cast<double>(train_set.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    row.val_loss = val_loss / static_cast<double>(val_set.size());
    row.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_set.size());
    metrics.push_back(row);
  }
  return metrics;
}

std::pair<double, ConfusionMatrix> evaluate(const ModelParams& params,
                                            const std::vector<Sample>& set,
                                            double threshold) {
  if (set.empty()) fail(ErrorKind::EmptySet, "cannot evaluate an empty set");

  ConfusionMatrix cm;
  for (const Sample& sample : set) {
    const int pred = predict(model_forward(params, sample.flow), threshold);
    if (pred == 1 && sample.label == 1) ++cm.tp;
    else if (pred == 1 && sample.label == 0) ++cm.fp;
    else if (pred == 0 && sample.label == 1) ++cm.fn;
    else ++cm.tn;
  }
  return {cm.accuracy(), cm};
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& file) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(ErrorKind::MalformedFile, "truncated checkpoint: " + file.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + file.string());
  out.write("VCNN1\n", 6);
  put_u32(out, static_cast<std::uint32_t>(params.n_frames));
  for (std::size_t d : params.input_dims) put_u32(out, static_cast<std::uint32_t>(d));
  for (const Tensor* t : params.parameter_list()) {
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t e : t->shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < t->size(); ++i)
      put_u32(out, std::bit_cast<std::uint32_t>((*t)[i]));
  }
  if (!out) fail(ErrorKind::IoError, "short write to " + file.string());
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + file.string());
  char magic[6];
  if (!in.read(magic, 6) || std::string(magic, 6) != "VCNN1\n")
    fail(ErrorKind::MalformedFile, "bad checkpoint magic in " + file.string());

  const std::size_t n_frames = get_u32(in, file);
  std::array<std::size_t, 4> dims{};
  for (std::size_t& d : dims) d = get_u32(in, file);

  // rebuilding from the architecture pins the expected tensor shapes
  ModelParams params = build_model(n_frames, dims, 0);
  for (Tensor* t : params.parameter_list()) {
    const std::size_t rank = get_u32(in, file);
    if (rank != t->rank())
      fail(ErrorKind::MalformedFile, "tensor rank mismatch in " + file.string());
    for (std::size_t a = 0; a < rank; ++a)
      if (get_u32(in, file) != t->extent(a))
        fail(ErrorKind::MalformedFile, "tensor extent mismatch in " + file.string());
    for (std::size_t i = 0; i < t->size(); ++i)
      (*t)[i] = std::bit_cast<float>(get_u32(in, file));
  }
  if (in.get() != EOF)
    fail(ErrorKind::MalformedFile, "trailing bytes in " + file.string());
  if (!params.conv.kernels.all_finite() || !params.fc1.weights.all_finite() ||
      !params.fc2.weights.all_finite())
    fail(ErrorKind::MalformedFile, "non-finite weights in " + file.string());
  return params;
}

}  // namespace flowcnn

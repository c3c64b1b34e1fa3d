#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "flowcnn/error.hpp"
#include "flowcnn/nn.hpp"
#include "flowcnn/rng.hpp"
#include "flowcnn/tensor.hpp"

namespace flowcnn {

inline constexpr std::size_t kNumFilters = 6;
inline constexpr std::size_t kHiddenUnits = 16;
inline constexpr std::array<std::size_t, 3> kPrePool{1, 4, 4};
inline constexpr std::array<std::size_t, 3> kPostPool{2, 4, 4};

// Full parameter set for one temporal depth N. Pipeline:
//   flow (3, Dflow, H, W) -> max pool (1,4,4) -> conv3d 6x(3,N,3,3) valid
//   -> ReLU -> max pool (2,4,4) -> flatten -> dense 16 -> ReLU -> dense 1
//   -> sigmoid
struct ModelParams {
  std::size_t n_frames = 0;                     // N
  std::array<std::size_t, 4> input_dims{};      // (3, Dflow, H, W)
  Conv3dLayer conv;
  DenseLayer fc1;
  DenseLayer fc2;

  std::vector<Tensor*> parameter_list();
  std::vector<const Tensor*> parameter_list() const;

  // flattened feature count between the second pool and fc1
  std::size_t flat_features() const;
};

// He-uniform weights (+-sqrt(6/fan_in)), zero biases, fully determined by
// seed. Throws ArchitectureUnderflow when a pooled extent reaches 0.
ModelParams build_model(std::size_t n_frames,
                        std::array<std::size_t, 4> input_dims,
                        std::uint64_t seed);

// probability of the positive (fight) class, strictly inside (0,1)
double model_forward(const ModelParams& params, const Tensor& x);

// Per-parameter gradient accumulator, aligned with parameter_list() order.
struct GradientSet {
  std::vector<Tensor> grads;

  static GradientSet zeros_like(const ModelParams& params);
  void add(const GradientSet& other);
  void scale(float factor);
  std::vector<const Tensor*> list() const;
};

// Forward + backward for one labelled sample; gradients are accumulated into
// `accum`. Returns the BCE loss; prob_out receives the forward probability.
double model_loss_grad(const ModelParams& params, const Tensor& x, int label,
                       GradientSet& accum, double* prob_out = nullptr);

struct TrainConfig {
  std::size_t n_frames = 3;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double split_frac = 0.2;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  AdamHyper adam;

  void validate() const;
};

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double accuracy() const {
    return static_cast<double>(tp + tn) / static_cast<double>(total());
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

// model-ready example: encoded flow stack plus its label
struct Sample {
  Tensor flow;
  int label = 0;
};

// Stratified split: the test set takes round(frac * total) elements,
// allocated across classes by largest remainder; membership is a
// deterministic function of seed. Requires both classes present.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const std::vector<int>& labels, double frac, std::uint64_t seed);

template <typename T, typename LabelFn>
std::pair<std::vector<T>, std::vector<T>> split_dataset(
    const std::vector<T>& data, double frac, std::uint64_t seed,
    LabelFn label_of) {
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const T& item : data) labels.push_back(label_of(item));
  auto [train_idx, test_idx] = split_indices(labels, frac, seed);
  std::vector<T> train, test;
  train.reserve(train_idx.size());
  test.reserve(test_idx.size());
  for (std::size_t i : train_idx) train.push_back(data[i]);
  for (std::size_t i : test_idx) test.push_back(data[i]);
  return {std::move(train), std::move(test)};
}

inline std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(
    const std::vector<Sample>& data, double frac, std::uint64_t seed) {
  return split_dataset(data, frac, seed, [](const Sample& s) { return s.label; });
}

// Mini-batch training: per epoch a seed-derived shuffle, batches of
// cfg.batch_size (last one may be smaller), gradients averaged over the
// batch, one Adam step per batch. Returns exactly cfg.epochs metric rows.
std::vector<EpochMetrics> train(ModelParams& params,
                                const std::vector<Sample>& train_set,
                                const std::vector<Sample>& val_set,
                                const TrainConfig& cfg);

// prediction = 1 iff forward(x) > threshold (exactly at threshold -> 0)
std::pair<double, ConfusionMatrix> evaluate(const ModelParams& params,
                                            const std::vector<Sample>& set,
                                            double threshold);

// Checkpoint: magic "VCNN1\n"; u32 LE N; four u32 LE input dims; then the
// six parameter tensors in parameter_list() order, each as u32 rank,
// u32[rank] extents, f32[numel] values, all little-endian.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& file);
ModelParams load_checkpoint(const std::filesystem::path& file);

}  // namespace flowcnn

#pragma once

#include <cstdint>
#include <vector>

#include "flowcnn/videoio.hpp"

namespace flowcnn {

struct SynthConfig {
  std::size_t frames = 24;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_blobs = 2;
  double speed = 1.5;               // pixels/frame, must stay <= 2
  std::size_t reversal_period = 4;  // label-1 clips flip velocity this often
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledClip {
  Clip clip;
  int label = 0;  // 1 = fight-like (oscillating), 0 = drifting
};

// Textured blobs over a textured background. Label 0 blobs drift with a
// constant random velocity of magnitude cfg.speed; label 1 blobs are rendered
// identically but reverse velocity every reversal_period frames. Initial
// directions are uniform in both classes, so no single flow frame carries
// class information. Positions reflect at the frame borders.
LabeledClip gen_clip(int label, const SynthConfig& cfg, std::uint64_t seed);

// n/2 clips per label, each from a distinct derived seed, order shuffled
// deterministically by the master seed.
std::vector<LabeledClip> gen_dataset(std::size_t n, const SynthConfig& cfg,
                                     std::uint64_t seed);

}  // namespace flowcnn

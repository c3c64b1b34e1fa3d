#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "flowcnn/error.hpp"

namespace flowcnn {

// RGB frame stack with values in [0,1], laid out (frame, row, column, channel).
struct Clip {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  std::size_t offset(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return ((t * height + y) * width + x) * 3 + c;
  }
  float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return data[offset(t, y, x, c)];
  }
  float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return data[offset(t, y, x, c)];
  }

  // throws InvalidClip when the stack violates its invariants
  void validate() const;
};

// single-channel luma frame, values in [0,1]
struct GrayFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  float& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
};

// Loads either a directory of P6 PPM frames named frame_0001.ppm (1-based,
// contiguous) or a .vclip file: magic "VCLP1\n", four u32 LE (T,H,W,C with
// C=3), then T*H*W*C f32 LE row-major.
Clip load_clip(const std::filesystem::path& path);

void write_clip_ppm(const Clip& clip, const std::filesystem::path& dir);
void write_vclip(const Clip& clip, const std::filesystem::path& file);

// 4x4 box filter; H and W must be divisible by 4
Clip resize_quarter(const Clip& clip);

// Rec.601 luma: 0.299 R + 0.587 G + 0.114 B
GrayFrame to_grayscale(const Clip& clip, std::size_t frame_index);

// single-image PPM helpers (also used for flow frames and kernel slices)
struct PpmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> rgb;  // H*W*3 interleaved in [0,1]
};

void write_ppm(const std::filesystem::path& file, std::size_t height,
               std::size_t width, const std::vector<float>& rgb);
PpmImage read_ppm(const std::filesystem::path& file);

}  // namespace flowcnn

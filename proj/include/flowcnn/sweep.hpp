#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowcnn/model.hpp"
#include "flowcnn/opticalflow.hpp"
#include "flowcnn/synthdata.hpp"

namespace flowcnn {

struct DatasetSpec {
  enum class Kind { Synthetic, VclipDir };

  Kind kind = Kind::Synthetic;
  std::filesystem::path path;   // vclip directory containing labels.csv
  std::size_t count = 120;      // synthetic clip count
  // fixed frame count per dataset; longer clips are center-cropped in time,
  // shorter ones rejected. 0 = default (synth.frames / 40 for vclip dirs).
  std::size_t target_frames = 0;
  SynthConfig synth;
};

struct SweepConfig {
  std::vector<std::size_t> n_values{1, 2, 3, 10, 20};
  DatasetSpec dataset;
  TrainConfig base;
  FlowConfig flow;
  std::filesystem::path out_dir;
};

struct SweepEntry {
  std::size_t n_frames = 0;
  std::vector<EpochMetrics> metrics;
  ConfusionMatrix confusion;
  double test_acc = 0;
  double peak_val_acc = 0;
  double stabilized_val_acc = 0;
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<std::size_t> test_indices;  // shared across all N by construction
};

struct SummaryRow {
  std::size_t n_frames = 0;
  double peak_val_acc = 0;
  double stabilized_val_acc = 0;
  double test_acc = 0;
};

// labelled clips in deterministic order (labels.csv order / generation order)
std::vector<LabeledClip> load_dataset(const DatasetSpec& spec, std::uint64_t seed);

// flow-encode every clip; all clips must share dimensions. Consumes the
// clip pixel data as it converts so only one copy of the corpus is resident.
std::vector<Sample> to_samples(std::vector<LabeledClip> clips, const FlowConfig& flow);

// Trains one model per N (ascending) on one shared train/test split, writes
// metrics/confusion/curve files, kernel slices, checkpoints and summary.csv
// into cfg.out_dir. Partial outputs are removed if a run fails.
SweepReport run_sweep(const SweepConfig& cfg);

// peak = max over epochs of val_acc; stabilized = mean of the final 5 epochs
double peak_accuracy(const std::vector<EpochMetrics>& metrics);
double stabilized_accuracy(const std::vector<EpochMetrics>& metrics);
std::vector<SummaryRow> summarize(const SweepReport& report);

// metrics_N{n}.csv, curve_N{n}.svg, confusion_N{n}.csv and summary.csv;
// returns the paths written
std::vector<std::filesystem::path> emit_curves(const SweepReport& report,
                                               const std::filesystem::path& out_dir);

// One PPM per (filter, temporal slice): the 3x3 kernel slice with channels
// mapped to RGB, min-max normalized per slice (flat slices map to mid-gray),
// upscaled x16 nearest-neighbor. Filenames kernel_f{f}_t{n}.ppm.
std::vector<std::filesystem::path> export_kernel_slices(
    const ModelParams& params, const std::filesystem::path& out_dir);

}  // namespace flowcnn

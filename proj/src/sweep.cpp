#include "flowcnn/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowcnn/rng.hpp"

namespace flowcnn {

namespace {

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Clip standardize_frames(Clip clip, std::size_t target, const std::string& name) {
  if (clip.frames < target)
    fail(ErrorKind::InvalidClip, name + " has fewer frames than the dataset standard");
  if (clip.frames > target) {
    const std::size_t start = (clip.frames - target) / 2;
    const std::size_t frame_len = clip.height * clip.width * 3;
    std::vector<float> cropped(
        clip.data.begin() + static_cast<std::ptrdiff_t>(start * frame_len),
        clip.data.begin() + static_cast<std::ptrdiff_t>((start + target) * frame_len));
    clip.data = std::move(cropped);
    clip.frames = target;
  }
  return clip;
}

std::vector<LabeledClip> load_vclip_dir(const std::filesystem::path& dir,
                                        std::size_t target) {
  const std::filesystem::path labels_file = dir / "labels.csv";
  std::ifstream in(labels_file);
  if (!in) fail(ErrorKind::IoError, "cannot open " + labels_file.string());

  std::vector<LabeledClip> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && line == "filename,label") {
      first = false;
      continue;
    }
    first = false;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      fail(ErrorKind::MalformedFile, "bad labels.csv row: " + line);
    const std::string name = line.substr(0, comma);
    const std::string label_tok = line.substr(comma + 1);
    if (label_tok != "0" && label_tok != "1")
      fail(ErrorKind::MalformedFile, "label must be 0 or 1 in labels.csv row: " + line);
    LabeledClip item;
    item.label = label_tok == "1" ? 1 : 0;
    item.clip = standardize_frames(load_clip(dir / name), target, name);
    out.push_back(std::move(item));
  }
  if (out.empty()) fail(ErrorKind::EmptySet, "labels.csv lists no clips");
  return out;
}

std::string svg_chart(const std::vector<EpochMetrics>& metrics) {
  const double width = 640, height = 420;
  const double left = 56, top = 24, plot_w = 556, plot_h = 340;
  const std::size_t epochs = metrics.size();

  auto sx = [&](std::size_t epoch_1based) {
    if (epochs == 1) return left + plot_w / 2;
    return left + plot_w * static_cast<double>(epoch_1based - 1) /
                      static_cast<double>(epochs - 1);
  };
  auto sy = [&](double acc) { return top + (1.0 - acc) * plot_h; };
  auto coord = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double acc = 0.25 * tick;
    const double y = sy(acc);
    svg << "<line x1=\"" << coord(left) << "\" y1=\"" << coord(y) << "\" x2=\""
        << coord(left + plot_w) << "\" y2=\"" << coord(y)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << coord(left - 8) << "\" y=\"" << coord(y + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << coord(acc) << "</text>\n";
  }
  svg << "<line x1=\"" << coord(left) << "\" y1=\"" << coord(top) << "\" x2=\""
      << coord(left) << "\" y2=\"" << coord(top + plot_h)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "<line x1=\"" << coord(left) << "\" y1=\"" << coord(top + plot_h)
      << "\" x2=\"" << coord(left + plot_w) << "\" y2=\"" << coord(top + plot_h)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (std::size_t e = 1; e <= epochs; ++e) {
    if (epochs > 10 && e % 2 == 0 && e != epochs) continue;
    svg << "<text x=\"" << coord(sx(e)) << "\" y=\"" << coord(top + plot_h + 16)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << e << "</text>\n";
  }
  svg << "<text x=\"" << coord(left + plot_w / 2) << "\" y=\""
      << coord(height - 8) << "\" font-size=\"13\" text-anchor=\"middle\">epoch</text>\n";

  const char* colors[2] = {"#1f77b4", "#d62728"};
  const char* names[2] = {"train accuracy", "val accuracy"};
  for (int series = 0; series < 2; ++series) {
    svg << "<polyline fill=\"none\" stroke=\"" << colors[series]
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < epochs; ++i) {
      const double acc = series == 0 ? metrics[i].train_acc : metrics[i].val_acc;
      if (i) svg << ' ';
      svg << coord(sx(metrics[i].epoch)) << ',' << coord(sy(acc));
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << coord(left + 12) << "\" y=\""
        << coord(top + 16 + 18 * series) << "\" font-size=\"12\" fill=\""
        << colors[series] << "\">" << names[series] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& file, const std::string& text,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + file.string());
  out << text;
  if (!out) fail(ErrorKind::IoError, "short write to " + file.string());
  written.push_back(file);
}

}  // namespace

std::vector<LabeledClip> load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == DatasetSpec::Kind::Synthetic) {
    const std::size_t target =
        spec.target_frames ? spec.target_frames : spec.synth.frames;
    std::vector<LabeledClip> clips =
        gen_dataset(spec.count, spec.synth, Rng::derive(seed, 0xDA7A));
    for (LabeledClip& item : clips)
      item.clip = standardize_frames(std::move(item.clip), target, "synthetic clip");
    return clips;
  }
  const std::size_t target = spec.target_frames ? spec.target_frames : 40;
  return load_vclip_dir(spec.path, target);
}

std::vector<Sample> to_samples(std::vector<LabeledClip> clips, const FlowConfig& flow) {
  if (clips.empty()) fail(ErrorKind::EmptySet, "no clips to encode");
  const std::size_t frames = clips[0].clip.frames;
  const std::size_t height = clips[0].clip.height;
  const std::size_t width = clips[0].clip.width;
  std::vector<Sample> out;
  out.reserve(clips.size());
  for (LabeledClip& item : clips) {
    if (item.clip.frames != frames || item.clip.height != height ||
        item.clip.width != width)
      fail(ErrorKind::InconsistentDims, "clips in one dataset must share dimensions");
    out.push_back(Sample{clip_to_flow(item.clip, flow), item.label});
    item.clip.data.clear();
    item.clip.data.shrink_to_fit();  // keep peak memory near one copy of the corpus
  }
  return out;
}

double peak_accuracy(const std::vector<EpochMetrics>& metrics) {
  double peak = 0.0;
  for (const EpochMetrics& m : metrics) peak = std::max(peak, m.val_acc);
  return peak;
}

double stabilized_accuracy(const std::vector<EpochMetrics>& metrics) {
  const std::size_t window = std::min<std::size_t>(5, metrics.size());
  if (window == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = metrics.size() - window; i < metrics.size(); ++i)
    sum += metrics[i].val_acc;
  return sum / static_cast<double>(window);
}

std::vector<SummaryRow> summarize(const SweepReport& report) {
  std::vector<SummaryRow> rows;
  rows.reserve(report.entries.size());
  for (const SweepEntry& entry : report.entries)
    rows.push_back(SummaryRow{entry.n_frames, entry.peak_val_acc,
                              entry.stabilized_val_acc, entry.test_acc});
  return rows;
}

std::vector<std::filesystem::path> emit_curves(const SweepReport& report,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const SweepEntry& entry : report.entries) {
    const std::string n = std::to_string(entry.n_frames);

    std::ostringstream csv;
    csv << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const EpochMetrics& m : entry.metrics)
      csv << m.epoch << ',' << fmt6(m.train_loss) << ',' << fmt6(m.train_acc) << ','
          << fmt6(m.val_loss) << ',' << fmt6(m.val_acc) << '\n';
    write_text(out_dir / ("metrics_N" + n + ".csv"), csv.str(), written);

    write_text(out_dir / ("curve_N" + n + ".svg"), svg_chart(entry.metrics), written);

    std::ostringstream confusion;
    confusion << "tp,fp,fn,tn\n"
              << entry.confusion.tp << ',' << entry.confusion.fp << ','
              << entry.confusion.fn << ',' << entry.confusion.tn << '\n';
    write_text(out_dir / ("confusion_N" + n + ".csv"), confusion.str(), written);
  }

  std::ostringstream summary;
  summary << "n,peak_val_acc,stabilized_val_acc,test_acc\n";
  for (const SummaryRow& row : summarize(report))
    summary << row.n_frames << ',' << fmt6(row.peak_val_acc) << ','
            << fmt6(row.stabilized_val_acc) << ',' << fmt6(row.test_acc) << '\n';
  write_text(out_dir / "summary.csv", summary.str(), written);
  return written;
}

std::vector<std::filesystem::path> export_kernel_slices(
    const ModelParams& params, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const Tensor& k = params.conv.kernels;
  const std::size_t n_depth = k.extent(2);
  constexpr std::size_t kScale = 16;

  for (std::size_t f = 0; f < k.extent(0); ++f)
    for (std::size_t n = 0; n < n_depth; ++n) {
      float lo = 0, hi = 0;
      bool first = true;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) {
            const float v = k[(((f * 3 + c) * n_depth + n) * 3 + i) * 3 + j];
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
          }
      const float span = hi - lo;

      std::vector<float> rgb(3 * kScale * 3 * kScale * 3);
      for (std::size_t y = 0; y < 3 * kScale; ++y)
        for (std::size_t x = 0; x < 3 * kScale; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t i = y / kScale, j = x / kScale;
            const float v = k[(((f * 3 + c) * n_depth + n) * 3 + i) * 3 + j];
            // degenerate (flat) slices map to mid-gray 128
            const float byte = span > 0 ? std::round((v - lo) / span * 255.0f) : 128.0f;
            rgb[(y * 3 * kScale + x) * 3 + c] = byte / 255.0f;
          }
      char name[48];
      std::snprintf(name, sizeof(name), "kernel_f%zu_t%zu.ppm", f, n);
      const std::filesystem::path file = out_dir / name;
      write_ppm(file, 3 * kScale, 3 * kScale, rgb);
      written.push_back(file);
    }
  return written;
}

SweepReport run_sweep(const SweepConfig& cfg) {
  if (cfg.n_values.empty()) fail(ErrorKind::ConfigInvalid, "n_values must be nonempty");
  cfg.base.validate();
  cfg.flow.validate();

  std::vector<std::size_t> n_values = cfg.n_values;
  std::sort(n_values.begin(), n_values.end());
  n_values.erase(std::unique(n_values.begin(), n_values.end()), n_values.end());

  std::vector<Sample> samples =
      to_samples(load_dataset(cfg.dataset, cfg.base.seed), cfg.flow);
  const std::vector<std::size_t>& dims = samples[0].flow.shape();
  const std::array<std::size_t, 4> input_dims{dims[0], dims[1], dims[2], dims[3]};

  // every requested depth must fit before any training starts
  for (std::size_t n : n_values) (void)build_model(n, input_dims, 0);

  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const Sample& s : samples) labels.push_back(s.label);
  const auto [train_idx, test_idx] =
      split_indices(labels, cfg.base.split_frac, Rng::derive(cfg.base.seed, 0x5117));

  std::vector<Sample> train_set, test_set;
  train_set.reserve(train_idx.size());
  test_set.reserve(test_idx.size());
  for (std::size_t i : train_idx) train_set.push_back(std::move(samples[i]));
  for (std::size_t i : test_idx) test_set.push_back(std::move(samples[i]));
  samples.clear();

  SweepReport report;
  report.train_size = train_set.size();
  report.test_size = test_set.size();
  report.test_indices = test_idx;

  std::vector<ModelParams> trained;
  for (std::size_t n : n_values) {
    ModelParams params = build_model(n, input_dims, Rng::derive(cfg.base.seed, 0x300D + n));
    TrainConfig tc = cfg.base;
    tc.n_frames = n;
    SweepEntry entry;
    entry.n_frames = n;
    entry.metrics = train(params, train_set, test_set, tc);
    const auto [acc, cm] = evaluate(params, test_set, cfg.base.threshold);
    entry.test_acc = acc;
    entry.confusion = cm;
    entry.peak_val_acc = peak_accuracy(entry.metrics);
    entry.stabilized_val_acc = stabilized_accuracy(entry.metrics);
    report.entries.push_back(std::move(entry));
    trained.push_back(std::move(params));
  }

  // all artifacts are written together; a failure removes what was written
  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::filesystem::path> files = emit_curves(report, cfg.out_dir);
    written.insert(written.end(), files.begin(), files.end());
    for (std::size_t k = 0; k < trained.size(); ++k) {
      const std::string n = std::to_string(n_values[k]);
      const std::filesystem::path ckpt = cfg.out_dir / ("checkpoint_N" + n + ".vcnn");
      save_checkpoint(trained[k], ckpt);
      written.push_back(ckpt);
      files = export_kernel_slices(trained[k], cfg.out_dir / ("kernels_N" + n));
      written.insert(written.end(), files.begin(), files.end());
    }
  } catch (...) {
    std::error_code ec;
    for (const std::filesystem::path& file : written) std::filesystem::remove(file, ec);
    throw;
  }
  return report;
}

}  // namespace flowcnn

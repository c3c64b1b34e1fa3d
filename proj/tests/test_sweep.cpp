#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "flowcnn/sweep.hpp"
#include "test_util.hpp"

using namespace flowcnn;
using testutil::TempDir;
using testutil::thrown_kind;

namespace {

std::vector<EpochMetrics> fake_metrics(const std::vector<double>& val_accs) {
  std::vector<EpochMetrics> out;
  for (std::size_t i = 0; i < val_accs.size(); ++i) {
    EpochMetrics m;
    m.epoch = i + 1;
    m.train_loss = 0.5;
    m.train_acc = 0.8;
    m.val_loss = 0.4;
    m.val_acc = val_accs[i];
    out.push_back(m);
  }
  return out;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  return lines;
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t count = 0, pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

SweepConfig small_sweep_config(const std::filesystem::path& out_dir) {
  SweepConfig cfg;
  cfg.n_values = {1, 2};
  cfg.dataset.kind = DatasetSpec::Kind::Synthetic;
  cfg.dataset.count = 12;
  cfg.dataset.synth.frames = 8;
  cfg.dataset.synth.height = 24;
  cfg.dataset.synth.width = 24;
  cfg.base.epochs = 3;
  cfg.base.seed = 4242;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("peak and stabilized accuracy definitions") {
  SUBCASE("constant accuracy collapses both to the constant") {
    auto metrics = fake_metrics(std::vector<double>(20, 0.9));
    CHECK(peak_accuracy(metrics) == doctest::Approx(0.9));
    CHECK(stabilized_accuracy(metrics) == doctest::Approx(0.9));
  }
  SUBCASE("a linear rise peaks at the end and stabilizes on the last five") {
    std::vector<double> accs;
    for (int i = 0; i < 20; ++i) accs.push_back(0.5 + (0.95 - 0.5) * i / 19.0);
    auto metrics = fake_metrics(accs);
    CHECK(peak_accuracy(metrics) == doctest::Approx(0.95));
    double last5 = 0;
    for (int i = 15; i < 20; ++i) last5 += accs[i];
    CHECK(stabilized_accuracy(metrics) == doctest::Approx(last5 / 5.0));
    // monotone sequences peak at the final epoch
    CHECK(peak_accuracy(metrics) == doctest::Approx(accs.back()));
  }
  SUBCASE("short runs stabilize over what exists") {
    auto metrics = fake_metrics({0.5, 0.7});
    CHECK(stabilized_accuracy(metrics) == doctest::Approx(0.6));
  }
}

TEST_CASE("emit_curves writes parseable CSVs and two-series SVGs") {
  SweepReport report;
  SweepEntry entry;
  entry.n_frames = 3;
  std::vector<double> accs;
  for (int i = 0; i < 20; ++i) accs.push_back(0.3 + 0.031 * i);
  entry.metrics = fake_metrics(accs);
  entry.confusion = ConfusionMatrix{9, 2, 1, 8};
  entry.test_acc = entry.confusion.accuracy();
  entry.peak_val_acc = peak_accuracy(entry.metrics);
  entry.stabilized_val_acc = stabilized_accuracy(entry.metrics);
  report.entries.push_back(entry);
  report.test_size = 20;

  TempDir dir("curves");
  auto written = emit_curves(report, dir.path);
  REQUIRE(written.size() == 4);  // metrics, svg, confusion, summary

  const std::string metrics_csv = slurp(dir.path / "metrics_N3.csv");
  CHECK(count_lines(metrics_csv) == 21);
  CHECK(metrics_csv.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);

  // parse back and compare at 6 decimals
  std::istringstream in(metrics_csv);
  std::string line;
  std::getline(in, line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::size_t epoch;
    double tl, ta, vl, va;
    fields >> epoch >> tl >> ta >> vl >> va;
    CHECK(epoch == row + 1);
    CHECK(std::fabs(va - entry.metrics[row].val_acc) <= 5e-7);
    CHECK(std::fabs(ta - entry.metrics[row].train_acc) <= 5e-7);
    ++row;
  }
  CHECK(row == 20);

  const std::string svg = slurp(dir.path / "curve_N3.svg");
  CHECK(count_occurrences(svg, "<polyline") == 2);

  const std::string confusion = slurp(dir.path / "confusion_N3.csv");
  CHECK(confusion == "tp,fp,fn,tn\n9,2,1,8\n");

  // summary peak must equal the max of the metrics column after parsing
  const std::string summary = slurp(dir.path / "summary.csv");
  CHECK(summary.rfind("n,peak_val_acc,stabilized_val_acc,test_acc\n", 0) == 0);
  char expect[64];
  std::snprintf(expect, sizeof(expect), "%.6f", peak_accuracy(entry.metrics));
  CHECK(summary.find(expect) != std::string::npos);
}

TEST_CASE("kernel slice export") {
  TempDir dir("kernels");

  SUBCASE("an N=3 model exports 18 images, N=1 exports 6") {
    ModelParams p3 = build_model(3, {3, 23, 32, 32}, 1);
    auto files = export_kernel_slices(p3, dir.path / "n3");
    CHECK(files.size() == 18);
    CHECK(std::filesystem::exists(dir.path / "n3" / "kernel_f0_t0.ppm"));
    CHECK(std::filesystem::exists(dir.path / "n3" / "kernel_f5_t2.ppm"));

    ModelParams p1 = build_model(1, {3, 23, 32, 32}, 1);
    files = export_kernel_slices(p1, dir.path / "n1");
    CHECK(files.size() == 6);
  }
  SUBCASE("a flat slice maps to mid-gray") {
    ModelParams p = build_model(1, {3, 23, 32, 32}, 1);
    p.conv.kernels.fill(0.25f);
    auto files = export_kernel_slices(p, dir.path / "flat");
    PpmImage img = read_ppm(files[0]);
    CHECK(img.height == 48);
    CHECK(img.width == 48);
    for (float v : img.rgb) CHECK(v == doctest::Approx(128.0f / 255.0f));
  }
  SUBCASE("slices are normalized per slice to the full byte range") {
    ModelParams p = build_model(1, {3, 23, 32, 32}, 7);
    auto files = export_kernel_slices(p, dir.path / "range");
    PpmImage img = read_ppm(files[0]);
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.rgb) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
  }
}

TEST_CASE("dataset loading from a vclip directory") {
  TempDir dir("vclip_dataset");
  SynthConfig sc;
  sc.frames = 8;
  sc.height = 16;
  sc.width = 16;

  std::ofstream labels(dir.path / "labels.csv");
  labels << "filename,label\n";
  for (int i = 0; i < 4; ++i) {
    LabeledClip item = gen_clip(i % 2, sc, 100 + static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d.vclip", i);
    write_vclip(item.clip, dir.path / name);
    labels << name << ',' << item.label << '\n';
  }
  labels.close();

  DatasetSpec spec;
  spec.kind = DatasetSpec::Kind::VclipDir;
  spec.path = dir.path;
  spec.target_frames = 8;

  auto clips = load_dataset(spec, 0);
  REQUIRE(clips.size() == 4);
  CHECK(clips[0].label == 0);
  CHECK(clips[1].label == 1);
  CHECK(clips[0].clip.frames == 8);

  SUBCASE("longer clips are center-cropped to the standard") {
    spec.target_frames = 6;
    auto cropped = load_dataset(spec, 0);
    CHECK(cropped[0].clip.frames == 6);
    // center crop of 8 -> 6 drops one frame on each side
    Clip whole = clips[0].clip;
    const std::size_t frame_len = whole.height * whole.width * 3;
    for (std::size_t i = 0; i < 6 * frame_len; ++i)
      CHECK(cropped[0].clip.data[i] == whole.data[i + frame_len]);
  }
  SUBCASE("shorter clips are rejected") {
    spec.target_frames = 10;
    CHECK(thrown_kind([&] { load_dataset(spec, 0); }) == ErrorKind::InvalidClip);
  }
  SUBCASE("a missing labels file is an IO error") {
    spec.path = dir.path / "nowhere";
    CHECK(thrown_kind([&] { load_dataset(spec, 0); }) == ErrorKind::IoError);
  }
}

TEST_CASE("run_sweep emits deterministic, complete outputs") {
  TempDir dir("sweep_run");
  SweepConfig cfg = small_sweep_config(dir.path / "out");

  SweepReport report = run_sweep(cfg);
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].n_frames == 1);
  CHECK(report.entries[1].n_frames == 2);
  CHECK(report.train_size + report.test_size == 12);
  for (const SweepEntry& entry : report.entries) {
    CHECK(entry.metrics.size() == 3);
    CHECK(entry.confusion.total() == report.test_size);
  }
  CHECK(std::filesystem::exists(cfg.out_dir / "metrics_N1.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir / "curve_N2.svg"));
  CHECK(std::filesystem::exists(cfg.out_dir / "confusion_N1.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir / "summary.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir / "checkpoint_N1.vcnn"));
  CHECK(std::filesystem::exists(cfg.out_dir / "kernels_N2" / "kernel_f5_t1.ppm"));

  SUBCASE("a second identical run reproduces every byte") {
    const std::string before_metrics = slurp(cfg.out_dir / "metrics_N1.csv");
    const std::string before_summary = slurp(cfg.out_dir / "summary.csv");
    const std::string before_ckpt = slurp(cfg.out_dir / "checkpoint_N2.vcnn");

    SweepReport again = run_sweep(cfg);
    CHECK(again.test_indices == report.test_indices);
    CHECK(slurp(cfg.out_dir / "metrics_N1.csv") == before_metrics);
    CHECK(slurp(cfg.out_dir / "summary.csv") == before_summary);
    CHECK(slurp(cfg.out_dir / "checkpoint_N2.vcnn") == before_ckpt);
  }
  SUBCASE("an invalid depth fails before any training") {
    cfg.n_values = {1, 7};  // 7 flow frames pool to 7; conv depth 7 needs more
    cfg.out_dir = dir.path / "bad";
    CHECK(thrown_kind([&] { run_sweep(cfg); }) == ErrorKind::ArchitectureUnderflow);
    CHECK(!std::filesystem::exists(cfg.out_dir / "summary.csv"));
  }
}

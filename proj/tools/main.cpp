// Command-line front end: dataset generation, flow visualization, training,
// the temporal-depth sweep, checkpoint evaluation and kernel export.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowcnn/model.hpp"
#include "flowcnn/opticalflow.hpp"
#include "flowcnn/rng.hpp"
#include "flowcnn/sweep.hpp"
#include "flowcnn/synthdata.hpp"
#include "flowcnn/videoio.hpp"

namespace {

using nlohmann::json;

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const flowcnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return flowcnn::exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) flowcnn::fail(flowcnn::ErrorKind::ConfigInvalid, "cannot open config " + path);
  json j;
  in >> j;
  return j;
}

flowcnn::DatasetSpec::Kind parse_kind(const std::string& kind) {
  if (kind == "synthetic") return flowcnn::DatasetSpec::Kind::Synthetic;
  if (kind == "vclip") return flowcnn::DatasetSpec::Kind::VclipDir;
  flowcnn::fail(flowcnn::ErrorKind::ConfigInvalid,
                "dataset kind must be 'synthetic' or 'vclip', got '" + kind + "'");
}

// Shared flag block for subcommands that read a dataset and train. JSON
// config values are applied first, then any flag the user actually passed.
struct RunFlags {
  std::string config_path;
  std::string kind = "synthetic";
  std::string data_path;
  std::size_t count = 120;
  std::size_t target_frames = 0;
  std::size_t frames = 24, height = 32, width = 32, blobs = 2, reversal = 4;
  double speed = 1.5, noise = 0.02;
  std::uint64_t synth_seed = 0;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t epochs = 20, batch_size = 8;
  double split_frac = 0.2, threshold = 0.5;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t window = 5;
  double det_eps = 1e-6, v_max = 8.0;

  void add_dataset_flags(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--kind", kind, "dataset kind: synthetic | vclip");
    cmd->add_option("--data", data_path, "vclip dataset directory (with labels.csv)");
    cmd->add_option("--count", count, "synthetic clip count");
    cmd->add_option("--target-frames", target_frames,
                    "standard frame count (longer clips center-cropped)");
    cmd->add_option("--frames", frames, "synthetic frames per clip");
    cmd->add_option("--height", height, "synthetic frame height");
    cmd->add_option("--width", width, "synthetic frame width");
    cmd->add_option("--blobs", blobs, "synthetic blob count");
    cmd->add_option("--speed", speed, "synthetic blob speed, px/frame");
    cmd->add_option("--reversal-period", reversal, "label-1 velocity flip period");
    cmd->add_option("--noise", noise, "synthetic pixel noise sigma");
    cmd->add_option("--window", window, "flow window size (odd)");
    cmd->add_option("--det-eps", det_eps, "flow conditioning threshold");
    cmd->add_option("--vmax", v_max, "flow magnitude at full intensity");
  }

  void add_train_flags(CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--split-frac", split_frac, "test fraction");
    cmd->add_option("--threshold", threshold, "decision threshold");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--beta1", beta1, "Adam beta1");
    cmd->add_option("--beta2", beta2, "Adam beta2");
    cmd->add_option("--adam-eps", adam_eps, "Adam epsilon");
  }

  // returns true when the config file supplied a seed
  bool apply_config(const json& j, flowcnn::SweepConfig& cfg) const {
    bool seed_present = false;
    if (j.contains("n_values")) cfg.n_values = j.at("n_values").get<std::vector<std::size_t>>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("kind")) cfg.dataset.kind = parse_kind(d.at("kind").get<std::string>());
      if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
      if (d.contains("count")) cfg.dataset.count = d.at("count").get<std::size_t>();
      if (d.contains("target_frames"))
        cfg.dataset.target_frames = d.at("target_frames").get<std::size_t>();
      if (d.contains("synth")) {
        const json& s = d.at("synth");
        flowcnn::SynthConfig& sc = cfg.dataset.synth;
        if (s.contains("frames")) sc.frames = s.at("frames").get<std::size_t>();
        if (s.contains("height")) sc.height = s.at("height").get<std::size_t>();
        if (s.contains("width")) sc.width = s.at("width").get<std::size_t>();
        if (s.contains("n_blobs")) sc.n_blobs = s.at("n_blobs").get<std::size_t>();
        if (s.contains("speed")) sc.speed = s.at("speed").get<double>();
        if (s.contains("reversal_period"))
          sc.reversal_period = s.at("reversal_period").get<std::size_t>();
        if (s.contains("noise_sigma")) sc.noise_sigma = s.at("noise_sigma").get<double>();
        if (s.contains("seed")) sc.seed = s.at("seed").get<std::uint64_t>();
      }
    }
    if (j.contains("base")) {
      const json& b = j.at("base");
      if (b.contains("n_frames")) cfg.base.n_frames = b.at("n_frames").get<std::size_t>();
      if (b.contains("epochs")) cfg.base.epochs = b.at("epochs").get<std::size_t>();
      if (b.contains("batch_size")) cfg.base.batch_size = b.at("batch_size").get<std::size_t>();
      if (b.contains("split_frac")) cfg.base.split_frac = b.at("split_frac").get<double>();
      if (b.contains("seed")) {
        cfg.base.seed = b.at("seed").get<std::uint64_t>();
        seed_present = true;
      }
      if (b.contains("threshold")) cfg.base.threshold = b.at("threshold").get<double>();
      if (b.contains("adam")) {
        const json& a = b.at("adam");
        if (a.contains("alpha")) cfg.base.adam.alpha = a.at("alpha").get<double>();
        if (a.contains("beta1")) cfg.base.adam.beta1 = a.at("beta1").get<double>();
        if (a.contains("beta2")) cfg.base.adam.beta2 = a.at("beta2").get<double>();
        if (a.contains("epsilon")) cfg.base.adam.epsilon = a.at("epsilon").get<double>();
      }
    }
    if (j.contains("flow")) {
      const json& f = j.at("flow");
      if (f.contains("window")) cfg.flow.window = f.at("window").get<std::size_t>();
      if (f.contains("det_epsilon")) cfg.flow.det_epsilon = f.at("det_epsilon").get<double>();
      if (f.contains("v_max")) cfg.flow.v_max = f.at("v_max").get<double>();
    }
    return seed_present;
  }

  // overlay: defaults -> config file -> explicitly passed flags
  flowcnn::SweepConfig build_config(const CLI::App* cmd, bool* seed_provided) const {
    flowcnn::SweepConfig cfg;
    bool seed_present = false;
    if (!config_path.empty()) seed_present = apply_config(load_config_file(config_path), cfg);

    auto passed = [cmd](const std::string& flag) {
      const CLI::Option* opt = cmd->get_option_no_throw(flag);
      return opt != nullptr && opt->count() > 0;
    };
    if (passed("--kind")) cfg.dataset.kind = parse_kind(kind);
    if (passed("--data")) cfg.dataset.path = data_path;
    if (passed("--count")) cfg.dataset.count = count;
    if (passed("--target-frames")) cfg.dataset.target_frames = target_frames;
    if (passed("--frames")) cfg.dataset.synth.frames = frames;
    if (passed("--height")) cfg.dataset.synth.height = height;
    if (passed("--width")) cfg.dataset.synth.width = width;
    if (passed("--blobs")) cfg.dataset.synth.n_blobs = blobs;
    if (passed("--speed")) cfg.dataset.synth.speed = speed;
    if (passed("--reversal-period")) cfg.dataset.synth.reversal_period = reversal;
    if (passed("--noise")) cfg.dataset.synth.noise_sigma = noise;
    if (passed("--window")) cfg.flow.window = window;
    if (passed("--det-eps")) cfg.flow.det_epsilon = det_eps;
    if (passed("--vmax")) cfg.flow.v_max = v_max;
    if (passed("--out")) cfg.out_dir = out_dir;
    else if (cfg.out_dir.empty()) cfg.out_dir = out_dir;
    if (passed("--seed")) {
      cfg.base.seed = seed;
      seed_present = true;
    }
    if (passed("--epochs")) cfg.base.epochs = epochs;
    if (passed("--batch-size")) cfg.base.batch_size = batch_size;
    if (passed("--split-frac")) cfg.base.split_frac = split_frac;
    if (passed("--threshold")) cfg.base.threshold = threshold;
    if (passed("--lr")) cfg.base.adam.alpha = lr;
    if (passed("--beta1")) cfg.base.adam.beta1 = beta1;
    if (passed("--beta2")) cfg.base.adam.beta2 = beta2;
    if (passed("--adam-eps")) cfg.base.adam.epsilon = adam_eps;
    if (seed_provided) *seed_provided = seed_present;
    return cfg;
  }
};

void print_summary(const flowcnn::SweepReport& report) {
  std::printf("%-4s %-10s %-12s %-10s\n", "N", "peak", "stabilized", "test_acc");
  for (const flowcnn::SummaryRow& row : flowcnn::summarize(report))
    std::printf("%-4zu %-10.6f %-12.6f %-10.6f\n", row.n_frames, row.peak_val_acc,
                row.stabilized_val_acc, row.test_acc);
}

void write_flow_frames(const flowcnn::Tensor& flow, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t depth = flow.extent(1), h = flow.extent(2), w = flow.extent(3);
  for (std::size_t t = 0; t < depth; ++t) {
    std::vector<float> rgb(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          rgb[(y * w + x) * 3 + c] = flow[((c * depth + t) * h + y) * w + x];
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.ppm", t + 1);
    flowcnn::write_ppm(dir / name, h, w, rgb);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-depth experiments for optical-flow violence detection"};
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic .vclip dataset");
  struct {
    std::string out;
    std::size_t count = 120;
    flowcnn::SynthConfig cfg;
  } synth;
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--count", synth.count, "clip count (even)");
  synth_cmd->add_option("--seed", synth.cfg.seed, "generation seed");
  synth_cmd->add_option("--frames", synth.cfg.frames, "frames per clip");
  synth_cmd->add_option("--height", synth.cfg.height, "frame height");
  synth_cmd->add_option("--width", synth.cfg.width, "frame width");
  synth_cmd->add_option("--blobs", synth.cfg.n_blobs, "blob count");
  synth_cmd->add_option("--speed", synth.cfg.speed, "blob speed, px/frame");
  synth_cmd->add_option("--reversal-period", synth.cfg.reversal_period,
                        "label-1 velocity flip period");
  synth_cmd->add_option("--noise", synth.cfg.noise_sigma, "pixel noise sigma");

  // ---- flow -----------------------------------------------------------
  auto* flow_cmd = app.add_subcommand("flow", "encode a clip as optical-flow PPM frames");
  struct {
    std::string input, out;
    flowcnn::FlowConfig cfg;
    bool quarter = false;
  } flowopt;
  flow_cmd->add_option("--input", flowopt.input, "clip: PPM frame directory or .vclip")->required();
  flow_cmd->add_option("--out", flowopt.out, "output directory")->required();
  flow_cmd->add_flag("--quarter", flowopt.quarter, "box-resize to quarter size first");
  flow_cmd->add_option("--window", flowopt.cfg.window, "flow window size (odd)");
  flow_cmd->add_option("--det-eps", flowopt.cfg.det_epsilon, "conditioning threshold");
  flow_cmd->add_option("--vmax", flowopt.cfg.v_max, "magnitude at full intensity");

  // ---- train ----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a single temporal depth");
  RunFlags train_flags;
  std::size_t train_n = 3;
  train_cmd->add_option("--n", train_n, "temporal kernel depth N");
  train_flags.add_dataset_flags(train_cmd);
  train_flags.add_train_flags(train_cmd);

  // ---- sweep ----------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "run the full N sweep experiment");
  RunFlags sweep_flags;
  std::vector<std::size_t> sweep_ns;
  sweep_cmd->add_option("--n-values", sweep_ns, "temporal depths to sweep")->delimiter(',');
  sweep_flags.add_dataset_flags(sweep_cmd);
  sweep_flags.add_train_flags(sweep_cmd);

  // ---- eval -----------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  RunFlags eval_flags;
  std::string eval_model, eval_out;
  eval_cmd->add_option("--model", eval_model, "checkpoint file")->required();
  eval_cmd->add_option("--out", eval_out, "optional CSV output file");
  eval_cmd->add_option("--threshold", eval_flags.threshold, "decision threshold");
  eval_cmd->add_option("--seed", eval_flags.seed, "seed (synthetic datasets)");
  eval_flags.add_dataset_flags(eval_cmd);

  // ---- kernels --------------------------------------------------------
  auto* kernels_cmd = app.add_subcommand("kernels", "export kernel slice images");
  std::string kernels_model, kernels_out;
  kernels_cmd->add_option("--model", kernels_model, "checkpoint file")->required();
  kernels_cmd->add_option("--out", kernels_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (synth_cmd->parsed()) {
    return run_guarded([&] {
      const auto dataset = flowcnn::gen_dataset(synth.count, synth.cfg, synth.cfg.seed);
      std::filesystem::create_directories(synth.out);
      std::ofstream labels(std::filesystem::path(synth.out) / "labels.csv");
      if (!labels) flowcnn::fail(flowcnn::ErrorKind::IoError, "cannot write labels.csv");
      labels << "filename,label\n";
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04zu.vclip", i);
        flowcnn::write_vclip(dataset[i].clip, std::filesystem::path(synth.out) / name);
        labels << name << ',' << dataset[i].label << '\n';
      }
      std::printf("wrote %zu clips to %s\n", dataset.size(), synth.out.c_str());
    });
  }

  if (flow_cmd->parsed()) {
    return run_guarded([&] {
      flowcnn::Clip clip = flowcnn::load_clip(flowopt.input);
      if (flowopt.quarter) clip = flowcnn::resize_quarter(clip);
      const flowcnn::Tensor flow = flowcnn::clip_to_flow(clip, flowopt.cfg);
      write_flow_frames(flow, flowopt.out);
      std::printf("wrote %zu flow frames to %s\n", flow.extent(1), flowopt.out.c_str());
    });
  }

  if (train_cmd->parsed()) {
    return run_guarded([&] {
      flowcnn::SweepConfig cfg = train_flags.build_config(train_cmd, nullptr);
      if (train_cmd->count("--n") > 0 || cfg.n_values.size() != 1)
        cfg.n_values = {train_n};
      const flowcnn::SweepReport report = flowcnn::run_sweep(cfg);
      print_summary(report);
    });
  }

  if (sweep_cmd->parsed()) {
    return run_guarded([&] {
      bool seed_provided = false;
      flowcnn::SweepConfig cfg = sweep_flags.build_config(sweep_cmd, &seed_provided);
      if (sweep_cmd->count("--n-values") > 0) cfg.n_values = sweep_ns;
      if (!seed_provided)
        flowcnn::fail(flowcnn::ErrorKind::ConfigInvalid,
                      "sweep requires an explicit --seed (or base.seed in the config)");
      const flowcnn::SweepReport report = flowcnn::run_sweep(cfg);
      print_summary(report);
    });
  }

  if (eval_cmd->parsed()) {
    return run_guarded([&] {
      const flowcnn::ModelParams params = flowcnn::load_checkpoint(eval_model);
      flowcnn::SweepConfig cfg = eval_flags.build_config(eval_cmd, nullptr);
      // the checkpoint dictates the frame count the dataset must match
      if (cfg.dataset.target_frames == 0)
        cfg.dataset.target_frames = params.input_dims[1] + 1;
      const auto samples =
          flowcnn::to_samples(flowcnn::load_dataset(cfg.dataset, cfg.base.seed), cfg.flow);
      const double threshold = eval_cmd->count("--threshold") > 0
                                   ? eval_flags.threshold
                                   : cfg.base.threshold;
      const auto [acc, cm] = flowcnn::evaluate(params, samples, threshold);
      std::printf("accuracy=%.6f tp=%zu fp=%zu fn=%zu tn=%zu\n", acc, cm.tp, cm.fp,
                  cm.fn, cm.tn);
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        if (!out) flowcnn::fail(flowcnn::ErrorKind::IoError, "cannot write " + eval_out);
        char acc_text[32];
        std::snprintf(acc_text, sizeof(acc_text), "%.6f", acc);
        out << "accuracy,tp,fp,fn,tn\n"
            << acc_text << ',' << cm.tp << ',' << cm.fp << ',' << cm.fn << ',' << cm.tn << '\n';
      }
    });
  }

  if (kernels_cmd->parsed()) {
    return run_guarded([&] {
      const flowcnn::ModelParams params = flowcnn::load_checkpoint(kernels_model);
      const auto files = flowcnn::export_kernel_slices(params, kernels_out);
      std::printf("wrote %zu kernel slices to %s\n", files.size(), kernels_out.c_str());
    });
  }

  return 0;
}

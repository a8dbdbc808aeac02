#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "defcor/calib.hpp"
#include "defcor/checkpoint.hpp"
#include "defcor/config.hpp"
#include "defcor/error.hpp"
#include "defcor/eval.hpp"
#include "defcor/field.hpp"
#include "defcor/phantom.hpp"
#include "defcor/train.hpp"

namespace fs = std::filesystem;
using namespace defcor;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

// --seed beats DEFCOR_SEED, which beats the config's own seed.
RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (const char* env = std::getenv("DEFCOR_SEED"); env && *env) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DEFCOR_SEED is not an unsigned integer: ") + env);
    }
  }
  if (c.jobs) {
    if (*c.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.io.jobs = *c.jobs;
  }
  cfg.propagate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("--config", c.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Seed for every random stream (fallback: DEFCOR_SEED)");
  app->add_option("--jobs", c.jobs, "Worker threads");
}

bool dir_non_empty(const fs::path& p) { return fs::exists(p) && fs::is_directory(p) && !fs::is_empty(p); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformation correction for compressed ultrasound frames"};
  app.require_subcommand(1);

  Common synth_c;
  std::string synth_out;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  add_common(synth, synth_c);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--force", synth_force, "Overwrite a non-empty output directory");

  Common train_c;
  std::string train_data, train_out, train_resume;
  std::optional<std::int64_t> train_steps;
  std::optional<double> train_lr;
  std::optional<int> train_batch;
  auto* train = app.add_subcommand("train", "Train the network");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset directory (manifest.json)")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--resume", train_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--steps", train_steps, "Override train.steps");
  train->add_option("--lr", train_lr, "Override train.learning_rate");
  train->add_option("--batch-size", train_batch, "Override train.batch_size");

  std::string corr_ckpt, corr_image, corr_trace, corr_out, corr_flow;
  double corr_force = 0;
  auto* corr = app.add_subcommand("correct", "Correct one compressed frame");
  corr->add_option("--ckpt", corr_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  corr->add_option("--image", corr_image, "Input PGM")->required()->check(CLI::ExistingFile);
  corr->add_option("--force-n", corr_force, "Contact force in N")->required()->check(CLI::NonNegativeNumber);
  corr->add_option("--palpation", corr_trace, "Palpation trace CSV")->required()->check(CLI::ExistingFile);
  corr->add_option("--out", corr_out, "Corrected PGM")->required();
  corr->add_option("--flow-out", corr_flow, "Write the predicted field (DFF1)");

  Common eval_c;
  std::string eval_ckpt, eval_data, eval_split, eval_out, eval_pred = "model";
  auto* ev = app.add_subcommand("eval", "Evaluate a model or a baseline on a split");
  add_common(ev, eval_c);
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint (required for --predictor model)")->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", eval_split, "train, val or test (default from config)");
  ev->add_option("--out", eval_out, "Report directory")->required();
  ev->add_option("--predictor", eval_pred, "model, gt, identity or linear")
      ->check(CLI::IsMember({"model", "gt", "identity", "linear"}));

  std::string viz_flow, viz_out;
  std::optional<double> viz_max;
  auto* viz = app.add_subcommand("flowviz", "Colour-code a flow field");
  viz->add_option("--flow", viz_flow, "DFF1 input")->required()->check(CLI::ExistingFile);
  viz->add_option("--out", viz_out, "PPM output")->required();
  viz->add_option("--max", viz_max, "Magnitude mapped to full saturation (default: field maximum)");

  std::string calib_trace;
  auto* calib = app.add_subcommand("calib", "Fit global stiffness to a palpation trace");
  calib->add_option("--trace", calib_trace, "Palpation trace CSV")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto cfg = resolve_config(synth_c);
      if (dir_non_empty(synth_out)) {
        if (!synth_force) throw ConfigError("output directory " + synth_out + " is not empty (use --force)");
        fs::remove_all(synth_out);
      }
      const auto m = synthesize_dataset(cfg.synth, synth_out);
      std::ofstream(fs::path(synth_out) / "config.json") << dump_run_config(cfg);
      std::cout << "wrote " << m.records.size() << " frames (" << m.split("train").size() << " train, "
                << m.split("val").size() << " val, " << m.split("test").size() << " test) to " << synth_out << '\n';
    } else if (*train) {
      auto cfg = resolve_config(train_c);
      if (train_steps) cfg.train.steps = *train_steps;
      if (train_lr) cfg.train.learning_rate = *train_lr;
      if (train_batch) cfg.train.batch_size = *train_batch;
      const auto m = read_manifest(fs::path(train_data) / "manifest.json");
      std::optional<Checkpoint> resume;
      if (!train_resume.empty()) resume = load_checkpoint(train_resume);
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = train_loop(m, train_data, cfg.train, cfg.loss, train_out, resume, &std::cout);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto files = train_outputs(train_out);
      std::cout << "trained " << res.final_state.step << " steps in " << std::fixed << std::setprecision(1) << secs
                << " s; best val EPE " << std::setprecision(4) << res.best_val_epe << " px\n"
                << "checkpoint " << files.final_checkpoint.string() << ", best " << files.best_checkpoint.string()
                << ", metrics " << files.metrics_csv.string() << '\n';
    } else if (*corr) {
      const auto ckpt = load_checkpoint(corr_ckpt);
      const auto fit = fit_global_stiffness(read_palpation_csv(corr_trace));
      const auto img = read_pgm(corr_image);
      const auto t0 = std::chrono::steady_clock::now();
      FlowField flow(img.width(), img.height());
      if (corr_force == 0) {
        // Zero force predicts the zero field; pass the file through untouched.
        fs::copy_file(corr_image, corr_out, fs::copy_options::overwrite_existing);
      } else {
        write_pgm(corr_out, correct(img, corr_force, fit.c2_slope, ckpt.params, &flow));
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (!corr_flow.empty()) write_dff(corr_flow, flow);
      std::cout << "K_g " << fit.c2_slope << " N/mm, " << img.width() << "x" << img.height() << " frame corrected in "
                << std::fixed << std::setprecision(1) << ms << " ms\n";
    } else if (*ev) {
      const auto cfg = resolve_config(eval_c);
      const auto m = read_manifest(fs::path(eval_data) / "manifest.json");
      std::optional<Checkpoint> ckpt;
      Predictor pred;
      if (eval_pred == "model") {
        if (eval_ckpt.empty()) throw ConfigError("--ckpt is required for the model predictor");
        ckpt = load_checkpoint(eval_ckpt);
        pred = model_predictor(ckpt->params);
      } else if (eval_pred == "gt") {
        pred = gt_predictor();
      } else if (eval_pred == "identity") {
        pred = identity_predictor();
      } else {
        pred = linear_scaling_predictor();
      }
      fs::create_directories(eval_out);
      EvalOptions opts;
      opts.force_bins = cfg.eval.force_bins;
      opts.jobs = cfg.io.jobs;
      opts.error_map_scale_px = cfg.eval.error_map_scale_px;
      if (cfg.eval.write_error_maps) opts.error_map_dir = fs::path(eval_out) / "error_maps";
      const auto split = eval_split.empty() ? cfg.eval.split : eval_split;
      const auto rep = evaluate_run(m, eval_data, split, pred, opts);
      write_report_csv(fs::path(eval_out) / "report.csv", rep);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << std::fixed << std::setprecision(3);
      for (int bin : rep.bins()) {
        std::cout << "bin " << bin << " N:";
        for (const char* k : {"epe_mean", "dice_deformed", "dice_corrected", "ncc_deformed", "ncc_corrected"})
          if (auto s = rep.summary(bin, k)) std::cout << ' ' << k << '=' << s->mean;
        std::cout << '\n';
      }
      std::cout << "report " << (fs::path(eval_out) / "report.csv").string() << '\n';
    } else if (*viz) {
      write_ppm(viz_out, flow_to_color(read_dff(viz_flow), viz_max));
    } else if (*calib) {
      const auto fit = fit_global_stiffness(read_palpation_csv(calib_trace));
      std::cout << std::setprecision(10) << "c2 " << fit.c2_slope << "\nc1 " << fit.c1_intercept << "\nr2 "
                << fit.r_squared << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

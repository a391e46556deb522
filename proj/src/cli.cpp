#include "dgct/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "dgct/eval.hpp"
#include "dgct/io.hpp"
#include "dgct/parallel.hpp"
#include "dgct/renderer.hpp"

namespace dgct {

namespace {

const std::vector<std::string> kCommands = {"simulate", "train",    "reconstruct",
                                            "render",   "evaluate", "curve"};

struct Common {
  int threads = 0;
  bool deterministic = false;
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--threads", c.threads, "Worker threads (0 = all available)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", c.deterministic, "Fixed-order reductions");
}

void apply(const Common& c) { set_execution_policy({c.threads, c.deterministic}); }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int cmd_simulate(CLI::App& app, std::ostream& out) {
  const std::string config = app.get_option("--config")->as<std::string>();
  const std::string dir = app.get_option("--out")->as<std::string>();
  const SimulationConfig sim = parse_simulation_config(read_text_file(config));
  sim.validate();
  const ProjectionSet data =
      generate_dataset(sim.phantom(), sim.geometry, sim.n_proj, sim.duration, sim.seed);
  write_dataset(dir, data);
  out << "wrote " << data.size() << " projections to " << dir << "\n";
  return 0;
}

int cmd_train(CLI::App& app, std::ostream& out) {
  const std::string data_dir = app.get_option("--data")->as<std::string>();
  const std::string ckpt = app.get_option("--out")->as<std::string>();
  const std::string preset_name = app.get_option("--preset")->as<std::string>();
  TrainConfig cfg = preset(preset_name);
  if (auto* c = app.get_option("--config"); c->count() > 0) {
    cfg = parse_train_config(read_text_file(c->as<std::string>()), cfg);
  }
  cfg.validate();
  fs::path metrics_path = fs::path(ckpt).parent_path() / "metrics.csv";
  if (auto* m = app.get_option("--metrics"); m->count() > 0) metrics_path = m->as<std::string>();
  const int log_every = app.get_option("--log-every")->as<int>();

  const ProjectionSet data = read_dataset(data_dir);
  const FitResult res = fit(data, cfg, [&](const MetricsRow& r) {
    if (log_every > 0 && (r.iter + 1) % log_every == 0) {
      out << "iter " << r.iter + 1 << "/" << cfg.iters_total << " total=" << r.terms.total
          << " T_hat=" << std::setprecision(6) << r.period << std::endl;
    }
  });
  save_checkpoint(ckpt, res.state, cfg);
  write_text_file(metrics_path, metrics_csv(res.metrics));
  out << "final T_hat=" << std::setprecision(8) << res.state.model.period.seconds()
      << " kernels=" << res.state.model.gaussians.size() << "\n";
  return 0;
}

VolumeSpec grid_spec(int res, const Box& bounds) {
  if (res < 1) throw InputDomainError("--res must be >= 1");
  VolumeSpec spec;
  spec.res = {res, res, res};
  spec.bounds = bounds;
  return spec;
}

int cmd_reconstruct(CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(app.get_option("--ckpt")->as<std::string>());
  const double t = app.get_option("--time")->as<double>();
  const VolumeSpec spec = grid_spec(app.get_option("--res")->as<int>(),
                                    ck.state.model.field.bounds.space);
  const std::string path = app.get_option("--out")->as<std::string>();
  write_volume(path, reconstruct(ck.state.model, t, spec));
  out << "wrote " << spec.res[0] << "^3 volume to " << path << "\n";
  return 0;
}

int cmd_render(CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(app.get_option("--ckpt")->as<std::string>());
  const double t = app.get_option("--time")->as<double>();
  const double angle = app.get_option("--angle")->as<double>();
  ConeBeamGeometry geom;
  geom.bounds = ck.state.model.field.bounds.space;
  if (auto* d = app.get_option("--data"); d->count() > 0) {
    geom = read_dataset(d->as<std::string>()).geometry;
  }
  const std::string path = app.get_option("--out")->as<std::string>();
  const GaussianSet deformed = deform(ck.state.model.gaussians, ck.state.model.field, t);
  write_image_raw(path, render_image(deformed, geom, angle));
  out << "wrote " << geom.nu << "x" << geom.nv << " image to " << path << "\n";
  return 0;
}

int cmd_evaluate(CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(app.get_option("--ckpt")->as<std::string>());
  const ProjectionSet data = read_dataset(app.get_option("--data")->as<std::string>());
  const SimulationConfig sim = parse_simulation_config(
      read_text_file(app.get_option("--phantom-config")->as<std::string>()));
  sim.validate();
  const VolumeSpec spec = grid_spec(app.get_option("--res")->as<int>(), data.geometry.bounds);
  const auto times = evaluation_times(data.duration, sim.period);
  const QualityReport q = evaluate_against_phantom(ck.state.model, sim.phantom(), times, spec);
  const double t_hat = ck.state.model.period.seconds();

  nlohmann::json report;
  report["psnr_db"] = q.psnr_db;
  report["ssim"] = q.ssim;
  report["period_error_ms"] = period_error_ms(t_hat, sim.period);
  report["t_hat"] = t_hat;
  report["t_true"] = sim.period;
  report["times"] = times;
  const std::string path = app.get_option("--out")->as<std::string>();
  write_text_file(path, report.dump(2) + "\n");
  out << report.dump() << "\n";
  return 0;
}

int cmd_curve(CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(app.get_option("--ckpt")->as<std::string>());
  const auto times = time_grid(app.get_option("--t0")->as<double>(),
                               app.get_option("--t1")->as<double>(),
                               app.get_option("--dt")->as<double>());
  const VolumeSpec spec = grid_spec(app.get_option("--res")->as<int>(),
                                    ck.state.model.field.bounds.space);
  const double threshold = app.get_option("--threshold")->as<double>();
  const auto curve = volume_curve(ck.state.model, times, spec, threshold);
  const std::string path = app.get_option("--out")->as<std::string>();
  write_text_file(path, curve_csv(curve));
  out << "wrote " << curve.size() << " samples to " << path;
  if (curve.size() >= 4) out << ", dominant period " << dominant_period(curve) << " s";
  out << "\n";
  return 0;
}

}  // namespace

std::string usage() {
  return "usage: dgct <command> [options]\n"
         "commands:\n"
         "  simulate     --config C --out DIR\n"
         "  train        --data DIR --out CKPT [--config C] [--preset desk|paper]\n"
         "               [--metrics CSV] [--log-every N]\n"
         "  reconstruct  --ckpt CKPT --time T --res N --out VOL\n"
         "  render       --ckpt CKPT --time T --angle A --out IMG [--data DIR]\n"
         "  evaluate     --ckpt CKPT --data DIR --phantom-config C --out report.json [--res N]\n"
         "  curve        --ckpt CKPT --t0 A --t1 B --dt S --out curve.csv\n"
         "               [--res N] [--threshold X]\n"
         "every command accepts --threads N and --deterministic\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || std::find(kCommands.begin(), kCommands.end(), args[0]) == kCommands.end()) {
    if (!args.empty() && (args[0] == "--help" || args[0] == "-h" || args[0] == "help")) {
      out << usage();
      return 0;
    }
    if (!args.empty()) err << "dgct: unknown command '" << args[0] << "'\n";
    err << usage();
    return 2;
  }
  const std::string& command = args[0];
  CLI::App app("dgct " + command, "dgct " + command);
  Common common;
  add_common(app, common);

  std::string s;
  double d = 0.0;
  int n = 0;
  if (command == "simulate") {
    app.add_option("--config", s, "Simulation config file")->required();
    app.add_option("--out", s, "Dataset directory")->required();
  } else if (command == "train") {
    app.add_option("--data", s, "Dataset directory")->required();
    app.add_option("--config", s, "Training config overrides");
    app.add_option("--out", s, "Checkpoint path")->required();
    app.add_option("--preset", s, "desk or paper")->default_val("desk");
    app.add_option("--metrics", s, "Metrics CSV path (default: next to the checkpoint)");
    app.add_option("--log-every", n, "Progress interval in iterations (0 = silent)")
        ->default_val(500);
  } else if (command == "reconstruct") {
    app.add_option("--ckpt", s, "Checkpoint")->required();
    app.add_option("--time", d, "Time in seconds")->required();
    app.add_option("--res", n, "Voxels per side")->default_val(64);
    app.add_option("--out", s, "Volume file")->required();
  } else if (command == "render") {
    app.add_option("--ckpt", s, "Checkpoint")->required();
    app.add_option("--time", d, "Time in seconds")->required();
    app.add_option("--angle", d, "Source angle in radians")->required();
    app.add_option("--data", s, "Dataset directory supplying the geometry");
    app.add_option("--out", s, "Image file")->required();
  } else if (command == "evaluate") {
    app.add_option("--ckpt", s, "Checkpoint")->required();
    app.add_option("--data", s, "Dataset directory")->required();
    app.add_option("--phantom-config", s, "Simulation config of the phantom")->required();
    app.add_option("--res", n, "Evaluation grid voxels per side")->default_val(64);
    app.add_option("--out", s, "JSON report")->required();
  } else {
    app.add_option("--ckpt", s, "Checkpoint")->required();
    app.add_option("--t0", d, "First time")->required();
    app.add_option("--t1", d, "Last time")->required();
    app.add_option("--dt", d, "Time step")->required();
    app.add_option("--res", n, "Voxels per side")->default_val(64);
    app.add_option("--threshold", d, "Low-density threshold")->default_val(0.15);
    app.add_option("--out", s, "CSV output")->required();
  }

  std::vector<std::string> argv_store(args.begin(), args.end());
  argv_store[0] = "dgct " + command;
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dgct " << command << ": " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    apply(common);
    if (command == "simulate") return cmd_simulate(app, out);
    if (command == "train") return cmd_train(app, out);
    if (command == "reconstruct") return cmd_reconstruct(app, out);
    if (command == "render") return cmd_render(app, out);
    if (command == "evaluate") return cmd_evaluate(app, out);
    return cmd_curve(app, out);
  } catch (const std::exception& e) {
    err << "dgct " << command << ": " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace dgct

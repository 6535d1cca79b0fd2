// Command-line front end: pfsim <me|traj|ensemble|kerr-histogram|wigner> [options]

#include <cmath>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pf/errors.hpp"
#include "pf/harness.hpp"

namespace {

struct CommonArgs {
  std::optional<std::string> config;
  std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "flat key = value configuration file");
  for (const auto& key : pf::config_keys()) {
    sub->add_option_function<std::string>(
        "--" + key, [&args, key](const std::string& v) { args.flags[key] = v; },
        "overrides `" + key + "` from the config file");
  }
}

pf::RunConfig resolve(const CommonArgs& args, pf::RunConfig base) {
  std::vector<std::pair<std::string, std::string>> overrides(args.flags.begin(), args.flags.end());
  return pf::parse_config(args.config, overrides, std::move(base));
}

void report(const pf::EnsembleResult& result, const pf::RunConfig& cfg) {
  const auto paths = pf::write_outputs(result, cfg);
  for (const auto& p : paths) std::cerr << "wrote " << p << "\n";
  std::ifstream in(std::filesystem::path(cfg.output_dir) / "summary.json");
  std::cout << in.rdbuf();
}

int run_wigner(const pf::RunConfig& cfg, double time, double lo, double hi, double step,
               const std::string& state, const std::string& mode) {
  using namespace pf;
  const double dt = cfg.resolved_dt();
  const auto k = static_cast<std::int64_t>(std::llround(time / dt));
  if (k < 0 || std::abs(k * dt - time) > 1e-9 * std::max(1.0, time)) {
    throw ValidationError("time must be a non-negative multiple of dt");
  }
  std::optional<SingleModeSetup> single;
  std::optional<KerrSetup> kerr;
  const SystemModel* model;
  const Pulse* pulse;
  Hierarchy h;
  if (cfg.is_kerr()) {
    kerr.emplace(build_kerr(cfg.kerr()));
    model = &kerr->model;
    pulse = &kerr->pulse;
    h = kerr->h0;
  } else {
    single.emplace(build_single_mode(cfg.single_mode()));
    model = &single->model;
    pulse = &single->pulse;
    h = single->h0;
  }
  if (state == "no_count") {
    NoDetectionBranch branch(*model, *pulse, h, std::max(time, dt), dt, TrajectoryOptions{}, 16);
    h = branch.state_at(k);
  } else {
    for (std::int64_t i = 0; i < k; ++i) h = step_me(*model, *pulse, h, dt);
  }
  const int slot = mode == "b" ? 1 : 0;
  if (slot == 1 && !cfg.is_kerr()) throw ValidationError("mode b exists only in the kerr experiment");
  DensityOp rho = model->layout().mode_count() > 1 ? reduce_to_mode(h.r11, slot, model->layout())
                                                   : DensityOp(h.r11);
  const auto xs = linspace_step(lo, hi, step);
  const Eigen::MatrixXd w = wigner(rho, xs, xs);
  std::filesystem::create_directories(cfg.output_dir);
  const std::string path = (std::filesystem::path(cfg.output_dir) / "wigner.csv").string();
  write_wigner_csv(path, xs, xs, w);
  const std::vector<double> origin = {0.0};
  const double w00 = wigner(rho, origin, origin)(0, 0);
  double off = 0.0;
  for (int r = 0; r < rho.rows(); ++r) {
    for (int c = 0; c < rho.cols(); ++c) {
      if (r != c) off += std::abs(rho(r, c));
    }
  }
  nlohmann::json j;
  j["time"] = time;
  j["state"] = state;
  j["mode"] = mode;
  j["mean_photon_number"] = expectation(rho, number_op(static_cast<int>(rho.rows()))).real();
  j["off_diagonal_mass"] = off;
  j["w00"] = w00;
  std::cerr << "wrote " << path << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-photon driven cavity simulator: master equations, conditional filters, "
               "ensembles and the Kerr cross-phase experiment."};
  app.require_subcommand(1);

  CommonArgs me_args, traj_args, ens_args, hist_args, wig_args;
  auto* me = app.add_subcommand("me", "integrate the unconditional master equation");
  add_config_flags(me, me_args);
  auto* traj = app.add_subcommand("traj", "one conditional trajectory");
  add_config_flags(traj, traj_args);
  auto* ens = app.add_subcommand("ensemble", "many trajectories with mean and standard error");
  add_config_flags(ens, ens_args);
  auto* hist = app.add_subcommand("kerr-histogram", "histogram of maximal mode-b shifts");
  add_config_flags(hist, hist_args);
  auto* wig = app.add_subcommand("wigner", "Wigner function of the cavity state at one time");
  add_config_flags(wig, wig_args);
  double w_time = 2.8, w_lo = -4.0, w_hi = 4.0, w_step = 0.05;
  std::string w_state = "no_count", w_mode = "a";
  wig->add_option("--time", w_time, "time of the snapshot")->capture_default_str();
  wig->add_option("--grid-min", w_lo, "lower grid edge in x and p")->capture_default_str();
  wig->add_option("--grid-max", w_hi, "upper grid edge in x and p")->capture_default_str();
  wig->add_option("--grid-step", w_step, "grid spacing")->capture_default_str();
  wig->add_option("--state", w_state, "no_count (conditioned on no detection) or me")
      ->check(CLI::IsMember({"no_count", "me"}))
      ->capture_default_str();
  wig->add_option("--mode", w_mode, "which mode to reduce to (a or b)")
      ->check(CLI::IsMember({"a", "b"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*me) {
      pf::RunConfig base;
      base.scheme = pf::SchemeChoice::Unconditional;
      pf::RunConfig cfg = resolve(me_args, base);
      if (!cfg.is_me()) throw pf::ValidationError("me: scheme must be unconditional");
      report(pf::run_ensemble(cfg), cfg);
    } else if (*traj) {
      pf::RunConfig cfg = resolve(traj_args, {});
      if (cfg.n_traj != 1) throw pf::ValidationError("traj: n_traj must be 1 (use ensemble)");
      report(pf::run_ensemble(cfg), cfg);
    } else if (*ens) {
      pf::RunConfig cfg = resolve(ens_args, {});
      report(pf::run_ensemble(cfg), cfg);
    } else if (*hist) {
      pf::RunConfig base;
      base.experiment = pf::Experiment::Kerr;
      base.scheme = pf::SchemeChoice::Photodetect;
      base.n_traj = 5000;
      base.save_trajectories = 0;
      pf::RunConfig cfg = resolve(hist_args, base);
      if (!cfg.is_kerr() || cfg.scheme != pf::SchemeChoice::Photodetect) {
        throw pf::ValidationError("kerr-histogram: needs experiment = kerr, scheme = photodetect");
      }
      if (cfg.n_traj < 100) throw pf::ValidationError("kerr-histogram: n_traj must be >= 100");
      report(pf::run_ensemble(cfg), cfg);
    } else if (*wig) {
      pf::RunConfig cfg = resolve(wig_args, {});
      return run_wigner(cfg, w_time, w_lo, w_hi, w_step, w_state, w_mode);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pf::exit_code_for(e);
  }
  return 0;
}

#pragma once

// Command-line front end. Exit codes: 0 success, 1 stage failure,
// 2 bad arguments or malformed configuration.

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppm/io.hpp"
#include "ppm/pipeline.hpp"
#include "ppm/service.hpp"

namespace ppm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitStageFailure = 1;
inline constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  std::vector<std::string> frames;
  std::size_t samples = 0;
  std::string correspondences;
  std::string solver;
  int port = 8080;
  std::string host = "0.0.0.0";
  std::string data_dir = "ppm-data";
  std::string ui_dir;
};

namespace detail {

inline void add_common(CLI::App* sub, Options& o, bool config_required) {
  auto* c = sub->add_option("--config", o.config, "Pipeline configuration JSON");
  if (config_required) c->required();
  sub->add_option("--seed", o.seed, "PRNG seed (overrides the configuration)");
  sub->add_option("--out", o.out, "Output directory (overrides the configuration)");
}

inline PipelineConfig load_config(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline int cmd_baseplane(const Options& o, std::ostream& out) {
  PipelineConfig cfg = load_config(o);
  if (!o.frames.empty()) {
    cfg.inputs.depth_frames.assign(o.frames.begin(), o.frames.end());
  }
  if (o.samples > 0) cfg.plane_samples = o.samples;
  if (cfg.inputs.depth_frames.empty()) throw io::FormatError("missing field 'inputs.depth_frames'");
  if (o.config.empty() && o.out.empty()) cfg.output_dir = ".";
  const auto cal = run_baseplane_stage(cfg);
  out << "plane a=" << fmt(cal.fit.plane.a) << " b=" << fmt(cal.fit.plane.b) << " c=" << fmt(cal.fit.plane.c)
      << " residual=" << fmt(cal.fit.residual) << "\n";
  out << "wrote " << (cfg.output_dir / "plane.json").string() << "\n";
  return kExitOk;
}

inline int cmd_projector(const Options& o, std::ostream& out, std::ostream& err) {
  PipelineConfig cfg = load_config(o);
  if (!o.correspondences.empty()) cfg.inputs.correspondences = o.correspondences;
  if (!o.solver.empty()) {
    const auto s = parse_solver(o.solver);
    if (!s) throw io::FormatError("--solver must be procrustes or nelder-mead");
    cfg.solver = *s;
  }
  if (cfg.inputs.correspondences.empty()) throw io::FormatError("missing field 'inputs.correspondences'");
  if (o.config.empty() && o.out.empty()) cfg.output_dir = ".";
  const auto cal = run_projector_stage(cfg);
  out << "rmse " << fmt(cal.rmse) << " mm\n";
  out << "wrote " << (cfg.output_dir / "transform.json").string() << "\n";
  if (cal.not_rigid) err << "warning: residuals exceed 10% of the point-cloud extent; data is far from rigid\n";
  return kExitOk;
}

inline void print_registration(const RegistrationResult& r, std::ostream& out) {
  out << "mi " << fmt(r.mi_initial) << " -> " << fmt(r.mi_final) << "\n";
  out << "dice " << fmt(r.dice_initial) << " -> " << fmt(r.dice_final) << "\n";
}

inline void print_report(const LabelReport& report, std::ostream& out) {
  for (const auto& p : report.pois) {
    out << "poi " << p.poi_id;
    for (const auto& [name, v] : p.percentages) out << " " << name << "=" << fmt(v);
    for (const auto& f : p.flags) out << " [" << f << "]";
    out << "\n";
  }
}

inline int cmd_register(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(o);
  const auto s = run_registration_stage(cfg);
  print_registration(s.result, out);
  out << "wrote " << (cfg.output_dir / "registration.json").string() << "\n";
  return kExitOk;
}

inline int cmd_labels(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(o);
  const auto s = run_label_stage(cfg);
  print_report(s.report, out);
  out << "wrote " << (cfg.output_dir / "labels.json").string() << "\n";
  return kExitOk;
}

inline int cmd_run(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(o);
  const auto r = run_pipeline(cfg);
  if (r.baseplane) out << "plane residual " << fmt(r.baseplane->fit.residual) << "\n";
  if (r.projector) out << "rmse " << fmt(r.projector->rmse) << " mm\n";
  print_registration(r.registration, out);
  print_report(r.report, out);
  out << "wrote " << (cfg.output_dir / "labels.json").string() << "\n";
  return kExitOk;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  io::json scenario;
  if (!o.config.empty()) scenario = io::read_json(o.config);
  const ScenarioConfig s = scenario_from_json(scenario, o.seed.value_or(0));
  const auto files = run_stage("simulate", [&] { return write_scenario(s, o.out); });
  out << "wrote " << files.config.string() << "\n";
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Point projection mapping: calibration, registration and label extraction"};
  app.name("ppm");
  app.require_subcommand(1);
  Options o;

  auto* baseplane = app.add_subcommand("calibrate-baseplane", "Fit the base plane to averaged depth frames");
  detail::add_common(baseplane, o, false);
  baseplane->add_option("frames", o.frames, "Depth frame headers (JSON)");
  baseplane->add_option("--samples", o.samples, "Number of sampled pixels for the fit");

  auto* projector = app.add_subcommand("calibrate-projector", "Estimate the camera-to-projector rigid transform");
  detail::add_common(projector, o, false);
  projector->add_option("--correspondences", o.correspondences, "Correspondence JSON");
  projector->add_option("--solver", o.solver, "procrustes | nelder-mead");

  auto* reg = app.add_subcommand("register", "Estimate the displacement field between specimen and histology");
  detail::add_common(reg, o, true);
  auto* labels = app.add_subcommand("extract-labels", "Per-POI tissue percentages from a registered pair");
  detail::add_common(labels, o, true);
  auto* runall = app.add_subcommand("run", "Full pipeline");
  detail::add_common(runall, o, true);

  auto* sim = app.add_subcommand("simulate", "Write a synthetic scenario directory");
  sim->add_option("--seed", o.seed, "PRNG seed");
  sim->add_option("--out", o.out, "Scenario directory")->required();
  sim->add_option("--config", o.config, "Scenario overrides (JSON)");

  auto* srv = app.add_subcommand("serve", "HTTP session service");
  srv->add_option("--port", o.port, "Listen port");
  srv->add_option("--host", o.host, "Listen address");
  srv->add_option("--data-dir", o.data_dir, "Session storage directory");
  srv->add_option("--ui-dir", o.ui_dir, "Static files served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*baseplane) return detail::cmd_baseplane(o, out);
    if (*projector) return detail::cmd_projector(o, out, err);
    if (*reg) return detail::cmd_register(o, out);
    if (*labels) return detail::cmd_labels(o, out);
    if (*runall) return detail::cmd_run(o, out);
    if (*sim) return detail::cmd_simulate(o, out);
    if (*srv) {
      out << "listening on " << o.host << ":" << o.port << std::endl;
      return service::serve(o.port, o.data_dir, o.ui_dir, o.host) ? kExitOk : kExitStageFailure;
    }
  } catch (const PipelineError& e) {
    err << "error: " << e.what() << "\n";
    return kExitStageFailure;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitUsage;
}

}  // namespace ppm::cli

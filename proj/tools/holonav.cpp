// holonav: command-line front end for the navigation pipeline.
//
// Exit status: 0 success, 2 invalid input (bad flags, files, or data),
// 1 anything unexpected.

#include <CLI11.hpp>
#include <boost/asio.hpp>

#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include "holonav/calibration.hpp"
#include "holonav/config.hpp"
#include "holonav/errors.hpp"
#include "holonav/fiducials.hpp"
#include "holonav/registration.hpp"
#include "holonav/scene.hpp"
#include "holonav/serialization.hpp"
#include "holonav/service.hpp"
#include "holonav/session_log.hpp"
#include "holonav/tracking.hpp"
#include "holonav/volume.hpp"

using namespace holonav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInvalid = 2;

/// Field of view kept when --spacing resamples the default grid.
constexpr double kDefaultFieldOfView = 200.0;

PhantomSpec phantom_spec_from_json(const Json& j, VolumeGeometry& geometry) {
  if (!j.is_object()) throw FormatError("spec", "expected a JSON object");
  PhantomSpec spec;
  if (j.contains("tumor")) {
    const auto& t = j.at("tumor");
    if (t.contains("center")) spec.tumor_center = vec3_from_json(t.at("center"), "tumor.center");
    if (t.contains("semi_axes")) spec.tumor_semi_axes = vec3_from_json(t.at("semi_axes"), "tumor.semi_axes");
  }
  if (j.contains("fiducial_radius")) spec.fiducial_radius = j.at("fiducial_radius").get<double>();
  if (!j.contains("fiducials") || !j.at("fiducials").is_array()) {
    throw FormatError("fiducials", "expected an array of [x, y, z] centres");
  }
  std::size_t i = 0;
  for (const auto& p : j.at("fiducials")) {
    spec.fiducial_centers.push_back(vec3_from_json(p, "fiducials[" + std::to_string(i++) + "]"));
  }
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    if (g.contains("dims")) {
      const auto& d = g.at("dims");
      if (!d.is_array() || d.size() != 3) throw FormatError("geometry.dims", "expected [nx, ny, nz]");
      for (std::size_t k = 0; k < 3; ++k) geometry.dims[k] = d[k].get<std::uint32_t>();
    }
    if (g.contains("spacing")) {
      const auto& s = g.at("spacing");
      geometry.spacing = s.is_number() ? Vec3::Constant(s.get<double>())
                                       : vec3_from_json(s, "geometry.spacing");
    }
    if (g.contains("origin")) geometry.origin = vec3_from_json(g.at("origin"), "geometry.origin");
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError("spec", e.what());
  }
  return spec;
}

int run_phantom(const std::string& spec_arg, const std::string& out, std::optional<double> spacing) {
  VolumeGeometry geometry;
  PhantomSpec spec;
  if (spec_arg == "default") {
    spec = default_phantom_spec();
  } else {
    spec = phantom_spec_from_json(read_json_file(spec_arg), geometry);
  }
  if (spacing) {
    if (!(*spacing > 0.0)) throw InvalidArgument("--spacing must be positive");
    const auto n = static_cast<std::uint32_t>(std::ceil(kDefaultFieldOfView / *spacing));
    geometry.dims = {n, n, n};
    geometry.spacing = Vec3::Constant(*spacing);
    geometry.origin = Vec3::Constant(-0.5 * (n - 1) * *spacing);
  }
  const VoxelVolume volume = synthesize_phantom(spec, geometry);
  write_volume(out, volume);
  std::cout << Json{{"out", out},
                    {"dims", volume.dims()},
                    {"spacing", vec3_to_json(volume.spacing())},
                    {"fiducials", spec.fiducial_centers.size()}}
                   .dump()
            << "\n";
  return kExitOk;
}

int run_detect(const std::string& path, int threshold) {
  const VoxelVolume volume = read_volume(path);
  const auto found = detect_fiducials(volume, static_cast<std::int16_t>(threshold));
  std::vector<Point3> points;
  for (const auto& f : found) points.push_back(f.centroid);
  std::cout << fiducials_to_json(FiducialSet::from_points("patient", points)).dump(2) << "\n";
  return kExitOk;
}

Correspondences pair_by_label(const FiducialSet& source, const FiducialSet& target) {
  Correspondences c = Correspondences::by_index(source, target);
  if (source.labels.size() != target.labels.size()) {
    throw InvalidArgument("fiducial counts differ; pass --match for unlabelled sets");
  }
  for (std::size_t i = 0; i < source.labels.size(); ++i) {
    const auto it = std::find(target.labels.begin(), target.labels.end(), source.labels[i]);
    if (it == target.labels.end()) {
      throw InvalidArgument("label '" + source.labels[i] + "' missing from target; pass --match");
    }
    c.pairing[i] = static_cast<std::size_t>(it - target.labels.begin());
  }
  return c;
}

int run_register(const std::string& source_path, const std::string& target_path, bool match) {
  const FiducialSet source = fiducials_from_json(read_json_file(source_path), "source");
  const FiducialSet target = fiducials_from_json(read_json_file(target_path), "target");
  const Correspondences corr = match ? match_correspondences(source, target) : pair_by_label(source, target);
  const RegistrationResult r = fit_rigid(corr);
  std::cout << Json{{"world_from_patient", transform_to_json(r.world_from_patient)},
                    {"fre_rms", r.fre_rms},
                    {"residuals", r.residuals},
                    {"pairing", corr.pairing}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int run_calibrate(const std::string& path) {
  const Json j = read_json_file(path);
  const Json& list = j.is_object() && j.contains("poses") ? j.at("poses") : j;
  if (!list.is_array()) throw FormatError("poses", "expected an array of transforms");
  std::vector<RigidTransform> poses;
  for (std::size_t i = 0; i < list.size(); ++i) {
    poses.push_back(transform_from_json(list[i], "poses[" + std::to_string(i) + "]"));
  }
  const PivotSolution s = pivot_calibrate(poses);
  const CalibrationVerdict v = calibration_quality(s);
  std::cout << Json{{"tip_offset", vec3_to_json(s.tip_offset)},
                    {"pivot_world", vec3_to_json(s.pivot_world)},
                    {"residual_rms", s.residual_rms},
                    {"condition", s.condition},
                    {"accepted", v.accepted},
                    {"reasons", v.reasons}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int run_simulate(const std::string& path, const std::string& out) {
  const Scenario scenario = scenario_from_json(read_json_file(path));
  const auto samples = run_scenario(scenario);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw FormatError("out", "cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file;
  std::size_t dropouts = 0;
  for (const auto& s : samples) {
    os << sample_to_json(s).dump() << "\n";
    dropouts += s.dropout();
  }
  std::cerr << samples.size() << " samples, " << dropouts << " dropouts\n";
  return kExitOk;
}

int run_replay(const std::string& path) {
  const Session session = Session::replay(read_log(path));
  std::cout << snapshot_to_json(session.snapshot()).dump(2) << "\n";
  return kExitOk;
}

struct ServeFlags {
  std::string config;
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<int> ws_port;
  std::optional<double> tick_hz;
  std::optional<std::string> log;
  std::optional<std::uint64_t> seed;
};

std::uint16_t checked_port(int p, const std::string& flag) {
  if (p < 0 || p > 65535) throw InvalidArgument(flag + " must be in [0, 65535]");
  return static_cast<std::uint16_t>(p);
}

int run_serve(const ServeFlags& f) {
  ServiceConfig c = load_service_config(f.config.empty() ? std::nullopt : std::optional(f.config));
  if (f.host) c.host = *f.host;
  if (f.port) c.port = checked_port(*f.port, "--port");
  if (f.ws_port) c.ws_port = checked_port(*f.ws_port, "--ws-port");
  if (f.tick_hz) c.tick_hz = *f.tick_hz;
  if (f.log) c.log_path = *f.log;
  if (f.seed) c.seed = *f.seed;
  c.validate();

  NavigationService service(c);
  service.start();
  std::cout << "serving tcp://" << c.host << ":" << service.tcp_port() << " ws://" << c.host << ":"
            << service.ws_port() << " log=" << (c.log_path.empty() ? "(memory)" : c.log_path)
            << std::endl;

  boost::asio::io_context io;
  boost::asio::signal_set signals(io, SIGINT, SIGTERM);
  signals.async_wait([](const boost::system::error_code&, int) {});
  io.run();
  service.stop();
  std::cout << "stopped at seq " << service.snapshot().last_seq << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holographic navigation pipeline: phantom CT, registration, tracking, session service"};
  app.require_subcommand(1);

  std::string spec = "default", out;
  std::optional<double> spacing;
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic CT volume (.hnav)");
  phantom->add_option("--spec", spec, "\"default\" or a phantom JSON file")->capture_default_str();
  phantom->add_option("--out", out, "Output volume file")->required();
  phantom->add_option("--spacing", spacing, "Isotropic voxel spacing (mm); keeps a 200 mm field of view");

  std::string volume_path;
  int threshold = kDefaultFiducialThreshold;
  auto* detect = app.add_subcommand("detect", "Print fiducial centroids of a volume as JSON");
  detect->add_option("volume", volume_path, "Volume file")->required()->check(CLI::ExistingFile);
  detect->add_option("--threshold", threshold, "Intensity threshold")->capture_default_str();

  std::string source_path, target_path;
  bool match = false;
  auto* reg = app.add_subcommand("register", "Rigid fit of source fiducials onto target fiducials");
  reg->add_option("source", source_path, "Fiducials JSON (patient frame)")->required()->check(CLI::ExistingFile);
  reg->add_option("target", target_path, "Fiducials JSON (world frame)")->required()->check(CLI::ExistingFile);
  reg->add_flag("--match", match, "Solve the pairing instead of matching labels");

  std::string poses_path;
  auto* calibrate = app.add_subcommand("calibrate", "Pivot calibration from a pose file");
  calibrate->add_option("poses", poses_path, "JSON array (or {\"poses\": [...]}) of transforms")
      ->required()
      ->check(CLI::ExistingFile);

  std::string scenario_path, samples_out;
  auto* simulate = app.add_subcommand("simulate", "Run a tracking scenario, emit samples as JSON lines");
  simulate->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", samples_out, "Write samples here instead of stdout");

  std::string log_path;
  auto* replay = app.add_subcommand("replay", "Rebuild session state from a log and print it");
  replay->add_option("log", log_path, "Session log (JSON lines)")->required()->check(CLI::ExistingFile);

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the wire service until SIGINT/SIGTERM");
  serve->add_option("--config", serve_flags.config, "Service config JSON")->check(CLI::ExistingFile);
  serve->add_option("--host", serve_flags.host, "Bind address");
  serve->add_option("--port", serve_flags.port, "JSON-lines TCP port (0 = any)");
  serve->add_option("--ws-port", serve_flags.ws_port, "WebSocket port (0 = any)");
  serve->add_option("--tick-hz", serve_flags.tick_hz, "Tracking sample rate");
  serve->add_option("--log", serve_flags.log, "Session log path (empty = memory only)");
  serve->add_option("--seed", serve_flags.seed, "Simulator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*phantom) return run_phantom(spec, out, spacing);
    if (*detect) return run_detect(volume_path, threshold);
    if (*reg) return run_register(source_path, target_path, match);
    if (*calibrate) return run_calibrate(poses_path);
    if (*simulate) return run_simulate(scenario_path, samples_out);
    if (*replay) return run_replay(log_path);
    if (*serve) return run_serve(serve_flags);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DegenerateConfiguration& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const UnobservableMotion& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

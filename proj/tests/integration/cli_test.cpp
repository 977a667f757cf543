#include <doctest.h>

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "holonav/config.hpp"
#include "holonav/registration.hpp"
#include "holonav/scene.hpp"
#include "holonav/session_log.hpp"
#include "wire_client.hpp"

extern char** environ;

using namespace holonav;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  const auto d = fs::temp_directory_path() / "holonav_cli_test";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  const auto err_path = work_dir() / "stderr.txt";
  const std::string command = std::string(HOLONAV_CLI) + " " + args + " 2>" + err_path.string();
  RunResult r;
  FILE* pipe = ::popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("phantom then detect finds the six default fiducials") {
  const auto vol = path("p.hnav");
  const auto made = run("phantom --spec default --out " + vol);
  REQUIRE(made.exit_code == 0);
  const auto found = run("detect " + vol);
  REQUIRE(found.exit_code == 0);
  const auto fids = fiducials_from_json(Json::parse(found.out), "detect");
  const auto truth = default_phantom_spec().fiducial_centers;
  REQUIRE(fids.points.size() == truth.size());
  const double tol = 0.5 * VolumeGeometry{}.spacing.maxCoeff();
  for (const auto& t : truth) {
    double best = 1e9;
    for (const auto& p : fids.points) best = std::min(best, (p - t).norm());
    CHECK(best < tol);
  }
}

TEST_CASE("phantom with a custom spacing and spec file") {
  const auto spec = path("spec.json");
  write(spec, R"({"tumor": {"center": [0, 0, 0], "semi_axes": [20, 15, 15]},
                 "fiducial_radius": 3,
                 "fiducials": [[40, 0, 0], [0, 40, 0], [0, 0, 40], [-40, -40, 0]]})");
  const auto vol = path("s.hnav");
  REQUIRE(run("phantom --spec " + spec + " --out " + vol + " --spacing 1.7").exit_code == 0);
  const auto found = run("detect " + vol);
  REQUIRE(found.exit_code == 0);
  CHECK(Json::parse(found.out).at("points").size() == 4);
}

TEST_CASE("register same.json same.json is the identity with zero FRE") {
  const auto f = path("same.json");
  write(f, fiducials_to_json(FiducialSet::from_points(
               "patient", {Point3(0, 0, 0), Point3(40, 0, 0), Point3(0, 30, 0), Point3(5, 5, 25)}))
               .dump());
  const auto r = run("register " + f + " " + f);
  REQUIRE(r.exit_code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j.at("fre_rms").get<double>() < 1e-12);
  const auto t = transform_from_json(j.at("world_from_patient"), "t");
  CHECK(rotation_angle(t) < 1e-12);
  CHECK(t.translation().norm() < 1e-12);
}

TEST_CASE("register --match recovers a shuffled, moved copy") {
  const std::vector<Point3> src{Point3(0, 0, 0), Point3(40, 0, 0), Point3(0, 30, 0), Point3(5, 5, 25),
                                Point3(-20, 12, 7)};
  const auto moved = RigidTransform::from_axis_angle(Vec3(1, 1, 0), 0.5, Vec3(100, -20, 30));
  std::vector<Point3> dst;
  for (std::size_t i : {3, 0, 4, 1, 2}) dst.push_back(moved.apply(src[i]));
  write(path("src.json"), fiducials_to_json(FiducialSet::from_points("patient", src)).dump());
  write(path("dst.json"), fiducials_to_json(FiducialSet::from_points("world", dst)).dump());
  const auto r = run("register --match " + path("src.json") + " " + path("dst.json"));
  REQUIRE(r.exit_code == 0);
  const auto t = transform_from_json(Json::parse(r.out).at("world_from_patient"), "t");
  CHECK(rotation_distance(t, moved) < 1e-9);
  CHECK(translation_distance(t, moved) < 1e-9);
  // Labels F1..F5 differ in meaning between the files, but pairing by label still runs.
  CHECK(run("register " + path("src.json") + " " + path("dst.json")).exit_code == 0);
}

TEST_CASE("calibrate: good poses succeed, single-axis motion is a validation error") {
  std::mt19937_64 rng(41);
  Json good = Json::array();
  for (const auto& p : generate_pivot_poses(rng, 60, Vec3(0, 0, -150), Point3(10, 20, 30), 0.6, 0.0)) {
    good.push_back(transform_to_json(p));
  }
  write(path("poses.json"), Json{{"poses", good}}.dump());
  const auto ok = run("calibrate " + path("poses.json"));
  REQUIRE(ok.exit_code == 0);
  const Json j = Json::parse(ok.out);
  CHECK((vec3_from_json(j.at("tip_offset"), "tip") - Vec3(0, 0, -150)).norm() < 1e-6);
  CHECK(j.at("accepted") == true);

  Json spin = Json::array();
  for (int i = 0; i < 20; ++i) {
    const auto r = RigidTransform::from_axis_angle(Vec3::UnitZ(), 0.3 * i, Vec3::Zero());
    spin.push_back(transform_to_json(RigidTransform::from_translation(Point3(10, 20, 30) - r.rotate(Vec3(0, 0, -150))) * r));
  }
  write(path("spin.json"), spin.dump());
  const auto bad = run("calibrate " + path("spin.json"));
  CHECK(bad.exit_code == 2);
  CHECK_FALSE(bad.err.empty());
}

TEST_CASE("simulate writes one JSON line per sample") {
  write(path("scenario.json"), R"({"room": "default", "rate_hz": 10, "seed": 3,
    "trackers": [{"tracker": "pointer", "waypoints": [{"t": 0, "position": [3000, 3000, 1000]},
                                                      {"t": 2, "position": [3500, 3000, 1000]}]}]})");
  const auto r = run("simulate " + path("scenario.json"));
  REQUIRE(r.exit_code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    CHECK(Json::parse(line).at("tracker") == "pointer");
    ++n;
  }
  CHECK(n == 21);
  CHECK(run("simulate " + path("scenario.json")).out == r.out);
}

TEST_CASE("replay prints the final state of a scripted log") {
  const auto log = path("session.jsonl");
  fs::remove(log);
  {
    JsonlFileSink sink(log);
    Session s(&sink);
    s.handle_command(cmd::LoadVolume{"phantom:default"});
    s.handle_command(cmd::DetectFiducials{FiducialSet::from_points(
        "patient", {Point3(0, 0, 0), Point3(40, 0, 0), Point3(0, 30, 0)})});
    s.handle_command(cmd::Calibrate{Vec3(0, 0, -150), 0.1});
    s.handle_command(cmd::Register{RigidTransform{}, 0.2});
    s.handle_command(cmd::StartNavigation{});
  }
  const auto r = run("replay " + log);
  REQUIRE(r.exit_code == 0);
  CHECK(Json::parse(r.out).at("state") == "Navigating");

  std::ofstream(log, std::ios::app) << "{\"v\":1,\"seq\":9}\n";
  const auto gap = run("replay " + log);
  CHECK(gap.exit_code == 2);
}

TEST_CASE("bad input exits 2 with a message") {
  const auto unknown_flag = run("detect --frobnicate x");
  CHECK(unknown_flag.exit_code == 2);
  CHECK_FALSE(unknown_flag.err.empty());
  CHECK(run("detect /no/such/file.hnav").exit_code == 2);
  CHECK(run("teleport").exit_code == 2);
  CHECK(run("").exit_code == 2);
  write(path("junk.hnav"), "not a volume");
  const auto junk = run("detect " + path("junk.hnav"));
  CHECK(junk.exit_code == 2);
  CHECK(junk.err.find("magic") != std::string::npos);
  write(path("junk.json"), "{");
  CHECK(run("register " + path("junk.json") + " " + path("junk.json")).exit_code == 2);
  CHECK(run("phantom --out " + path("x.hnav") + " --spacing -1").exit_code == 2);
  CHECK(run("--help").exit_code == 0);
}

TEST_CASE("serve: answers a client, stops on SIGTERM, log replays to the live state") {
  const auto log = path("serve.jsonl");
  fs::remove(log);
  int out_pipe[2];
  REQUIRE(::pipe(out_pipe) == 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
  std::vector<std::string> args{HOLONAV_CLI, "serve", "--port", "0", "--ws-port", "0", "--log", log};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, HOLONAV_CLI, &actions, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&actions);
  ::close(out_pipe[1]);

  std::string banner;
  char ch;
  while (::read(out_pipe[0], &ch, 1) == 1 && ch != '\n') banner.push_back(ch);
  const auto tcp_at = banner.find("tcp://");
  REQUIRE(tcp_at != std::string::npos);
  const auto port_str = banner.substr(banner.find(':', tcp_at + 6) + 1);
  const auto port = static_cast<std::uint16_t>(std::stoi(port_str));

  Json last;
  {
    holonav::testing::TcpClient c(port);
    c.next();
    for (const char* t : {"LoadVolume", "DetectFiducials"}) {
      last = c.reply_to(c.command(Json{{"type", t}})).at("payload");
    }
  }
  CHECK(last.at("state") == "FiducialsDetected");
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ::close(out_pipe[0]);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(snapshot_to_json(reload_session(log).snapshot()) == last);
}

TEST_CASE("shipped example scenarios run") {
  const fs::path dir = fs::path(HOLONAV_SOURCE_DIR) / "scenarios";
  auto count_dropouts = [](const std::string& out) {
    std::istringstream lines(out);
    std::string line;
    int total = 0, dropped = 0;
    while (std::getline(lines, line)) {
      ++total;
      dropped += Json::parse(line).at("dropout").get<bool>();
    }
    return std::pair(total, dropped);
  };
  const auto corridor = run("simulate " + (dir / "one_station_corridor.json").string());
  REQUIRE(corridor.exit_code == 0);
  const auto [n, dropped] = count_dropouts(corridor.out);
  CHECK(n == 181);
  CHECK(dropped == 0);
  const auto cabinet = run("simulate " + (dir / "occluded_cabinet.json").string());
  REQUIRE(cabinet.exit_code == 0);
  CHECK(count_dropouts(cabinet.out).second > 0);
  CHECK(run("simulate " + (dir / "walkaround.json").string()).exit_code == 0);
  CHECK(run("phantom --spec " + (dir / "phantom_small.json").string() + " --out " + path("small.hnav")).exit_code == 0);
  CHECK(load_service_config((dir / "service.json").string(), [](const std::string&) { return std::nullopt; }).port == 7400);
}

#include "cathlab/error.hpp"
#include "cathlab/service/cli.hpp"
#include "cathlab/service/config.hpp"
#include "cathlab/service/encode.hpp"
#include "cathlab/service/scene.hpp"
#include "cathlab/service/serialize.hpp"
#include "cathlab/service/server.hpp"

#include <doctest.h>
#include <httplib.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

using namespace cathlab;
using namespace cathlab::service;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("cathlab_service_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cathlab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::uint32_t be32(const std::string& s, std::size_t at) {
  return (std::uint32_t(std::uint8_t(s[at])) << 24) | (std::uint32_t(std::uint8_t(s[at + 1])) << 16) |
         (std::uint32_t(std::uint8_t(s[at + 2])) << 8) | std::uint32_t(std::uint8_t(s[at + 3]));
}

// Minimal PNG reader for 8-bit gray, filter 0 rows; checks every CRC.
std::vector<std::uint8_t> decode_gray8(const std::string& png, int& w, int& h) {
  REQUIRE(png.size() > 8);
  REQUIRE(png.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0);
  std::string idat;
  std::size_t at = 8;
  bool end = false;
  while (at + 12 <= png.size() && !end) {
    const std::uint32_t len = be32(png, at);
    const std::string type = png.substr(at + 4, 4);
    const auto* body = reinterpret_cast<const Bytef*>(png.data() + at + 4);
    CHECK(crc32(0L, body, len + 4) == be32(png, at + 8 + len));
    if (type == "IHDR") {
      w = static_cast<int>(be32(png, at + 8));
      h = static_cast<int>(be32(png, at + 12));
      CHECK(png[at + 16] == 8);
      CHECK(png[at + 17] == 0);
    } else if (type == "IDAT") {
      idat += png.substr(at + 8, len);
    } else if (type == "IEND") {
      end = true;
    }
    at += 12 + len;
  }
  CHECK(end);
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (w + 1));
  uLongf n = raw.size();
  REQUIRE(uncompress(raw.data(), &n, reinterpret_cast<const Bytef*>(idat.data()), idat.size()) == Z_OK);
  REQUIRE(n == raw.size());
  std::vector<std::uint8_t> px;
  for (int y = 0; y < h; ++y) {
    CHECK(raw[static_cast<std::size_t>(y) * (w + 1)] == 0);
    px.insert(px.end(), raw.begin() + y * (w + 1) + 1, raw.begin() + (y + 1) * (w + 1));
  }
  return px;
}

// Straight tube along x through the isocenter, 64^3 at 1 mm.
const fs::path& tube_scene() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "tube";
    write_json({{"kind", "tube"},
                {"id", "straight"},
                {"dims", {64, 64, 64}},
                {"spacing_mm", 1.0},
                {"centerline_knots", {{-25.0, 0.0, 0.0}, {25.0, 0.0, 0.0}}},
                {"radius_mm", 2.0}},
               scratch() / "tube.json");
    const CliRun r = cli({"phantom", "gen", "--spec", (scratch() / "tube.json").string(), "--out", d.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return d;
  }();
  return dir;
}

const fs::path& beating_scene() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "beat";
    write_json({{"kind", "beating_tube"}, {"id", "beat"}, {"phases", 4}, {"dims", {64, 64, 64}}, {"spacing_mm", 1.0},
                {"beats", 6}},
               scratch() / "beat.json");
    const CliRun r = cli({"phantom", "gen", "--spec", (scratch() / "beat.json").string(), "--out", d.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return d;
  }();
  return dir;
}

// Runs a server on a free port for the lifetime of the object.
struct LiveServer {
  std::unique_ptr<Server> server;
  std::thread thread;
  int port = 0;

  explicit LiveServer(const fs::path& scene_dir) {
    const Config cfg;
    server = std::make_unique<Server>(Scene::load(scene_dir, cfg), cfg);
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->listen(); });
    for (int i = 0; i < 500 && !server->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    REQUIRE(server->running());
  }
  ~LiveServer() {
    server->stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

}  // namespace

TEST_CASE("PNG encoder: valid chunks, exact 8-bit quantization") {
  Image2D img(5, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) img.at(x, y) = -1.0 + 0.37 * x + 1.1 * y;
  const Bytes b = encode_png_gray8(img);
  int w = 0, h = 0;
  const auto px = decode_gray8(std::string(b.begin(), b.end()), w, h);
  CHECK(w == 5);
  CHECK(h == 3);
  const double lo = img.min(), hi = img.max();
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(px[y * 5 + x] == static_cast<int>(std::lround((img.at(x, y) - lo) * 255.0 / (hi - lo))));

  const Bytes flat = encode_png_gray8(Image2D(4, 4, 7.0));
  const auto fpx = decode_gray8(std::string(flat.begin(), flat.end()), w, h);
  CHECK(std::all_of(fpx.begin(), fpx.end(), [](std::uint8_t v) { return v == 0; }));
}

TEST_CASE("raw encoder matches save_image_raw bytes") {
  Image2D img(7, 2);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] = 0.1 * i - 0.3;
  save_image_raw(img, scratch() / "enc.raw");
  const Bytes b = encode_raw_f32(img);
  CHECK(std::string(b.begin(), b.end()) == slurp(scratch() / "enc.raw"));
  CHECK_THROWS_AS(parse_format("tiff"), Error);
}

TEST_CASE("config: defaults round trip, partial override, unknown keys rejected") {
  const Config d;
  CHECK(to_json(config_from_json(to_json(d))) == to_json(d));
  const nlohmann::json j = to_json(d);
  for (const char* s : {"renderer", "enhance", "stereo", "hemo", "service"}) CHECK(j.contains(s));
  CHECK(j["enhance"]["clahe_clip"] == 0.03);
  CHECK(j["enhance"]["log_sigmas"] == nlohmann::json({0.8, 1.2, 1.6}));
  CHECK(j["enhance"]["vessel_gain"] == 1.4);
  CHECK(j["enhance"]["background_gain"] == 0.9);

  const Config c = config_from_json({{"service", {{"port", 9000}}}, {"stereo", {{"matching", {{"alpha", 0.25}}}}}});
  CHECK(c.service.port == 9000);
  CHECK(c.stereo.matching.alpha == 0.25);
  CHECK(c.stereo.matching.lambda == d.stereo.matching.lambda);
  CHECK(c.renderer.n_u == 512);

  auto code = [](const nlohmann::json& bad) {
    try {
      config_from_json(bad);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Undefined;
  };
  CHECK(code({{"renderer", {{"octre", true}}}}) == ErrorCode::MalformedFile);
  CHECK(code({{"colour", 1}}) == ErrorCode::MalformedFile);
  CHECK(code({{"service", {{"port", "x"}}}}) == ErrorCode::MalformedFile);
  CHECK(code({{"enhance", {{"clahe_clip", 2.0}}}}) == ErrorCode::InvalidArgument);
}

TEST_CASE("workspace config from CATHLAB_WORKSPACE") {
  const fs::path ws = scratch() / "ws";
  fs::create_directories(ws);
  write_json({{"service", {{"stream_fps", 12.5}}}}, ws / "cathlab.json");
  ::setenv("CATHLAB_WORKSPACE", ws.c_str(), 1);
  CHECK(workspace_root() == ws);
  CHECK(workspace_config().service.stream_fps == 12.5);
  ::unsetenv("CATHLAB_WORKSPACE");
}

TEST_CASE("serialization round trips") {
  geometry::CArmPose p;
  p.alpha = deg2rad(-30.5);
  p.beta = deg2rad(20.25);
  p.table_mm = Vec3(1, -2, 3);
  p.n_u = 256;
  const auto q = pose_from_json(pose_to_json(p));
  CHECK(q.alpha == doctest::Approx(p.alpha).epsilon(1e-15));
  CHECK(q.beta == doctest::Approx(p.beta).epsilon(1e-15));
  CHECK(q.n_u == 256);
  CHECK((q.table_mm - p.table_mm).norm() == 0.0);
  CHECK(pose_to_json(p)["alpha_deg"].get<double>() == doctest::Approx(-30.5));

  stereo::Rig rig{stereo::camera_from_carm(p), stereo::camera_from_carm({})};
  rig.left.D = {0.01, -0.002, 0.0005, 0.0};
  const stereo::Rig r2 = rig_from_json(rig_to_json(rig));
  CHECK((r2.left.K - rig.left.K).norm() == 0.0);
  CHECK((r2.left.R - rig.left.R).norm() == 0.0);
  CHECK(r2.left.D == rig.left.D);
  const stereo::Rig r3 = rig_from_json({{"left", {{"carm_pose", pose_to_json(p)}}}, {"right", camera_to_json(rig.right)}});
  CHECK((r3.left.projection() - rig.left.projection()).norm() < 1e-9);

  Polyline3 ctrl;
  for (int i = 0; i < 8; ++i) ctrl.emplace_back(i, std::sin(i), 0.5 * i);
  const stereo::GuidewireCurve c(ctrl);
  const auto c2 = curve_from_json(curve_to_json(c));
  for (double u : {0.0, 0.3, 0.77, 1.0}) CHECK((c2.eval(u) - c.eval(u)).norm() == 0.0);
  const std::string csv = curve_csv(c, 5);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.rfind("u,x_mm,y_mm,z_mm\n", 0) == 0);

  std::set<std::string> keys;
  const nlohmann::json empty = metrics_report(std::nullopt, std::nullopt);
  for (auto& [k, v] : empty.items()) {
    keys.insert(k);
    CHECK(v.is_null());
  }
  CHECK(keys == std::set<std::string>{"C_L", "C_D", "C_T", "C_theta", "C_overall", "DSC", "MTE", "W1", "ME_pct"});
}

TEST_CASE("render CLI: bright band on the projected centerline") {
  const CliRun r = cli({"render", "--scene", tube_scene().string(), "--alpha", "0", "--beta", "0", "--out",
                        (scratch() / "tube.raw").string(), "--width", "128", "--height", "128"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const Image2D img = load_image_raw(scratch() / "tube.raw");
  REQUIRE(img.width() == 128);

  geometry::CArmPose pose;
  pose.n_u = pose.n_v = 128;
  const auto pm = geometry::projection_matrix(pose);
  // The tube runs along x; at the neutral view each column's peak row sits on
  // the projection of the centerline (pixel centers are half a pixel earlier).
  for (double x : {-15.0, 0.0, 15.0}) {
    const Vec2 d = geometry::project_point(pm, Vec3(x, 0.0, 0.0));
    const int col = static_cast<int>(std::floor(d.x()));
    int best = 0;
    for (int y = 1; y < img.height(); ++y)
      if (img.at(col, y) > img.at(col, best)) best = y;
    CHECK(std::abs(best + 0.5 - d.y()) <= 1.0);
    CHECK(img.at(col, best) > 0.0);
  }
}

TEST_CASE("CLI exit codes and error JSON") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"render"}).code == 1);
  const CliRun usage = cli({"render", "--scene", tube_scene().string()});
  CHECK(usage.code == 1);
  CHECK(nlohmann::json::parse(usage.err)["error"] == "Usage");

  const CliRun bad = cli({"render", "--scene", tube_scene().string(), "--beta", "95", "--out",
                          (scratch() / "x.png").string()});
  CHECK(bad.code == 2);
  const auto e = nlohmann::json::parse(bad.err);
  CHECK(e["error"] == "invalid_argument");
  CHECK(e["message"].get<std::string>().find("beta") != std::string::npos);
  CHECK_FALSE(fs::exists(scratch() / "x.png"));

  CHECK(cli({"render", "--scene", tube_scene().string(), "--out", (scratch() / "x.bmp").string()}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("HTTP API: determinism, CLI byte identity, error statuses") {
  LiveServer live(tube_scene());
  auto c = live.client();

  auto scene = c.Get("/api/scene");
  REQUIRE(scene);
  CHECK(scene->status == 200);
  const auto sj = nlohmann::json::parse(scene->body);
  CHECK(sj["id"] == "straight");
  CHECK(sj["dims"] == nlohmann::json({64, 64, 64}));
  CHECK(sj["phases"] == 1);

  const std::string q = "/api/render?alpha_deg=20&beta_deg=-10&phase=0&w=96&h=80";
  auto a = c.Get(q), b = c.Get(q);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->status == 200);
  CHECK(a->get_header_value("Content-Type") == "image/png");
  CHECK(a->body == b->body);
  int w = 0, h = 0;
  decode_gray8(a->body, w, h);
  CHECK(w == 96);
  CHECK(h == 80);

  // CLI writes the same bytes for the same parameters.
  for (const char* ext : {"png", "raw", "pgm"}) {
    const fs::path out = scratch() / (std::string("cli_render.") + ext);
    const CliRun r = cli({"render", "--scene", tube_scene().string(), "--alpha", "20", "--beta", "-10", "--width",
                          "96", "--height", "80", "--out", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto api = c.Get(q + "&format=" + ext);
    REQUIRE(api);
    CHECK(api->status == 200);
    CHECK(api->body == slurp(out));
  }
  // and both equal the in-process engine
  const Config cfg;
  const auto sc = Scene::load(tube_scene(), cfg);
  RenderRequest rq;
  rq.pose = render_pose(*sc, 20.0, -10.0, 96, 80);
  const Bytes direct = encode_raw_f32(sc->render(rq));
  CHECK(std::string(direct.begin(), direct.end()) == c.Get(q + "&format=raw")->body);

  CHECK(c.Get("/api/render?beta_deg=95")->status == 422);
  CHECK(c.Get("/api/render?alpha_deg=abc")->status == 400);
  CHECK(c.Get("/api/render?phase=1.5")->status == 400);
  CHECK(c.Get("/api/render?w=0")->status == 400);
  CHECK(c.Get("/api/render?enhance=maybe")->status == 400);
  CHECK(c.Get("/api/render?format=gif")->status == 400);
  CHECK(c.Get("/api/render?scene=elsewhere")->status == 404);
  CHECK(c.Get("/api/render?scene=straight&w=32&h=32")->status == 200);
  CHECK(c.Get("/api/hemodynamics")->status == 404);
  CHECK(c.Get("/api/ecg")->status == 404);
  CHECK(c.Get("/api/frame/99")->status == 404);

  auto enh = c.Get("/api/render?w=64&h=64&enhance=1");
  REQUIRE(enh);
  CHECK(enh->status == 200);
  CHECK(enh->body == c.Get("/api/render?w=64&h=64&enhance=true")->body);
}

TEST_CASE("HTTP sessions: optimistic concurrency") {
  LiveServer live(tube_scene());
  auto c = live.client();
  auto g = c.Get("/api/session");
  REQUIRE(g);
  CHECK(g->status == 200);
  const auto s0 = nlohmann::json::parse(g->body);
  CHECK(s0["version"] == 0);
  CHECK(s0["scene"] == "straight");

  auto post = [&](const nlohmann::json& body) {
    auto cl = live.client();
    auto r = cl.Post("/api/session", body.dump(), "application/json");
    return r ? r->status : -1;
  };

  // Two clients that both saw version 0 race to update the pose.
  for (int round = 0; round < 5; ++round) {
    const auto cur = nlohmann::json::parse(c.Get("/api/session")->body)["version"].get<std::uint64_t>();
    int s1 = 0, s2 = 0;
    std::thread t1([&] { s1 = post({{"version", cur}, {"pose", {{"alpha_deg", 10.0 + round}}}}); });
    std::thread t2([&] { s2 = post({{"version", cur}, {"pose", {{"alpha_deg", -10.0 - round}}}}); });
    t1.join();
    t2.join();
    CHECK(std::min(s1, s2) == 200);
    CHECK(std::max(s1, s2) == 409);
    CHECK(nlohmann::json::parse(c.Get("/api/session")->body)["version"] == cur + 1);
  }

  CHECK(post({{"pose", {{"beta_deg", 95.0}}}}) == 422);
  CHECK(post({{"pose", {{"beta_deg", "steep"}}}}) == 400);
  CHECK(post({{"id", "nobody"}}) == 404);
  auto raw = c.Post("/api/session", "{not json", "application/json");
  CHECK(raw->status == 400);

  CHECK(post({{"pose", {{"alpha_deg", 45.0}, {"beta_deg", 30.0}}}, {"playback", {{"state", "running"}}}}) == 200);
  const auto s = nlohmann::json::parse(c.Get("/api/session")->body);
  CHECK(s["pose"]["alpha_deg"].get<double>() == doctest::Approx(45.0));
  CHECK(s["playback"]["state"] == "running");
  CHECK(c.Get("/api/session?id=nobody")->status == 404);
}

TEST_CASE("HTTP stream, frames, ECG and hemodynamics on a beating scene") {
  LiveServer live(beating_scene());
  auto c = live.client();

  auto sj = nlohmann::json::parse(c.Get("/api/scene")->body);
  CHECK(sj["phases"] == 4);
  CHECK(sj["ecg"]["r_peaks"].get<int>() >= 5);
  CHECK(sj["ecg"]["mean_hr_bpm"].get<double>() == doctest::Approx(60.0).epsilon(0.01));

  auto ecg = c.Get("/api/ecg?from=1&to=3");
  REQUIRE(ecg);
  CHECK(ecg->status == 200);
  const auto ej = nlohmann::json::parse(ecg->body);
  CHECK(ej["samples_mv"].size() == 1000);
  CHECK(ej["t0_s"].get<double>() == doctest::Approx(1.0));
  CHECK(ej["r_peaks_s"].size() == 2);
  CHECK(c.Get("/api/ecg?from=3&to=1")->status == 400);

  auto hj = nlohmann::json::parse(c.Get("/api/hemodynamics")->body);
  CHECK(hj["EDV_ml"].get<double>() == doctest::Approx(150.0).epsilon(0.2 / 150));
  CHECK(hj["ESV_ml"].get<double>() == doctest::Approx(50.0).epsilon(0.2 / 50));

  CHECK(c.Post("/api/session", nlohmann::json{{"pose", {{"n_u", 64}, {"n_v", 64}}}}.dump(), "application/json")->status ==
        200);
  std::string body;
  const auto t0 = std::chrono::steady_clock::now();
  auto res = c.Get("/api/stream?fps=20&frames=4", [&](const char* d, std::size_t n) {
    body.append(d, n);
    return true;
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "text/event-stream");
  CHECK(secs >= 0.14);  // paced at 20 fps: the last event leaves at 150 ms

  std::vector<nlohmann::json> events;
  std::istringstream in(body);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("data: ", 0) == 0) events.push_back(nlohmann::json::parse(line.substr(6)));
  REQUIRE(events.size() == 4);
  for (std::size_t k = 0; k < events.size(); ++k) {
    CHECK(events[k]["seq"] == k);
    const double ph = events[k]["phase"];
    CHECK(ph >= 0.0);
    CHECK(ph < 1.0);
    auto f = c.Get("/api/frame/" + std::to_string(events[k]["id"].get<std::uint64_t>()));
    REQUIRE(f);
    CHECK(f->status == 200);
    int w = 0, h = 0;
    decode_gray8(f->body, w, h);
    CHECK(w == 64);
  }
  // consecutive frames are 50 ms of ECG apart
  const double dphi = events[1]["phase"].get<double>() - events[0]["phase"].get<double>();
  CHECK(std::fmod(dphi + 1.0, 1.0) == doctest::Approx(0.05).epsilon(0.02));
  CHECK(nlohmann::json::parse(c.Get("/api/session")->body)["last_frame"] == events.back()["id"]);
  CHECK(c.Get("/api/stream?fps=0")->status == 400);
  CHECK(c.Get("/api/stream?session=nobody")->status == 404);
}

TEST_CASE("scene phases: nearest phase and clock mapping") {
  const Config cfg;
  const auto s = Scene::load(beating_scene(), cfg);
  REQUIRE(s->n_phases() == 4);
  CHECK_FALSE(s->has_fields());
  // 4 phases span the model cycle: positions 0, 1/3, 2/3, 1 of the ECG phase.
  CHECK(s->volume_at(0.0).data() == s->phase_volume(0).data());
  CHECK(s->volume_at(0.1).data() == s->phase_volume(0).data());
  CHECK(s->volume_at(0.2).data() == s->phase_volume(1).data());
  CHECK(s->volume_at(0.99).data() == s->phase_volume(3).data());
  CHECK_THROWS_AS(s->volume_at(1.0), Error);
}

TEST_CASE("sequence CLI follows the ECG clock") {
  const fs::path out = scratch() / "seq";
  const CliRun r = cli({"sequence", "--scene", beating_scene().string(), "--pose", "30,-10", "--frames", "3", "--fps",
                        "10", "--width", "48", "--height", "48", "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto idx = read_json(out / "index.json");
  REQUIRE(idx["frames"].size() == 3);
  const Config cfg;
  const auto s = Scene::load(beating_scene(), cfg);
  for (int k = 0; k < 3; ++k) {
    CHECK(idx["frames"][k]["phase"].get<double>() == s->clock().ecg_phase(k / 10.0));
    CHECK(fs::exists(out / idx["frames"][k]["file"].get<std::string>()));
  }
  CHECK(idx["pose"]["alpha_deg"].get<double>() == doctest::Approx(30.0));
  CHECK(cli({"sequence", "--scene", beating_scene().string(), "--pose", "30", "--frames", "1", "--out", out.string()})
            .code == 2);
}

TEST_CASE("hemo CLI on analytic cosine meshes") {
  // V(t) = 100 + 50 cos(2 pi t / T), 20 phases; each sphere is scaled so its
  // polyhedral volume equals the target exactly.
  const fs::path dir = scratch() / "cosine_meshes";
  fs::create_directories(dir);
  const volume::SurfaceMesh unit = volume::icosphere(1.0, 3);
  const double unit_ml = hemo::mesh_volume(unit);
  const double T = 0.8;
  for (int i = 0; i < 20; ++i) {
    const double v = 100.0 + 50.0 * std::cos(2.0 * kPi * i / 20.0);
    volume::SurfaceMesh m = unit;
    for (Vec3& p : m.vertices) p *= std::cbrt(v / unit_ml);
    char name[32];
    std::snprintf(name, sizeof name, "m_%02d.obj", i);
    volume::save_mesh(m, dir / name);
  }
  hemo::SyntheticECG e;
  e.bpm = 75.0;
  e.duration_s = 12.0;
  hemo::save_ecg_csv(hemo::synthetic_ecg(e), scratch() / "cosine_ecg.csv");

  const CliRun r = cli({"hemo", "--meshes", dir.string(), "--ecg", (scratch() / "cosine_ecg.csv").string(), "--out",
                        (scratch() / "report.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = read_json(scratch() / "report.json");
  CHECK(j["EDV_ml"].get<double>() == doctest::Approx(150.0).epsilon(0.2 / 150));
  CHECK(j["ESV_ml"].get<double>() == doctest::Approx(50.0).epsilon(0.2 / 50));
  CHECK(j["HR_bpm"].get<double>() == doctest::Approx(75.0).epsilon(0.005));
  CHECK(j["t_ESV_s"].get<double>() == doctest::Approx(T / 2).epsilon(0.01));
  // |PER| of the analytic curve: 50 * 2 pi / T
  CHECK(-j["PER_ml_s"].get<double>() == doctest::Approx(100.0 * kPi / T).epsilon(0.01));
  CHECK(j["SV_ml"].get<double>() * j["HR_bpm"].get<double>() / 1000.0 ==
        doctest::Approx(j["CO_l_min"].get<double>()).epsilon(1e-12));

  // without an ECG the cycle must come from somewhere
  CHECK(cli({"hemo", "--meshes", dir.string()}).code == 2);
  write_json({{"cycle_s", T}}, dir / "times.json");
  const CliRun r2 = cli({"hemo", "--meshes", dir.string()});
  REQUIRE_MESSAGE(r2.code == 0, r2.err);
  CHECK(nlohmann::json::parse(r2.out)["HR_bpm"].get<double>() == doctest::Approx(75.0));
  fs::remove(dir / "times.json");
}

TEST_CASE("metrics CLI: identical inputs give a perfect report") {
  Polyline3 pts;
  for (int i = 0; i <= 60; ++i) pts.emplace_back(i, 5.0 * std::sin(i / 10.0), 0.2 * i);
  std::vector<int> mask(20 * 10, 0);
  for (int i = 40; i < 120; ++i) mask[i] = 1;
  const nlohmann::json in = {{"points", points_to_json(pts)},
                             {"diameters", {3.0, 2.8, 2.5, 2.2}},
                             {"bifurcation_deg", 55.0},
                             {"mask", {{"width", 20}, {"height", 10}, {"data", mask}}}};
  write_json(in, scratch() / "m_ref.json");
  write_json(in, scratch() / "m_test.json");
  const CliRun r = cli({"metrics", "--ref", (scratch() / "m_ref.json").string(), "--test",
                        (scratch() / "m_test.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = nlohmann::json::parse(r.out);
  for (const char* k : {"C_L", "C_D", "C_T", "C_theta", "C_overall"}) CHECK(j[k].get<double>() == 100.0);
  CHECK(j["DSC"].get<double>() == 1.0);
  for (const char* k : {"MTE", "W1", "ME_pct"}) CHECK(j[k].get<double>() == 0.0);

  // a shifted copy: MTE equals the shift
  nlohmann::json shifted = in;
  Polyline3 moved = pts;
  for (Vec3& p : moved) p += Vec3(0.0, 0.0, 0.5);
  shifted["points"] = points_to_json(moved);
  write_json(shifted, scratch() / "m_shift.json");
  const auto js = nlohmann::json::parse(
      cli({"metrics", "--ref", (scratch() / "m_ref.json").string(), "--test", (scratch() / "m_shift.json").string()})
          .out);
  CHECK(js["MTE"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(js["C_L"].get<double>() == doctest::Approx(100.0));

  write_json({{"diameters", {1.0}}}, scratch() / "m_none.json");
  CHECK(cli({"metrics", "--ref", (scratch() / "m_none.json").string(), "--test", (scratch() / "m_none.json").string()})
            .code == 2);
}

TEST_CASE("stereo CLI reconstructs a rendered curved tube") {
  const fs::path sd = scratch() / "curved";
  write_json({{"kind", "tube"},
              {"id", "curved"},
              {"dims", {96, 96, 96}},
              {"spacing_mm", 0.5},
              {"centerline_knots", {{-4, 2, -18}, {3, -1, -8}, {5, 1, 2}, {1, 3, 10}, {-5, 0, 18}}},
              {"radius_mm", 0.8}},
             scratch() / "curved.json");
  REQUIRE(cli({"phantom", "gen", "--spec", (scratch() / "curved.json").string(), "--out", sd.string()}).code == 0);

  geometry::CArmPose pl, pr;
  pl.alpha = deg2rad(-45.0);
  pr.alpha = deg2rad(45.0);
  for (auto* p : {&pl, &pr}) {
    const CliRun r = cli({"render", "--scene", sd.string(), "--alpha", std::to_string(rad2deg(p->alpha)), "--invert",
                          "--out", (scratch() / (p == &pl ? "left.raw" : "right.raw")).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  write_json({{"left", {{"carm_pose", pose_to_json(pl)}}}, {"right", {{"carm_pose", pose_to_json(pr)}}}},
             scratch() / "rig.json");
  const CliRun r = cli({"stereo", "--left", (scratch() / "left.raw").string(), "--right",
                        (scratch() / "right.raw").string(), "--rig", (scratch() / "rig.json").string(), "--out",
                        (scratch() / "curve.json").string(), "--csv", (scratch() / "curve.csv").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cj = read_json(scratch() / "curve.json");
  CHECK(cj["diagnostics"]["degraded"] == false);
  const auto curve = curve_from_json(cj);
  const Polyline3 truth = points_from_json(read_json(sd / "scene.json")["ground_truth"]["centerlines"][0]);
  double sum = 0.0;
  for (const Vec3& p : truth) sum += curve.closest(p).first;
  CHECK(sum / truth.size() < 1.0);
  CHECK(fs::file_size(scratch() / "curve.csv") > 1000);
}

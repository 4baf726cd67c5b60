#include "cathlab/service/cli.hpp"

#include "cathlab/error.hpp"
#include "cathlab/service/config.hpp"
#include "cathlab/service/encode.hpp"
#include "cathlab/service/scene.hpp"
#include "cathlab/service/serialize.hpp"
#include "cathlab/service/server.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;

namespace cathlab::service {

using nlohmann::json;

namespace {

void write_bytes(const Bytes& b, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

void write_text(const std::string& s, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << s;
}

// Format from the file extension.
FrameFormat format_of(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".png") return FrameFormat::Png;
  if (ext == ".pgm") return FrameFormat::Pgm;
  if (ext == ".raw") return FrameFormat::Raw;
  fail(ErrorCode::InvalidArgument, "output extension must be .png, .pgm or .raw: " + p.string());
}

void save_frame(const Image2D& img, const fs::path& p) {
  const FrameFormat f = format_of(p);
  if (f == FrameFormat::Raw) save_image_raw(img, p);
  else write_bytes(encode_frame(img, f), p);
}

Image2D load_image(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".pgm") return load_pgm(p);
  if (ext == ".raw" || ext == ".json") return load_image_raw(p);
  fail(ErrorCode::InvalidArgument, "input image must be .pgm or .raw: " + p.string());
}

void emit(const json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty() || out_path == "-") out << j.dump(2) << '\n';
  else write_json(j, out_path);
}

// A trajectory/vessel description for the metrics command:
// {"points": [...]} or a curve {"control", "knots"}, plus optional
// "diameters", "bifurcation_deg", "length_mm" and "mask" {width, height, data}.
struct MetricsInput {
  std::optional<Polyline3> points;
  std::optional<std::vector<double>> diameters;
  std::optional<double> bifurcation_deg, length_mm;
  std::optional<metrics::Mask> mask;
  int mask_w = 0, mask_h = 0;
};

MetricsInput metrics_input(const json& j, const std::string& what) {
  MetricsInput m;
  try {
    if (j.contains("points")) m.points = points_from_json(j.at("points"));
    else if (j.contains("control")) m.points = curve_from_json(j).sample(400);
    else if (j.contains("curve")) m.points = curve_from_json(j.at("curve")).sample(400);
    if (j.contains("diameters")) m.diameters = j.at("diameters").get<std::vector<double>>();
    if (j.contains("bifurcation_deg")) m.bifurcation_deg = j.at("bifurcation_deg").get<double>();
    if (j.contains("length_mm")) m.length_mm = j.at("length_mm").get<double>();
    if (j.contains("mask")) {
      const json& k = j.at("mask");
      m.mask_w = k.at("width").get<int>();
      m.mask_h = k.at("height").get<int>();
      m.mask = k.at("data").get<metrics::Mask>();
      require(m.mask->size() == static_cast<std::size_t>(m.mask_w) * m.mask_h, ErrorCode::SizeMismatch,
              what + ": mask data does not match width x height");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, what + ": " + e.what());
  }
  return m;
}

struct Options {
  std::string config;
  // phantom gen
  std::string spec, out;
  // render / sequence / serve
  std::string scene;
  double alpha = 0.0, beta = 0.0, phase = 0.0, fps = 0.0;
  std::string pose;
  int w = 0, h = 0, frames = 1;
  bool enhance = false, invert = false;
  std::string format = "pgm";
  // hemo
  std::string meshes, ecg;
  // stereo
  std::string left, right, rig, csv;
  int csv_samples = 200;
  // metrics
  std::string ref, test;
  int samples = 100;
  // serve
  std::string host, static_dir;
  int port = -1;
};

Config load_cfg(const Options& o) { return o.config.empty() ? workspace_config() : load_config(o.config); }

int cmd_phantom(const Options& o, std::ostream& out) {
  const json m = generate_scene(read_json(o.spec), o.out);
  out << json{{"scene", o.out}, {"id", m.at("id")}, {"phases", m.at("phases").size()}}.dump() << '\n';
  return 0;
}

int cmd_render(const Options& o, std::ostream& out) {
  const Config cfg = load_cfg(o);
  const auto scene = Scene::load(o.scene, cfg);
  RenderRequest r;
  r.pose = render_pose(*scene, o.alpha, o.beta, o.w > 0 ? o.w : scene->default_pose().n_u,
                       o.h > 0 ? o.h : scene->default_pose().n_v);
  r.phase = o.phase;
  r.enhance = o.enhance;
  r.invert = o.invert;
  save_frame(scene->render(r), o.out);
  out << json{{"out", o.out}, {"pose", pose_to_json(r.pose)}, {"phase", r.phase}}.dump() << '\n';
  return 0;
}

int cmd_sequence(const Options& o, std::ostream& out) {
  const Config cfg = load_cfg(o);
  const auto scene = Scene::load(o.scene, cfg);
  double alpha = o.alpha, beta = o.beta;
  if (!o.pose.empty()) {
    char tail = 0;
    if (std::sscanf(o.pose.c_str(), "%lf,%lf%c", &alpha, &beta, &tail) != 2)
      fail(ErrorCode::InvalidArgument, "--pose must be ALPHA,BETA in degrees");
  }
  require(o.frames >= 1, ErrorCode::InvalidArgument, "--frames must be >= 1");
  const double fps = o.fps > 0.0 ? o.fps : cfg.service.stream_fps;
  const FrameFormat fmt = parse_format(o.format);
  const char* ext = fmt == FrameFormat::Png ? ".png" : fmt == FrameFormat::Raw ? ".raw" : ".pgm";

  RenderRequest r;
  r.pose = render_pose(*scene, alpha, beta, o.w > 0 ? o.w : scene->default_pose().n_u,
                       o.h > 0 ? o.h : scene->default_pose().n_v);
  r.enhance = o.enhance;
  r.invert = o.invert;
  fs::create_directories(o.out);
  json index = json::array();
  for (int k = 0; k < o.frames; ++k) {
    const double t = k / fps;
    r.phase = scene->clock().ecg_phase(t);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d%s", k, ext);
    save_frame(scene->render(r), fs::path(o.out) / name);
    index.push_back({{"frame", k},
                     {"t_s", t},
                     {"phase", r.phase},
                     {"rr_pct", scene->clock().map_phase(r.phase).rr_pct},
                     {"file", name}});
  }
  write_json({{"scene", scene->id()}, {"pose", pose_to_json(r.pose)}, {"fps", fps}, {"frames", index}},
             fs::path(o.out) / "index.json");
  out << json{{"out", o.out}, {"frames", o.frames}}.dump() << '\n';
  return 0;
}

int cmd_hemo(const Options& o, std::ostream& out) {
  const Config cfg = load_cfg(o);
  const MeshSequence seq = load_mesh_sequence(o.meshes);
  std::optional<hemo::ECGTrace> ecg;
  if (!o.ecg.empty()) ecg = hemo::load_ecg_csv(o.ecg);
  const auto rep = mesh_sequence_report(seq, ecg ? &*ecg : nullptr, cfg.hemo);
  emit(report_to_json(rep), o.out, out);
  return 0;
}

int cmd_stereo(const Options& o, std::ostream& out) {
  const Config cfg = load_cfg(o);
  const stereo::Rig rig = rig_from_json(read_json(o.rig));
  const auto rec = stereo::reconstruct_guidewire(load_image(o.left), load_image(o.right), rig.left, rig.right,
                                                 cfg.stereo);
  json j = curve_to_json(rec.curve);
  j["diagnostics"] = diagnostics_to_json(rec.diag);
  emit(j, o.out, out);
  if (!o.csv.empty()) write_text(curve_csv(rec.curve, o.csv_samples), o.csv);
  return 0;
}

int cmd_metrics(const Options& o, std::ostream& out) {
  const MetricsInput ref = metrics_input(read_json(o.ref), o.ref);
  const MetricsInput test = metrics_input(read_json(o.test), o.test);

  std::optional<metrics::Morphology> morph;
  if (ref.diameters && test.diameters && ref.points && test.points) {
    const auto vr = metrics::describe_vessel(*ref.points, *ref.diameters, ref.bifurcation_deg);
    const auto vt = metrics::describe_vessel(*test.points, *test.diameters, test.bifurcation_deg);
    morph = metrics::morphological_consistency(vt, vr);
  }
  std::optional<metrics::TrajectoryMetrics> traj;
  if (ref.points && test.points) {
    const bool masks = ref.mask && test.mask;
    if (masks)
      require(ref.mask_w == test.mask_w && ref.mask_h == test.mask_h, ErrorCode::SizeMismatch, "mask sizes differ");
    traj = metrics::trajectory_metrics(*test.points, *ref.points, o.samples, ref.length_mm,
                                       masks ? &*test.mask : nullptr, masks ? &*ref.mask : nullptr);
  } else if (ref.mask && test.mask) {
    metrics::TrajectoryMetrics t;
    t.dsc = metrics::dice(*test.mask, *ref.mask);
    json j = metrics_report(morph, std::nullopt);
    j["DSC"] = *t.dsc;
    emit(j, o.out, out);
    return 0;
  }
  require(morph || traj, ErrorCode::InsufficientData, "inputs share no comparable quantity");
  emit(metrics_report(morph, traj), o.out, out);
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const Config cfg = load_cfg(o);
  const auto scene = Scene::load(o.scene, cfg);
  std::optional<fs::path> st;
  if (!o.static_dir.empty()) st = o.static_dir;
  Server server(scene, cfg, st);
  const std::string host = o.host.empty() ? cfg.service.host : o.host;
  const int port = server.bind(host, o.port >= 0 ? o.port : cfg.service.port);
  out << json{{"listening", host + ":" + std::to_string(port)}, {"scene", scene->id()}}.dump() << std::endl;
  server.listen();
  return 0;
}

void error_json(std::ostream& err, const std::string& code, const std::string& msg) {
  err << json{{"error", code}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Virtual cath-lab engine", "cathlab"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "workspace config JSON (default: $CATHLAB_WORKSPACE/cathlab.json)");

  auto* phantom = app.add_subcommand("phantom", "synthetic phantoms");
  phantom->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "write a scene directory from a phantom spec");
  gen->add_option("--spec", o.spec, "phantom spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "scene directory")->required();

  auto pose_opts = [&](CLI::App* c) {
    c->add_option("--scene", o.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
    c->add_option("--alpha", o.alpha, "primary angle, degrees (+LAO)");
    c->add_option("--beta", o.beta, "secondary angle, degrees (+CRAN)");
    c->add_option("--width", o.w, "detector columns");
    c->add_option("--height", o.h, "detector rows");
    c->add_flag("--enhance", o.enhance, "apply the enhancement pipeline");
    c->add_flag("--invert", o.invert, "display polarity (vessels dark)");
  };
  auto* render = app.add_subcommand("render", "render one DRR");
  pose_opts(render);
  render->add_option("--phase", o.phase, "ECG phase in [0, 1)");
  render->add_option("--out", o.out, "output image (.pgm, .png or .raw)")->required();

  auto* sequence = app.add_subcommand("sequence", "ECG-synchronized frame sequence");
  pose_opts(sequence);
  sequence->add_option("--pose", o.pose, "ALPHA,BETA in degrees");
  sequence->add_option("--frames", o.frames, "number of frames")->required();
  sequence->add_option("--fps", o.fps, "frame rate (default: service.stream_fps)");
  sequence->add_option("--format", o.format, "pgm, png or raw");
  sequence->add_option("--out", o.out, "output directory")->required();

  auto* hemo_cmd = app.add_subcommand("hemo", "hemodynamics from a ventricle mesh sequence");
  hemo_cmd->add_option("--meshes", o.meshes, "directory of .obj meshes")->required()->check(CLI::ExistingDirectory);
  hemo_cmd->add_option("--ecg", o.ecg, "ECG CSV (time_s, mv)")->check(CLI::ExistingFile);
  hemo_cmd->add_option("--out", o.out, "report JSON (default: stdout)");

  auto* stereo_cmd = app.add_subcommand("stereo", "3D guidewire from a calibrated image pair");
  stereo_cmd->add_option("--left", o.left, "left image (.pgm or .raw)")->required()->check(CLI::ExistingFile);
  stereo_cmd->add_option("--right", o.right, "right image")->required()->check(CLI::ExistingFile);
  stereo_cmd->add_option("--rig", o.rig, "rig JSON {left, right}")->required()->check(CLI::ExistingFile);
  stereo_cmd->add_option("--out", o.out, "curve JSON (default: stdout)");
  stereo_cmd->add_option("--csv", o.csv, "also write sampled points as CSV");
  stereo_cmd->add_option("--csv-samples", o.csv_samples, "CSV sample count")->check(CLI::PositiveNumber);

  auto* metrics_cmd = app.add_subcommand("metrics", "consistency report");
  metrics_cmd->add_option("--ref", o.ref, "reference JSON")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--test", o.test, "test JSON")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--samples", o.samples, "arc-length resampling count")->check(CLI::Range(2, 256));
  metrics_cmd->add_option("--out", o.out, "report JSON (default: stdout)");

  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--scene", o.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--port", o.port, "port (0 picks a free one)");
  serve->add_option("--static", o.static_dir, "static console bundle served at /")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    error_json(err, "Usage", e.what());
    return 1;
  }

  try {
    if (*gen) return cmd_phantom(o, out);
    if (*render) return cmd_render(o, out);
    if (*sequence) return cmd_sequence(o, out);
    if (*hemo_cmd) return cmd_hemo(o, out);
    if (*stereo_cmd) return cmd_stereo(o, out);
    if (*metrics_cmd) return cmd_metrics(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const Error& e) {
    error_json(err, to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    error_json(err, "Internal", e.what());
    return 3;
  }
  error_json(err, "Usage", "no command given");
  return 1;
}

}  // namespace cathlab::service

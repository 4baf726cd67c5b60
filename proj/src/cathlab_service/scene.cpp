#include "cathlab/service/scene.hpp"

#include "cathlab/error.hpp"
#include "cathlab/image_enhance.hpp"
#include "cathlab/service/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fs = std::filesystem;

namespace cathlab::service {

using nlohmann::json;

MeshSequence load_mesh_sequence(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::Io, "mesh directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::InsufficientData, "no .obj meshes in " + dir.string());

  MeshSequence seq;
  for (const auto& f : files) seq.meshes.push_back(volume::load_mesh(f, true));
  if (const fs::path t = dir / "times.json"; fs::exists(t)) {
    const json j = read_json(t);
    try {
      if (j.is_array()) {
        seq.times_s = j.get<std::vector<double>>();
      } else {
        if (j.contains("times_s")) seq.times_s = j.at("times_s").get<std::vector<double>>();
        if (j.contains("cycle_s")) seq.cycle_s = j.at("cycle_s").get<double>();
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedFile, t.string() + ": " + e.what());
    }
  }
  return seq;
}

hemo::HemodynamicsReport mesh_sequence_report(const MeshSequence& seq, const hemo::ECGTrace* ecg,
                                              const HemoConfig& cfg) {
  const std::size_t n = seq.meshes.size();
  require(n >= 3, ErrorCode::InsufficientData, "need at least 3 meshes for a volume curve");
  require(seq.times_s.empty() || seq.times_s.size() == n, ErrorCode::SizeMismatch,
          "mesh times and mesh count differ");

  std::optional<double> hr;
  if (ecg) {
    std::vector<double> peaks = ecg->r_peaks_s;
    if (peaks.size() < 2) peaks = hemo::detect_r_peaks(ecg->samples_mv, ecg->rate_hz);
    hr = hemo::heart_rates(peaks).mean_bpm;
  }
  double cycle;
  if (seq.cycle_s) cycle = *seq.cycle_s;
  else if (hr) cycle = 60.0 / *hr;
  else if (!seq.times_s.empty()) cycle = (seq.times_s.back() - seq.times_s.front()) * n / (n - 1.0);
  else fail(ErrorCode::InsufficientData, "mesh sequence needs times, a cycle length or an ECG");
  require(cycle > 0.0, ErrorCode::InvalidArgument, "cycle length must be positive");

  std::vector<double> t = seq.times_s, v;
  if (t.empty())
    for (std::size_t i = 0; i < n; ++i) t.push_back(cycle * i / n);
  for (const auto& m : seq.meshes) v.push_back(hemo::mesh_volume(m));

  hemo::VolumeTimeCurve curve;
  if (cfg.periodic) {
    require(t.back() < t.front() + cycle, ErrorCode::InvalidArgument, "mesh times exceed one cycle");
    t.push_back(t.front() + cycle);
    v.push_back(v.front());
    curve = hemo::VolumeTimeCurve(t, v, cycle, hemo::SplineEnds::Periodic);
  } else {
    curve = hemo::build_curve(t, v);
  }
  hemo::ReportOptions opt;
  opt.event_frac = cfg.event_frac;
  return hemo::analyze(curve, hr.value_or(60.0 / cycle), opt);
}

std::shared_ptr<Scene> Scene::load(const fs::path& dir, const Config& cfg) {
  const json j = read_json(dir / "scene.json");
  auto s = std::make_shared<Scene>();
  s->dir_ = dir;
  s->cfg_ = cfg;
  try {
    s->id_ = j.at("id").get<std::string>();
    for (const json& p : j.at("phases")) s->volumes_.push_back(volume::load_volume(dir / p.get<std::string>()));
    if (j.contains("fields"))
      for (const json& p : j.at("fields")) s->fields_.push_back(cardiac::load_field(dir / p.get<std::string>()));
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, "scene.json: " + std::string(e.what()));
  }
  require(!s->id_.empty(), ErrorCode::MalformedFile, "scene id must not be empty");
  require(!s->volumes_.empty(), ErrorCode::InsufficientData, "scene has no phase volumes");
  for (const auto& v : s->volumes_) {
    v.validate();
    require(v.same_grid(s->volumes_.front()), ErrorCode::SizeMismatch, "phase volumes must share one grid");
  }
  if (!s->fields_.empty()) {
    require(s->fields_.size() + 1 == s->volumes_.size(), ErrorCode::SizeMismatch,
            "scene needs one deformation field per consecutive phase pair");
    for (const auto& f : s->fields_)
      require(f.same_grid(s->volumes_.front()), ErrorCode::SizeMismatch, "field grid differs from the volumes");
  }
  if (cfg.renderer.octree)
    for (const auto& v : s->volumes_) s->octrees_.push_back(drr::build_octree(v, cfg.renderer.empty_threshold));

  const int n_clock = std::max(2, s->n_phases());
  if (j.contains("ecg")) {
    s->ecg_ = hemo::load_ecg_csv(dir / j.at("ecg").get<std::string>());
    if (s->ecg_->r_peaks_s.size() < 2) s->ecg_->r_peaks_s = hemo::detect_r_peaks(s->ecg_->samples_mv, s->ecg_->rate_hz);
    s->clock_ = cardiac::phase_clock(*s->ecg_, n_clock);
  } else {
    s->clock_ = cardiac::PhaseClock({0.0, 1.0}, n_clock);
  }

  if (j.contains("meshes")) {
    const json& m = j.at("meshes");
    MeshSequence seq = load_mesh_sequence(dir / m.value("dir", std::string("meshes")));
    if (m.contains("times_s")) seq.times_s = m.at("times_s").get<std::vector<double>>();
    if (m.contains("cycle_s")) seq.cycle_s = m.at("cycle_s").get<double>();
    s->hemo_ = mesh_sequence_report(seq, s->ecg_ ? &*s->ecg_ : nullptr, cfg.hemo);
  }

  geometry::CArmPose base;
  base.sid_mm = cfg.renderer.sid_mm;
  base.spd_mm = cfg.renderer.spd_mm;
  base.fd_mm = cfg.renderer.fd_mm;
  base.n_u = cfg.renderer.n_u;
  base.n_v = cfg.renderer.n_v;
  s->default_pose_ = j.contains("default_pose") ? pose_from_json(j.at("default_pose"), base) : base;
  s->default_pose_.validate();

  s->enhance_ = cfg.enhance;
  if (j.contains("enhance")) s->enhance_ = config_from_json({{"enhance", j.at("enhance")}}).enhance;
  return s;
}

volume::AttenuationVolume Scene::volume_at(double ecg_phase) const {
  if (volumes_.size() == 1) {
    require(ecg_phase >= 0.0 && ecg_phase < 1.0, ErrorCode::InvalidArgument, "ECG phase must be in [0, 1)");
    return volumes_.front();
  }
  const cardiac::ModelPhase m = clock_.map_phase(ecg_phase);
  if (!fields_.empty() && m.fraction > 0.0) return cardiac::interpolate_phase(volumes_[m.index], fields_[m.index], m.fraction);
  return volumes_[m.fraction < 0.5 ? m.index : m.index + 1];
}

Image2D Scene::render(const RenderRequest& r) const {
  r.pose.validate();
  require(r.phase >= 0.0 && r.phase < 1.0, ErrorCode::InvalidArgument, "phase must be in [0, 1)");

  Image2D img;
  int stored = 0;
  bool warped = false;
  if (volumes_.size() > 1) {
    const cardiac::ModelPhase m = clock_.map_phase(r.phase);
    warped = !fields_.empty() && m.fraction > 0.0;
    stored = m.fraction < 0.5 ? m.index : m.index + 1;
  }
  if (warped) {
    const volume::AttenuationVolume v = volume_at(r.phase);
    if (cfg_.renderer.octree) {
      const drr::EmptySpaceOctree oct = drr::build_octree(v, cfg_.renderer.empty_threshold);
      img = drr::render_drr(v, r.pose, &oct);
    } else {
      img = drr::render_drr(v, r.pose);
    }
  } else {
    img = drr::render_drr(volumes_[stored], r.pose, octrees_.empty() ? nullptr : &octrees_[stored]);
  }
  if (r.enhance) img = enhance::enhance_pipeline(img, Image2D{}, enhance_).image;
  if (r.invert) img = inverted(img);
  return img;
}

json Scene::summary() const {
  const auto& v = volumes_.front();
  json j = {{"id", id_},
            {"phases", n_phases()},
            {"dims", v.dims()},
            {"spacing_mm", {v.spacing().x(), v.spacing().y(), v.spacing().z()}},
            {"origin_mm", {v.origin().x(), v.origin().y(), v.origin().z()}},
            {"phase_interpolation", !fields_.empty()},
            {"default_pose", pose_to_json(default_pose_)},
            {"hemodynamics", hemo_.has_value()}};
  if (ecg_) {
    j["ecg"] = {{"rate_hz", ecg_->rate_hz},
                {"duration_s", ecg_->duration()},
                {"r_peaks", ecg_->r_peaks_s.size()},
                {"mean_hr_bpm", ecg_->r_peaks_s.size() >= 2 ? hemo::heart_rates(ecg_->r_peaks_s).mean_bpm : 0.0}};
  } else {
    j["ecg"] = nullptr;
  }
  return j;
}

geometry::CArmPose render_pose(const Scene& s, double alpha_deg, double beta_deg, int w, int h) {
  geometry::CArmPose p = s.default_pose();
  p.alpha = deg2rad(alpha_deg);
  p.beta = deg2rad(beta_deg);
  p.n_u = w;
  p.n_v = h;
  p.validate();
  return p;
}

// ---- generation ----

namespace {

std::string numbered(const char* stem, int k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02d%s", stem, k, ext);
  return buf;
}

json generate_tube(const json& spec, const fs::path& out) {
  const volume::PhantomSpec ps = phantom_spec_from_json(spec);
  const volume::Phantom ph = volume::generate_vessel_phantom(ps);
  volume::save_volume(ph.volume, out / "phase_00.json");
  volume::save_mesh(ph.surface, out / "surface_00.obj");
  return {{"phases", {"phase_00.json"}},
          {"ground_truth", {{"centerlines", {points_to_json(ph.centerline)}}, {"surfaces", {"surface_00.obj"}}}},
          {"phantom_spec", phantom_spec_to_json(ps)}};
}

json generate_beating(const json& spec, const fs::path& out) {
  const int n = spec.value("phases", 8);
  require(n >= 2, ErrorCode::InvalidArgument, "beating tube needs at least 2 phases");
  const auto dims = spec.value("dims", std::array<int, 3>{128, 128, 128});
  const double spacing = spec.value("spacing_mm", 0.5);
  const double bpm = spec.value("bpm", 60.0);
  const int beats = spec.value("beats", 10);
  require(bpm > 0.0 && beats >= 2 && spacing > 0.0, ErrorCode::InvalidArgument, "beating tube: bad bpm, beats or spacing");

  cardiac::BeatingTube tube;
  tube.length_mm = spec.value("length_mm", tube.length_mm);
  tube.bend_mm = spec.value("bend_mm", tube.bend_mm);
  tube.radius_mm = spec.value("radius_mm", tube.radius_mm);

  json phases = json::array(), centerlines = json::array(), rr = json::array();
  std::vector<volume::AttenuationVolume> vols;
  for (int k = 0; k < n; ++k) {
    const double rr_pct = -5.0 + 111.0 * k / (n - 1);
    volume::PhantomSpec ps = tube.spec(rr_pct / 100.0, dims, Vec3::Constant(spacing));
    ps.vessel = spec.value("vessel", ps.vessel);
    volume::Phantom ph = volume::generate_vessel_phantom(ps);
    volume::save_volume(ph.volume, out / numbered("phase", k, ".json"));
    phases.push_back(numbered("phase", k, ".json"));
    centerlines.push_back(points_to_json(ph.centerline));
    rr.push_back(rr_pct);
    vols.push_back(std::move(ph.volume));
  }
  json m = {{"phases", phases}, {"ground_truth", {{"centerlines", centerlines}, {"rr_pct", rr}}}};

  if (spec.value("register", false)) {
    json fields = json::array();
    for (int k = 0; k + 1 < n; ++k) {
      const auto reg = cardiac::register_volumes(vols[k], vols[k + 1]);
      cardiac::save_field(reg.field, out / numbered("field", k, ".json"));
      fields.push_back(numbered("field", k, ".json"));
    }
    m["fields"] = fields;
  }

  hemo::SyntheticECG e;
  e.bpm = bpm;
  e.duration_s = beats * 60.0 / bpm;
  e.rate_hz = spec.value("ecg_rate_hz", 500.0);
  e.snr_db = spec.value("ecg_snr_db", 30.0);
  e.seed = spec.value("seed", 1u);
  hemo::save_ecg_csv(hemo::synthetic_ecg(e), out / "ecg.csv");
  m["ecg"] = "ecg.csv";

  // Ventricle surrogate: spheres whose volume follows a cosine between EDV and ESV.
  const int n_mesh = spec.value("mesh_phases", 20);
  if (n_mesh > 0) {
    require(n_mesh >= 3, ErrorCode::InvalidArgument, "mesh_phases must be 0 or >= 3");
    const double edv = spec.value("edv_ml", 150.0), esv = spec.value("esv_ml", 50.0);
    require(edv > esv && esv > 0.0, ErrorCode::InvalidArgument, "need EDV > ESV > 0");
    const double cycle = 60.0 / bpm;
    const double unit = hemo::mesh_volume(volume::icosphere(1.0, 3));
    fs::create_directories(out / "meshes");
    json times = json::array();
    for (int i = 0; i < n_mesh; ++i) {
      const double v = 0.5 * (edv + esv) + 0.5 * (edv - esv) * std::cos(2.0 * kPi * i / n_mesh);
      volume::save_mesh(volume::icosphere(std::cbrt(v / unit), 3), out / "meshes" / numbered("lv", i, ".obj"));
      times.push_back(cycle * i / n_mesh);
    }
    m["meshes"] = {{"dir", "meshes"}, {"times_s", times}, {"cycle_s", cycle}};
  }
  m["beating_tube"] = {{"length_mm", tube.length_mm}, {"bend_mm", tube.bend_mm}, {"radius_mm", tube.radius_mm}};
  return m;
}

}  // namespace

json generate_scene(const json& spec, const fs::path& out) {
  require(spec.is_object(), ErrorCode::MalformedFile, "phantom spec must be an object");
  fs::create_directories(out);
  const std::string kind = spec.value("kind", std::string("tube"));
  json m;
  try {
    if (kind == "tube") {
      json s = spec;
      for (const char* k : {"kind", "id", "default_pose"}) s.erase(k);
      m = generate_tube(s, out);
    } else if (kind == "beating_tube") {
      m = generate_beating(spec, out);
    } else {
      fail(ErrorCode::InvalidArgument, "unknown phantom kind '" + kind + "' (tube, beating_tube)");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, "phantom spec: " + std::string(e.what()));
  }
  std::string id = spec.value("id", std::string());
  if (id.empty()) id = fs::absolute(out).lexically_normal().filename().string();
  if (id.empty()) id = fs::absolute(out).lexically_normal().parent_path().filename().string();
  m["id"] = id;
  m["kind"] = kind;
  m["default_pose"] = spec.contains("default_pose") ? spec.at("default_pose") : json{{"alpha_deg", 0.0}, {"beta_deg", 0.0}};
  write_json(m, out / "scene.json");
  return m;
}

}  // namespace cathlab::service

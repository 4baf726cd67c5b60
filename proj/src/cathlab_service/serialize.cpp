#include "cathlab/service/serialize.hpp"

#include "cathlab/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cathlab::service {

namespace {

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::MalformedFile, std::string(what) + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json mat_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Mat3 mat_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::MalformedFile, std::string(what) + ": expected 3x3 rows");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) fail(ErrorCode::MalformedFile, std::string(what) + ": expected 3x3 rows");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

json pose_to_json(const geometry::CArmPose& p) {
  return {{"alpha_deg", rad2deg(p.alpha)}, {"beta_deg", rad2deg(p.beta)}, {"sid_mm", p.sid_mm},
          {"spd_mm", p.spd_mm},           {"fd_mm", p.fd_mm},           {"n_u", p.n_u},
          {"n_v", p.n_v},                 {"table_mm", vec_json(p.table_mm)}};
}

geometry::CArmPose pose_from_json(const json& j, const geometry::CArmPose& base) {
  return guarded("pose", [&] {
    if (!j.is_object()) fail(ErrorCode::MalformedFile, "pose must be an object");
    geometry::CArmPose p = base;
    if (j.contains("alpha_deg")) p.alpha = deg2rad(j.at("alpha_deg").get<double>());
    if (j.contains("beta_deg")) p.beta = deg2rad(j.at("beta_deg").get<double>());
    if (j.contains("sid_mm")) p.sid_mm = j.at("sid_mm").get<double>();
    if (j.contains("spd_mm")) p.spd_mm = j.at("spd_mm").get<double>();
    if (j.contains("fd_mm")) p.fd_mm = j.at("fd_mm").get<double>();
    if (j.contains("n_u")) p.n_u = j.at("n_u").get<int>();
    if (j.contains("n_v")) p.n_v = j.at("n_v").get<int>();
    if (j.contains("table_mm")) p.table_mm = vec3_from(j.at("table_mm"), "pose.table_mm");
    return p;
  });
}

json points_to_json(const Polyline3& pts) {
  json a = json::array();
  for (const Vec3& p : pts) a.push_back({p.x(), p.y(), p.z()});
  return a;
}

Polyline3 points_from_json(const json& j) {
  return guarded("points", [&] {
    if (!j.is_array()) fail(ErrorCode::MalformedFile, "points must be an array");
    Polyline3 out;
    out.reserve(j.size());
    for (const json& r : j) {
      if (!r.is_array() || (r.size() != 2 && r.size() != 3))
        fail(ErrorCode::MalformedFile, "points: each row must be [x, y] or [x, y, z]");
      out.emplace_back(r[0].get<double>(), r[1].get<double>(), r.size() == 3 ? r[2].get<double>() : 0.0);
    }
    return out;
  });
}

json phantom_spec_to_json(const volume::PhantomSpec& s) {
  json prof = json::array();
  for (const auto& [f, r] : s.radius_profile) prof.push_back({f, r});
  json j = {{"dims", s.dims},
            {"spacing_mm", vec_json(s.spacing_mm)},
            {"centerline_knots", points_to_json(s.centerline_knots)},
            {"radius_profile", prof},
            {"background", s.background},
            {"vessel", s.vessel}};
  if (s.has_origin) j["origin_mm"] = vec_json(s.origin_mm);
  return j;
}

volume::PhantomSpec phantom_spec_from_json(const json& j) {
  auto s = guarded("phantom spec", [&] {
    volume::PhantomSpec s;
    if (j.contains("dims")) s.dims = j.at("dims").get<std::array<int, 3>>();
    if (j.contains("spacing_mm")) {
      const json& sp = j.at("spacing_mm");
      s.spacing_mm = sp.is_number() ? Vec3::Constant(sp.get<double>()) : vec3_from(sp, "spacing_mm");
    }
    if (j.contains("origin_mm")) {
      s.has_origin = true;
      s.origin_mm = vec3_from(j.at("origin_mm"), "origin_mm");
    }
    s.centerline_knots = points_from_json(j.at("centerline_knots"));
    if (j.contains("radius_profile")) {
      s.radius_profile.clear();
      for (const json& r : j.at("radius_profile")) s.radius_profile.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    } else if (j.contains("radius_mm")) {
      const double r = j.at("radius_mm").get<double>();
      s.radius_profile = {{0.0, r}, {1.0, r}};
    }
    if (j.contains("background")) s.background = j.at("background").get<float>();
    if (j.contains("vessel")) s.vessel = j.at("vessel").get<float>();
    return s;
  });
  s.validate();
  return s;
}

json camera_to_json(const stereo::CameraModel& c) {
  return {{"K", mat_json(c.K)}, {"D", c.D}, {"R", mat_json(c.R)}, {"t", vec_json(c.t)}};
}

stereo::CameraModel camera_from_json(const json& j) {
  auto cam = guarded("camera", [&] {
    if (j.contains("carm_pose")) return stereo::camera_from_carm(pose_from_json(j.at("carm_pose")));
    stereo::CameraModel c;
    c.K = mat_from(j.at("K"), "camera.K");
    if (j.contains("D")) c.D = j.at("D").get<std::array<double, 4>>();
    c.R = mat_from(j.at("R"), "camera.R");
    c.t = vec3_from(j.at("t"), "camera.t");
    return c;
  });
  cam.validate();
  return cam;
}

json rig_to_json(const stereo::Rig& r) { return {{"left", camera_to_json(r.left)}, {"right", camera_to_json(r.right)}}; }

stereo::Rig rig_from_json(const json& j) {
  if (!j.is_object() || !j.contains("left") || !j.contains("right"))
    fail(ErrorCode::MalformedFile, "rig: expected {left, right}");
  return {camera_from_json(j.at("left")), camera_from_json(j.at("right"))};
}

json curve_to_json(const stereo::GuidewireCurve& c) {
  return {{"degree", 3}, {"control", points_to_json(c.control())}, {"knots", c.knots()}, {"length_mm", c.length()}};
}

stereo::GuidewireCurve curve_from_json(const json& j) {
  return guarded("curve", [&] {
    Polyline3 ctrl = points_from_json(j.at("control"));
    if (j.contains("knots")) return stereo::GuidewireCurve(std::move(ctrl), j.at("knots").get<std::vector<double>>());
    return stereo::GuidewireCurve(std::move(ctrl));
  });
}

std::string curve_csv(const stereo::GuidewireCurve& c, int samples) {
  std::ostringstream os;
  os << "u,x_mm,y_mm,z_mm\n";
  char line[160];
  for (int i = 0; i < samples; ++i) {
    const double u = samples == 1 ? 0.0 : static_cast<double>(i) / (samples - 1);
    const Vec3 p = c.eval(u);
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f\n", u, p.x(), p.y(), p.z());
    os << line;
  }
  return os.str();
}

json diagnostics_to_json(const stereo::StereoDiagnostics& d) {
  return {{"mask_pixels", {d.mask_pixels1, d.mask_pixels2}},
          {"keys", {d.keys1, d.keys2}},
          {"matches", d.matches},
          {"dense_points", d.dense_points},
          {"inliers", d.inliers},
          {"ray_angle_deg", d.ray_angle_deg},
          {"degraded", d.degraded},
          {"max_inlier_distance_mm", d.max_inlier_distance},
          {"warnings", d.warnings}};
}

json report_to_json(const hemo::HemodynamicsReport& r) {
  return {{"EDV_ml", r.edv_ml},        {"ESV_ml", r.esv_ml},        {"SV_ml", r.sv_ml},
          {"EF_pct", r.ef_pct},        {"CO_l_min", r.co_l_min},    {"HR_bpm", r.mean_hr_bpm},
          {"PER_ml_s", r.per_ml_s},    {"t_PER_s", r.t_per_s},      {"PFR_ml_s", r.pfr_ml_s},
          {"t_PFR_s", r.t_pfr_s},      {"t_EDV_s", r.t_edv_s},      {"t_ESV_s", r.t_esv_s},
          {"t_AVO_s", r.t_avo_s},      {"t_AVC_s", r.t_avc_s},      {"RV_ml", r.rv_ml},
          {"SV_eff_ml", r.sv_eff_ml}};
}

json metrics_report(const std::optional<metrics::Morphology>& m, const std::optional<metrics::TrajectoryMetrics>& t) {
  auto opt = [](bool has, double v) { return has ? json(v) : json(nullptr); };
  const bool hm = m.has_value(), ht = t.has_value();
  return {{"C_L", opt(hm, hm ? m->c_l : 0.0)},
          {"C_D", opt(hm, hm ? m->c_d : 0.0)},
          {"C_T", opt(hm, hm ? m->c_t : 0.0)},
          {"C_theta", opt(hm, hm ? m->c_theta : 0.0)},
          {"C_overall", opt(hm, hm ? m->overall : 0.0)},
          {"DSC", opt(ht && t->dsc, ht && t->dsc ? *t->dsc : 0.0)},
          {"MTE", opt(ht, ht ? t->mte : 0.0)},
          {"W1", opt(ht, ht ? t->w1 : 0.0)},
          {"ME_pct", opt(ht, ht ? t->me_pct : 0.0)}};
}

}  // namespace cathlab::service

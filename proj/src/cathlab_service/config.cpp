#include "cathlab/service/config.hpp"

#include "cathlab/error.hpp"
#include "cathlab/service/serialize.hpp"

#include <cstdlib>
#include <set>

namespace cathlab::service {

using nlohmann::json;

namespace {

// Copies j[key] into out when present; records the key as known.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) fail(ErrorCode::MalformedFile, "config: section '" + section_ + "' must be an object");
  }

  template <class T>
  void operator()(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedFile, "config: " + section_ + "." + key + ": " + e.what());
    }
  }

  const json& child(const char* key) {
    known_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return it == j_.end() ? empty : *it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key())) fail(ErrorCode::MalformedFile, "config: unknown key " + section_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> known_;
};

json enhance_json(const enhance::EnhanceParams& e) {
  json j = {{"clahe_clip", e.clahe_clip},         {"clahe_grid", e.clahe_grid},
            {"log_sigmas", e.log_sigmas},         {"log_weight", e.log_weight},
            {"log_negate", e.log_negate},         {"vesselness_sigmas", e.vesselness_sigmas},
            {"vessel_gain", e.vessel_gain},       {"background_gain", e.background_gain},
            {"vessel_threshold", e.vessel_threshold}};
  j["vessel_offset"] = e.vessel_offset ? json(*e.vessel_offset) : json(nullptr);
  return j;
}

void read_enhance(const json& j, enhance::EnhanceParams& e) {
  Reader r(j, "enhance");
  r("clahe_clip", e.clahe_clip);
  r("clahe_grid", e.clahe_grid);
  r("log_sigmas", e.log_sigmas);
  r("log_weight", e.log_weight);
  r("log_negate", e.log_negate);
  r("vesselness_sigmas", e.vesselness_sigmas);
  r("vessel_gain", e.vessel_gain);
  r("background_gain", e.background_gain);
  r("vessel_threshold", e.vessel_threshold);
  const json& off = r.child("vessel_offset");
  if (off.is_number()) e.vessel_offset = off.get<double>();
  else if (off.is_null() || (off.is_object() && off.empty())) e.vessel_offset.reset();
  else fail(ErrorCode::MalformedFile, "config: enhance.vessel_offset must be a number or null");
  r.finish();
}

json stereo_json(const stereo::StereoParams& s) {
  const auto& c = s.extraction.centerline;
  const auto& m = s.matching;
  const auto& f = s.fit;
  return {{"invert", s.invert},
          {"sigmas", s.sigmas},
          {"frangi_beta", s.frangi_beta},
          {"frangi_c", s.frangi_c},
          {"degraded_angle_deg", s.degraded_angle_deg},
          {"extraction",
           {{"min_spacing", c.min_spacing},
            {"max_spacing", c.max_spacing},
            {"spacing_gain", c.spacing_gain},
            {"dense_step", c.dense_step},
            {"end_level", s.extraction.end_level},
            {"smooth_per_ctrl", s.extraction.smooth_per_ctrl}}},
          {"matching",
           {{"alpha", m.alpha},
            {"lambda", m.lambda},
            {"band_px", m.band_px},
            {"window", m.window},
            {"kappa0", m.kappa0},
            {"disparity_scale", m.disparity_scale},
            {"disparity_slope", m.disparity_slope},
            {"skip_cost", m.skip_cost}}},
          {"fit",
           {{"n_ctrl", f.n_ctrl},
            {"smoothness", f.smoothness},
            {"ransac_iterations", f.ransac_iterations},
            {"inlier_floor_mm", f.inlier_floor_mm},
            {"sigma_k", f.sigma_k},
            {"seed", f.seed}}}};
}

void read_stereo(const json& j, stereo::StereoParams& s) {
  Reader r(j, "stereo");
  r("invert", s.invert);
  r("sigmas", s.sigmas);
  r("frangi_beta", s.frangi_beta);
  r("frangi_c", s.frangi_c);
  r("degraded_angle_deg", s.degraded_angle_deg);
  {
    Reader e(r.child("extraction"), "stereo.extraction");
    auto& c = s.extraction.centerline;
    e("min_spacing", c.min_spacing);
    e("max_spacing", c.max_spacing);
    e("spacing_gain", c.spacing_gain);
    e("dense_step", c.dense_step);
    e("end_level", s.extraction.end_level);
    e("smooth_per_ctrl", s.extraction.smooth_per_ctrl);
    e.finish();
  }
  {
    Reader m(r.child("matching"), "stereo.matching");
    auto& p = s.matching;
    m("alpha", p.alpha);
    m("lambda", p.lambda);
    m("band_px", p.band_px);
    m("window", p.window);
    m("kappa0", p.kappa0);
    m("disparity_scale", p.disparity_scale);
    m("disparity_slope", p.disparity_slope);
    m("skip_cost", p.skip_cost);
    m.finish();
  }
  {
    Reader f(r.child("fit"), "stereo.fit");
    auto& p = s.fit;
    f("n_ctrl", p.n_ctrl);
    f("smoothness", p.smoothness);
    f("ransac_iterations", p.ransac_iterations);
    f("inlier_floor_mm", p.inlier_floor_mm);
    f("sigma_k", p.sigma_k);
    f("seed", p.seed);
    f.finish();
  }
  r.finish();
}

}  // namespace

json to_json(const Config& c) {
  const auto& r = c.renderer;
  const auto& s = c.service;
  return {{"renderer",
           {{"octree", r.octree},
            {"empty_threshold", r.empty_threshold},
            {"n_u", r.n_u},
            {"n_v", r.n_v},
            {"sid_mm", r.sid_mm},
            {"spd_mm", r.spd_mm},
            {"fd_mm", r.fd_mm}}},
          {"enhance", enhance_json(c.enhance)},
          {"stereo", stereo_json(c.stereo)},
          {"hemo", {{"event_frac", c.hemo.event_frac}, {"periodic", c.hemo.periodic}}},
          {"service",
           {{"host", s.host},
            {"port", s.port},
            {"stream_fps", s.stream_fps},
            {"workers", s.workers},
            {"frame_cache", s.frame_cache}}}};
}

Config config_from_json(const json& j) {
  Config c;
  Reader top(j, "config");
  {
    Reader r(top.child("renderer"), "renderer");
    r("octree", c.renderer.octree);
    r("empty_threshold", c.renderer.empty_threshold);
    r("n_u", c.renderer.n_u);
    r("n_v", c.renderer.n_v);
    r("sid_mm", c.renderer.sid_mm);
    r("spd_mm", c.renderer.spd_mm);
    r("fd_mm", c.renderer.fd_mm);
    r.finish();
  }
  read_enhance(top.child("enhance"), c.enhance);
  read_stereo(top.child("stereo"), c.stereo);
  {
    Reader h(top.child("hemo"), "hemo");
    h("event_frac", c.hemo.event_frac);
    h("periodic", c.hemo.periodic);
    h.finish();
  }
  {
    Reader s(top.child("service"), "service");
    s("host", c.service.host);
    s("port", c.service.port);
    s("stream_fps", c.service.stream_fps);
    s("workers", c.service.workers);
    s("frame_cache", c.service.frame_cache);
    s.finish();
  }
  top.finish();

  c.enhance.validate();
  require(c.renderer.n_u > 0 && c.renderer.n_v > 0, ErrorCode::InvalidArgument, "config: detector size must be > 0");
  require(c.renderer.empty_threshold >= 0.0f, ErrorCode::InvalidArgument, "config: empty_threshold must be >= 0");
  require(c.hemo.event_frac > 0.0 && c.hemo.event_frac < 1.0, ErrorCode::InvalidArgument,
          "config: hemo.event_frac must be in (0, 1)");
  require(c.service.stream_fps > 0.0, ErrorCode::InvalidArgument, "config: stream_fps must be > 0");
  require(c.service.workers >= 1, ErrorCode::InvalidArgument, "config: workers must be >= 1");
  require(c.service.port >= 0 && c.service.port < 65536, ErrorCode::InvalidArgument, "config: port out of range");
  return c;
}

Config load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

std::filesystem::path workspace_root() {
  if (const char* w = std::getenv("CATHLAB_WORKSPACE"); w && *w) return w;
  return std::filesystem::current_path();
}

Config workspace_config() {
  const auto p = workspace_root() / "cathlab.json";
  return std::filesystem::exists(p) ? load_config(p) : Config{};
}

}  // namespace cathlab::service

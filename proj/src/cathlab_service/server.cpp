#include "cathlab/service/server.hpp"

#include "cathlab/error.hpp"
#include "cathlab/service/serialize.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

namespace cathlab::service {

using nlohmann::json;

namespace {

// Bad query or body; answered with 400.
struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void send_json(httplib::Response& res, int status, const json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
  send_json(res, status, {{"error", code}, {"message", msg}});
}

double param_double(const httplib::Request& req, const char* name, double def) {
  if (!req.has_param(name)) return def;
  const std::string s = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw BadRequest("");
    return v;
  } catch (const std::exception&) {
    throw BadRequest(std::string("parameter '") + name + "' must be a finite number, got '" + s + "'");
  }
}

long param_int(const httplib::Request& req, const char* name, long def, long lo, long hi) {
  if (!req.has_param(name)) return def;
  const std::string s = req.get_param_value(name);
  long v = 0;
  try {
    std::size_t used = 0;
    v = std::stol(s, &used);
    if (used != s.size()) throw BadRequest("");
  } catch (const std::exception&) {
    throw BadRequest(std::string("parameter '") + name + "' must be an integer, got '" + s + "'");
  }
  if (v < lo || v > hi)
    throw BadRequest(std::string("parameter '") + name + "' must be in [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  return v;
}

bool param_bool(const httplib::Request& req, const char* name, bool def) {
  if (!req.has_param(name)) return def;
  const std::string s = req.get_param_value(name);
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw BadRequest(std::string("parameter '") + name + "' must be 0, 1, true or false");
}

FrameFormat param_format(const httplib::Request& req) {
  if (!req.has_param("format")) return FrameFormat::Png;
  try {
    return parse_format(req.get_param_value("format"));
  } catch (const Error& e) {
    throw BadRequest(e.what());
  }
}

}  // namespace

struct Server::Impl {
  std::shared_ptr<const Scene> scene;
  Config cfg;
  httplib::Server http;
  SessionRegistry sessions;

  std::mutex frames_mu;
  std::map<std::uint64_t, RenderRequest> frames;
  std::deque<std::uint64_t> frame_order;
  std::uint64_t next_frame = 1;

  std::uint64_t add_frame(const RenderRequest& r) {
    std::lock_guard lk(frames_mu);
    const std::uint64_t id = next_frame++;
    frames.emplace(id, r);
    frame_order.push_back(id);
    while (frame_order.size() > cfg.service.frame_cache) {
      frames.erase(frame_order.front());
      frame_order.pop_front();
    }
    return id;
  }

  std::optional<RenderRequest> frame(std::uint64_t id) {
    std::lock_guard lk(frames_mu);
    auto it = frames.find(id);
    if (it == frames.end()) return std::nullopt;
    return it->second;
  }

  // False (with a 404 written) when scene= names another scene.
  bool scene_ok(const httplib::Request& req, httplib::Response& res) const {
    if (req.has_param("scene") && req.get_param_value("scene") != scene->id()) {
      send_error(res, 404, "UnknownScene", "scene '" + req.get_param_value("scene") + "' is not loaded");
      return false;
    }
    return true;
  }

  template <class F>
  static auto wrap(Impl* self, F f);
  void routes();
  void render(const httplib::Request& req, httplib::Response& res);
  void ecg(const httplib::Request& req, httplib::Response& res);
  void post_session(const httplib::Request& req, httplib::Response& res);
  void stream(const httplib::Request& req, httplib::Response& res);
};

// Wraps a handler with the shared error mapping.
template <class F>
auto Server::Impl::wrap(Impl* self, F f) {
  return [self, f](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!self->scene_ok(req, res)) return;
      f(req, res);
    } catch (const BadRequest& e) {
      send_error(res, 400, "BadRequest", e.what());
    } catch (const Error& e) {
      const bool client = e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::MalformedFile;
      send_error(res, client ? 400 : 500, to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  };
}

void Server::Impl::render(const httplib::Request& req, httplib::Response& res) {
  const geometry::CArmPose& d = scene->default_pose();
  const double alpha = param_double(req, "alpha_deg", rad2deg(d.alpha));
  const double beta = param_double(req, "beta_deg", rad2deg(d.beta));
  const double phase = param_double(req, "phase", 0.0);
  if (phase < 0.0 || phase >= 1.0) throw BadRequest("parameter 'phase' must be in [0, 1)");
  const int w = static_cast<int>(param_int(req, "w", d.n_u, 1, 4096));
  const int h = static_cast<int>(param_int(req, "h", d.n_v, 1, 4096));
  const FrameFormat fmt = param_format(req);

  RenderRequest r;
  r.phase = phase;
  r.enhance = param_bool(req, "enhance", false);
  r.invert = param_bool(req, "invert", false);
  try {
    r.pose = render_pose(*scene, alpha, beta, w, h);
  } catch (const Error& e) {
    send_error(res, 422, to_string(e.code()), e.what());
    return;
  }
  const Bytes b = encode_frame(scene->render(r), fmt);
  res.status = 200;
  res.set_header("X-Width", std::to_string(w));
  res.set_header("X-Height", std::to_string(h));
  res.set_content(reinterpret_cast<const char*>(b.data()), b.size(), mime_type(fmt));
}

void Server::Impl::ecg(const httplib::Request& req, httplib::Response& res) {
  if (!scene->ecg()) {
    send_error(res, 404, "NoData", "scene has no ECG");
    return;
  }
  const hemo::ECGTrace& e = *scene->ecg();
  const double from = param_double(req, "from", 0.0);
  const double to = param_double(req, "to", e.duration());
  if (!(to > from)) throw BadRequest("'to' must be greater than 'from'");
  const auto n = static_cast<long>(e.samples_mv.size());
  const long i0 = std::clamp(static_cast<long>(std::ceil(from * e.rate_hz)), 0L, n);
  const long i1 = std::clamp(static_cast<long>(std::ceil(to * e.rate_hz)), i0, n);
  json peaks = json::array();
  for (double p : e.r_peaks_s)
    if (p >= from && p < to) peaks.push_back(p);
  send_json(res, 200,
            {{"rate_hz", e.rate_hz},
             {"t0_s", i0 / e.rate_hz},
             {"samples_mv", std::vector<double>(e.samples_mv.begin() + i0, e.samples_mv.begin() + i1)},
             {"r_peaks_s", peaks}});
}

void Server::Impl::post_session(const httplib::Request& req, httplib::Response& res) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    throw BadRequest(std::string("body is not JSON: ") + e.what());
  }
  if (!body.is_object()) throw BadRequest("body must be a JSON object");
  const std::string id = body.value("id", std::string("default"));
  const auto snap = sessions.get(id);
  if (!snap) {
    send_error(res, 404, "UnknownSession", "no session '" + id + "'");
    return;
  }
  std::optional<std::uint64_t> version;
  geometry::CArmPose pose = snap->pose;
  Playback playback = snap->playback;
  try {
    if (body.contains("version")) version = body.at("version").get<std::uint64_t>();
    if (body.contains("pose")) pose = pose_from_json(body.at("pose"), snap->pose);
    if (body.contains("playback")) {
      const json& p = body.at("playback");
      if (p.contains("state")) {
        const std::string st = p.at("state").get<std::string>();
        if (st != "running" && st != "paused") throw BadRequest("playback.state must be running or paused");
        playback.running = st == "running";
      }
      if (p.contains("offset_s")) playback.offset_s = p.at("offset_s").get<double>();
    }
  } catch (const json::exception& e) {
    throw BadRequest(e.what());
  } catch (const Error& e) {
    throw BadRequest(e.what());
  }
  try {
    pose.validate();
  } catch (const Error& e) {
    send_error(res, 422, to_string(e.code()), e.what());
    return;
  }
  Session out;
  const Outcome o = sessions.mutate(
      id, version,
      [&](Session& s) {
        s.pose = pose;
        s.playback = playback;
      },
      &out);
  if (o == Outcome::Conflict) {
    json j = {{"error", "Conflict"}, {"message", "session was modified concurrently"}};
    if (auto cur = sessions.get(id)) j["session"] = session_to_json(*cur);
    send_json(res, 409, j);
  } else if (o == Outcome::NotFound) {
    send_error(res, 404, "UnknownSession", "no session '" + id + "'");
  } else {
    send_json(res, 200, session_to_json(out));
  }
}

void Server::Impl::stream(const httplib::Request& req, httplib::Response& res) {
  const double fps = param_double(req, "fps", cfg.service.stream_fps);
  if (fps <= 0.0 || fps > 240.0) throw BadRequest("parameter 'fps' must be in (0, 240]");
  const long frames = param_int(req, "frames", 0, 0, 1000000);  // 0: until the client leaves
  const std::string sid = req.has_param("session") ? req.get_param_value("session") : "default";
  if (!sessions.get(sid)) {
    send_error(res, 404, "UnknownSession", "no session '" + sid + "'");
    return;
  }
  const auto start = std::chrono::steady_clock::now();
  auto k = std::make_shared<long>(0);
  res.set_header("Cache-Control", "no-cache");
  res.set_chunked_content_provider("text/event-stream", [this, fps, frames, sid, start, k](std::size_t,
                                                                                          httplib::DataSink& sink) {
    if (frames > 0 && *k >= frames) {
      sink.done();
      return true;
    }
    const double t = *k / fps;
    std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                              std::chrono::duration<double>(t)));
    const auto s = sessions.get(sid);
    if (!s) return false;
    const double t_ecg = t + s->playback.offset_s;
    RenderRequest r;
    r.pose = s->pose;
    r.phase = scene->clock().ecg_phase(t_ecg);
    const cardiac::ModelPhase mp = scene->clock().map_phase(r.phase);
    const std::uint64_t id = add_frame(r);
    sessions.note_frame(sid, id);
    const json ev = {{"id", id}, {"seq", *k}, {"t", t_ecg}, {"phase", r.phase}, {"rr_pct", mp.rr_pct}};
    const std::string msg = "event: frame\ndata: " + ev.dump() + "\n\n";
    ++*k;
    return sink.write(msg.data(), msg.size());
  });
}

void Server::Impl::routes() {
  http.Get("/api/scene", wrap(this, [this](const httplib::Request&, httplib::Response& res) {
             send_json(res, 200, scene->summary());
           }));
  http.Get("/api/render", wrap(this, [this](const httplib::Request& q, httplib::Response& r) { render(q, r); }));
  http.Get("/api/ecg", wrap(this, [this](const httplib::Request& q, httplib::Response& r) { ecg(q, r); }));
  http.Get("/api/hemodynamics", wrap(this, [this](const httplib::Request&, httplib::Response& res) {
             if (!scene->hemodynamics()) send_error(res, 404, "NoData", "scene has no ventricle meshes");
             else send_json(res, 200, report_to_json(*scene->hemodynamics()));
           }));
  http.Get("/api/session", wrap(this, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.has_param("id") ? req.get_param_value("id") : "default";
             if (auto s = sessions.get(id)) send_json(res, 200, session_to_json(*s));
             else send_error(res, 404, "UnknownSession", "no session '" + id + "'");
           }));
  http.Post("/api/session",
            wrap(this, [this](const httplib::Request& q, httplib::Response& r) { post_session(q, r); }));
  http.Get("/api/stream", wrap(this, [this](const httplib::Request& q, httplib::Response& r) { stream(q, r); }));
  http.Get(R"(/api/frame/(\d+))", wrap(this, [this](const httplib::Request& req, httplib::Response& res) {
             const FrameFormat fmt = param_format(req);
             const auto r = frame(std::stoull(req.matches[1].str()));
             if (!r) {
               send_error(res, 404, "UnknownFrame", "frame " + req.matches[1].str() + " is not cached");
               return;
             }
             const Bytes b = encode_frame(scene->render(*r), fmt);
             res.set_header("X-Phase", std::to_string(r->phase));
             res.set_content(reinterpret_cast<const char*>(b.data()), b.size(), mime_type(fmt));
           }));
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_error(res, 500, "Internal", "unhandled exception");
  });
}

Server::Server(std::shared_ptr<const Scene> scene, Config cfg, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  require(scene != nullptr, ErrorCode::InvalidArgument, "server needs a scene");
  impl_->scene = std::move(scene);
  impl_->cfg = std::move(cfg);
  const int workers = impl_->cfg.service.workers;
  impl_->http.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  impl_->sessions.create("default", impl_->scene->id(), impl_->scene->default_pose());
  impl_->routes();
  if (static_dir && !impl_->http.set_mount_point("/", static_dir->string()))
    fail(ErrorCode::Io, "static directory not found: " + static_dir->string());
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    require(p > 0, ErrorCode::Io, "cannot bind " + host);
    return p;
  }
  require(impl_->http.bind_to_port(host, port), ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }
void Server::stop() {
  if (impl_) impl_->http.stop();
}
bool Server::running() const { return impl_->http.is_running(); }
SessionRegistry& Server::sessions() { return impl_->sessions; }

}  // namespace cathlab::service

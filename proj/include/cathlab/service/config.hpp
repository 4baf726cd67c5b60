#pragma once

// Workspace configuration: one JSON file with the sections renderer,
// enhance, stereo, hemo and service. Missing keys keep their defaults;
// unknown keys are rejected so typos do not pass silently.

#include "cathlab/guidewire_stereo.hpp"
#include "cathlab/image_enhance.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace cathlab::service {

struct RendererConfig {
  bool octree = true;
  float empty_threshold = 0.0f;
  int n_u = 512, n_v = 512;
  double sid_mm = 1200.0, spd_mm = 800.0, fd_mm = 400.0;
};

struct HemoConfig {
  double event_frac = 0.05;   // valve-event threshold, fraction of |PER|
  bool periodic = true;       // close the volume curve over one R-R interval
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  double stream_fps = 5.0;
  int workers = 4;
  std::size_t frame_cache = 256;  // frame ids kept for /api/frame
};

struct Config {
  RendererConfig renderer;
  enhance::EnhanceParams enhance;
  stereo::StereoParams stereo;
  HemoConfig hemo;
  ServiceConfig service;
};

nlohmann::json to_json(const Config& c);
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);

// CATHLAB_WORKSPACE, or the current directory.
std::filesystem::path workspace_root();
// <workspace>/cathlab.json when present, defaults otherwise.
Config workspace_config();

}  // namespace cathlab::service

#pragma once

// HTTP front end for one loaded scene.
//
//   GET  /api/scene                      metadata
//   GET  /api/render?alpha_deg&beta_deg&phase&enhance&invert&w&h&format
//   GET  /api/ecg?from&to                samples and R peaks in [from, to)
//   GET  /api/hemodynamics
//   GET  /api/session?id                 POST /api/session {pose, version, id}
//   GET  /api/stream?fps&frames&session  server-sent events {id, phase, t}
//   GET  /api/frame/<id>?format
//
// 400 bad parameters, 404 unknown scene or missing data, 409 concurrent
// session mutation, 422 pose out of range. Every endpoint accepts an
// optional scene=<id> which must name the loaded scene.

#include "cathlab/service/config.hpp"
#include "cathlab/service/scene.hpp"
#include "cathlab/service/session.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace cathlab::service {

class Server {
 public:
  Server(std::shared_ptr<const Scene> scene, Config cfg, std::optional<std::filesystem::path> static_dir = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

  SessionRegistry& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cathlab::service

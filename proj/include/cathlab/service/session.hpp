#pragma once

// Viewer sessions. Mutations are optimistic: a request that names the
// version it last saw fails with Conflict once another mutation has moved
// the version on, and a mutation that races one already in progress fails
// the same way instead of queueing behind it.

#include "cathlab/carm_geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace cathlab::service {

struct Playback {
  bool running = false;
  double offset_s = 0.0;  // ECG time = wall time - offset
};

struct Session {
  std::string id;
  std::string scene_id;
  geometry::CArmPose pose;
  Playback playback;
  std::uint64_t version = 0;
  std::uint64_t last_frame = 0;
};

nlohmann::json session_to_json(const Session& s);

enum class Outcome { Ok, Conflict, NotFound };

class SessionRegistry {
 public:
  Session create(const std::string& id, const std::string& scene_id, const geometry::CArmPose& pose);
  std::optional<Session> get(const std::string& id) const;

  // Applies f to a copy and publishes it with version + 1. f may throw; the
  // session is then left untouched.
  Outcome mutate(const std::string& id, std::optional<std::uint64_t> expected_version,
                 const std::function<void(Session&)>& f, Session* out = nullptr);

  // Bookkeeping that does not change the version.
  void note_frame(const std::string& id, std::uint64_t frame);

 private:
  struct Slot {
    std::mutex write;  // held for the whole mutation
    Session s;
  };
  mutable std::mutex mu_;  // guards the map and every Slot::s read
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace cathlab::service

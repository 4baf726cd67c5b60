#include "cathlab/service/session.hpp"

#include "cathlab/service/serialize.hpp"

namespace cathlab::service {

nlohmann::json session_to_json(const Session& s) {
  return {{"id", s.id},
          {"scene", s.scene_id},
          {"pose", pose_to_json(s.pose)},
          {"version", s.version},
          {"playback", {{"state", s.playback.running ? "running" : "paused"}, {"offset_s", s.playback.offset_s}}},
          {"last_frame", s.last_frame}};
}

Session SessionRegistry::create(const std::string& id, const std::string& scene_id, const geometry::CArmPose& pose) {
  pose.validate();
  auto slot = std::make_shared<Slot>();
  slot->s.id = id;
  slot->s.scene_id = scene_id;
  slot->s.pose = pose;
  std::lock_guard lk(mu_);
  slots_[id] = slot;
  return slot->s;
}

std::optional<Session> SessionRegistry::get(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) return std::nullopt;
  return it->second->s;
}

Outcome SessionRegistry::mutate(const std::string& id, std::optional<std::uint64_t> expected_version,
                                const std::function<void(Session&)>& f, Session* out) {
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lk(mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) return Outcome::NotFound;
    slot = it->second;
  }
  std::unique_lock w(slot->write, std::try_to_lock);
  if (!w.owns_lock()) return Outcome::Conflict;

  Session next;
  {
    std::lock_guard lk(mu_);
    if (expected_version && *expected_version != slot->s.version) return Outcome::Conflict;
    next = slot->s;
  }
  f(next);
  next.pose.validate();
  ++next.version;
  std::lock_guard lk(mu_);
  next.last_frame = slot->s.last_frame;
  slot->s = next;
  if (out) *out = next;
  return Outcome::Ok;
}

void SessionRegistry::note_frame(const std::string& id, std::uint64_t frame) {
  std::lock_guard lk(mu_);
  auto it = slots_.find(id);
  if (it != slots_.end()) it->second->s.last_frame = frame;
}

}  // namespace cathlab::service

#pragma once

// A scene is a directory: scene.json plus per-phase volumes (raw float32
// with JSON sidecars), optional phase-to-phase deformation fields, an
// optional ECG (ecg.csv) and an optional ventricle mesh sequence.
//
// scene.json:
//   { "id": "...",
//     "phases": ["phase_00.json", ...],
//     "fields": ["field_00.json", ...],            optional, phase k -> k + 1
//     "ecg": "ecg.csv",                            optional
//     "meshes": { "dir": "meshes", "times_s": [...], "cycle_s": 1.0 },  optional
//     "default_pose": { "alpha_deg": 0, ... },
//     "ground_truth": { "centerlines": [[[x, y, z], ...], ...] },       optional
//     "enhance": { ... } }                         optional, overrides config

#include "cathlab/cardiac_dynamics.hpp"
#include "cathlab/drr_renderer.hpp"
#include "cathlab/hemodynamics.hpp"
#include "cathlab/service/config.hpp"
#include "cathlab/service/encode.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cathlab::service {

struct RenderRequest {
  geometry::CArmPose pose;
  double phase = 0.0;   // ECG phase in [0, 1)
  bool enhance = false;
  bool invert = false;  // display polarity: vessels dark on bright
};

// ---- ventricle mesh sequences ----

struct MeshSequence {
  std::vector<volume::SurfaceMesh> meshes;
  std::vector<double> times_s;   // may be empty: spread uniformly over the cycle
  std::optional<double> cycle_s;
};

// Every *.obj in the directory, sorted by file name. A times.json beside
// them ({"times_s": [...], "cycle_s": c} or a bare array) is honoured.
MeshSequence load_mesh_sequence(const std::filesystem::path& dir);

// Volumes per mesh, a periodic spline closed over one cycle, then the
// report. The heart rate comes from the ECG when given, else from the cycle.
hemo::HemodynamicsReport mesh_sequence_report(const MeshSequence& seq, const hemo::ECGTrace* ecg,
                                              const HemoConfig& cfg);

class Scene {
 public:
  static std::shared_ptr<Scene> load(const std::filesystem::path& dir, const Config& cfg);

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }
  int n_phases() const { return static_cast<int>(volumes_.size()); }
  const volume::AttenuationVolume& phase_volume(int k) const { return volumes_.at(k); }
  bool has_fields() const { return !fields_.empty(); }
  const std::optional<hemo::ECGTrace>& ecg() const { return ecg_; }
  const cardiac::PhaseClock& clock() const { return clock_; }
  const std::optional<hemo::HemodynamicsReport>& hemodynamics() const { return hemo_; }
  const geometry::CArmPose& default_pose() const { return default_pose_; }
  const enhance::EnhanceParams& enhance_params() const { return enhance_; }

  // Volume for an ECG phase: warped along the field between the bracketing
  // phases when fields exist, otherwise the nearest phase.
  volume::AttenuationVolume volume_at(double ecg_phase) const;
  // Raw line integrals, or the enhanced image in [0, 1].
  Image2D render(const RenderRequest& r) const;

  nlohmann::json summary() const;

 private:
  std::string id_;
  std::filesystem::path dir_;
  Config cfg_;
  enhance::EnhanceParams enhance_;
  std::vector<volume::AttenuationVolume> volumes_;
  std::vector<drr::EmptySpaceOctree> octrees_;
  std::vector<cardiac::DeformationField> fields_;
  std::optional<hemo::ECGTrace> ecg_;
  cardiac::PhaseClock clock_;
  std::optional<hemo::HemodynamicsReport> hemo_;
  geometry::CArmPose default_pose_;
};

// Pose for a render: scene default geometry with the given angles and
// detector size, validated.
geometry::CArmPose render_pose(const Scene& s, double alpha_deg, double beta_deg, int w, int h);

// ---- scene generation ----

// {"kind": "tube", ...PhantomSpec fields} or
// {"kind": "beating_tube", "phases": 8, "dims": [...], "spacing_mm": s,
//  "bpm": 60, "beats": 10, "register": false, "edv_ml": 150, "esv_ml": 50, "mesh_phases": 20}
// Writes a loadable scene directory and returns its manifest.
nlohmann::json generate_scene(const nlohmann::json& spec, const std::filesystem::path& out);

}  // namespace cathlab::service

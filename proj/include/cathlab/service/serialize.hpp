#pragma once

// JSON forms of the engine types. Angles are stored in degrees.

#include "cathlab/carm_geometry.hpp"
#include "cathlab/consistency_metrics.hpp"
#include "cathlab/guidewire_stereo.hpp"
#include "cathlab/hemodynamics.hpp"
#include "cathlab/volume_data.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace cathlab::service {

using nlohmann::json;

json read_json(const std::filesystem::path& path);
void write_json(const json& j, const std::filesystem::path& path);

json pose_to_json(const geometry::CArmPose& p);
// Fields missing from j are taken from `base`.
geometry::CArmPose pose_from_json(const json& j, const geometry::CArmPose& base = {});

json points_to_json(const Polyline3& pts);
Polyline3 points_from_json(const json& j);  // accepts [x, y] or [x, y, z] rows

json phantom_spec_to_json(const volume::PhantomSpec& s);
volume::PhantomSpec phantom_spec_from_json(const json& j);

json camera_to_json(const stereo::CameraModel& c);
stereo::CameraModel camera_from_json(const json& j);  // {K, D, R, t} or {carm_pose: {...}}
json rig_to_json(const stereo::Rig& r);
stereo::Rig rig_from_json(const json& j);

json curve_to_json(const stereo::GuidewireCurve& c);
stereo::GuidewireCurve curve_from_json(const json& j);
std::string curve_csv(const stereo::GuidewireCurve& c, int samples);
json diagnostics_to_json(const stereo::StereoDiagnostics& d);

json report_to_json(const hemo::HemodynamicsReport& r);

// Keys C_L, C_D, C_T, C_theta, C_overall, DSC, MTE, W1, ME_pct; absent
// quantities are null.
json metrics_report(const std::optional<metrics::Morphology>& m, const std::optional<metrics::TrajectoryMetrics>& t);

}  // namespace cathlab::service

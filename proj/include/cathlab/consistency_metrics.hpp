#pragma once

#include "cathlab/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cathlab::metrics {

struct VesselDescriptor {
  double length = 0.0;             // path length, mm or px
  std::vector<double> diameters;   // D(i) at matching stations
  double tortuosity = 0.0;         // L_path / L_chord
  std::optional<double> bifurcation_deg;

  void validate() const;
};

// Length and tortuosity from a centerline polyline.
VesselDescriptor describe_vessel(const Polyline3& centerline, std::vector<double> diameters,
                                 std::optional<double> bifurcation_deg = {});

// Angle between the daughter tangents taken `distal` along each branch
// from the shared bifurcation point (first sample of both branches).
double bifurcation_angle_deg(const Polyline3& branch_a, const Polyline3& branch_b, double distal = 5.0);

struct Morphology {
  double c_l = 0.0, c_d = 0.0, c_t = 0.0, c_theta = 0.0, overall = 0.0;
};

// Per-metric percentages clamped to [0, 100]. When neither descriptor has a
// bifurcation angle C_theta is 100.
Morphology morphological_consistency(const VesselDescriptor& virt, const VesselDescriptor& real);

using Mask = std::vector<std::uint8_t>;

double dice(const Mask& x, const Mask& y);

// Evenly spaced by arc length, first and last points kept.
Polyline3 resample(const Polyline3& pts, int n);
Polyline3 lift(const Polyline2& pts);

double mean_trajectory_error(const Polyline3& p, const Polyline3& q);
double max_error_pct(const Polyline3& p, const Polyline3& q, double length);

// Exact W1 between uniform empirical measures of equal size (N <= 256).
double wasserstein(const Polyline3& p, const Polyline3& q);

// Minimum-cost perfect assignment on a square cost matrix (row -> column).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct TrajectoryMetrics {
  std::optional<double> dsc;
  double mte = 0.0, w1 = 0.0, me_pct = 0.0;
};

// Both curves are arc-length resampled to n points first; the guidewire
// length defaults to the reference (q) path length.
TrajectoryMetrics trajectory_metrics(const Polyline3& p, const Polyline3& q, int n = 100,
                                     std::optional<double> length = {}, const Mask* x = nullptr,
                                     const Mask* y = nullptr);

}  // namespace cathlab::metrics

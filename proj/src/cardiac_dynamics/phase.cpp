#include "cathlab/cardiac_dynamics.hpp"
#include "cathlab/error.hpp"

#include <algorithm>
#include <cmath>

namespace cathlab::cardiac {

PhaseClock::PhaseClock(std::vector<double> peaks, int n_phases, double start_pct, double end_pct)
    : peaks_(std::move(peaks)), n_phases_(n_phases), start_pct_(start_pct), end_pct_(end_pct) {
  require(peaks_.size() >= 2, ErrorCode::InsufficientData, "phase clock needs at least 2 R peaks");
  for (std::size_t i = 1; i < peaks_.size(); ++i)
    require(peaks_[i] > peaks_[i - 1], ErrorCode::InvalidArgument, "R peaks must be strictly increasing");
  require(n_phases_ >= 2, ErrorCode::InvalidArgument, "need at least 2 model phases");
  require(end_pct_ > start_pct_, ErrorCode::InvalidArgument, "model phase span must be increasing");
}

double PhaseClock::ecg_phase(double t) const {
  std::size_t k;
  if (t < peaks_.front()) {
    k = 0;
  } else if (t >= peaks_.back()) {
    k = peaks_.size() - 2;
  } else {
    k = static_cast<std::size_t>(std::upper_bound(peaks_.begin(), peaks_.end(), t) - peaks_.begin()) - 1;
  }
  // outside the recorded peaks the nearest R-R interval is extended periodically
  const double rri = peaks_[k + 1] - peaks_[k];
  double ph = (t - peaks_[k]) / rri;
  ph -= std::floor(ph);
  return ph >= 1.0 ? 0.0 : ph;
}

ModelPhase PhaseClock::map_phase(double ecg_phase) const {
  require(ecg_phase >= 0.0 && ecg_phase < 1.0, ErrorCode::InvalidArgument, "ECG phase must be in [0, 1)");
  ModelPhase m;
  m.ecg_phase = ecg_phase;
  m.rr_pct = start_pct_ + ecg_phase * (end_pct_ - start_pct_);
  const double pos = ecg_phase * (n_phases_ - 1);
  m.index = std::min(static_cast<int>(std::floor(pos)), n_phases_ - 2);
  m.fraction = pos - m.index;
  return m;
}

ModelPhase PhaseClock::model_phase_at(double t) const { return map_phase(ecg_phase(t)); }

PhaseClock phase_clock(const hemo::ECGTrace& ecg, int n_phases) {
  std::vector<double> peaks = ecg.r_peaks_s;
  if (peaks.size() < 2) peaks = hemo::detect_r_peaks(ecg.samples_mv, ecg.rate_hz);
  return PhaseClock(std::move(peaks), n_phases);
}

Polyline3 BeatingTube::knots(double phase) const {
  require(std::isfinite(phase), ErrorCode::InvalidArgument, "phase must be finite");
  const double c = 0.5 * (1.0 - std::cos(2.0 * kPi * phase));  // 0 at end diastole, 1 half way
  const double half = 0.5 * length_mm * (1.0 - axial_swing * c);
  const double bend = bend_mm * (1.0 + bend_swing * c);
  Polyline3 k;
  constexpr int n = 9;
  for (int i = 0; i < n; ++i) {
    const double s = -1.0 + 2.0 * i / (n - 1);
    k.emplace_back(bend * (1.0 - s * s) - 0.5 * bend, 0.4 * bend * std::sin(kPi * s), half * s);
  }
  return k;
}

volume::PhantomSpec BeatingTube::spec(double phase, std::array<int, 3> dims, Vec3 spacing) const {
  volume::PhantomSpec s;
  s.dims = dims;
  s.spacing_mm = spacing;
  s.centerline_knots = knots(phase);
  s.radius_profile = {{0.0, radius_mm}, {1.0, radius_mm}};
  return s;
}

}  // namespace cathlab::cardiac

#pragma once

#include "cathlab/types.hpp"
#include "cathlab/volume_data.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace cathlab::hemo {

// Closed-surface volume in ml (mesh in mm). Throws NotClosed for open
// meshes and Orientation when the flux volume comes out negative.
double mesh_volume(const volume::SurfaceMesh& mesh);

enum class SplineEnds {
  Natural,   // zero second derivative at both ends
  Periodic,  // first and last sample close one cycle; value, slope and curvature wrap
};

// Cubic spline through (time, volume) samples.
class VolumeTimeCurve {
 public:
  VolumeTimeCurve() = default;
  // cycle_s defaults to the sampled span.
  VolumeTimeCurve(std::vector<double> times, std::vector<double> volumes, std::optional<double> cycle_s = {},
                  SplineEnds ends = SplineEnds::Natural);

  const std::vector<double>& times() const { return t_; }
  const std::vector<double>& volumes() const { return v_; }
  double t0() const { return t_.front(); }
  double t1() const { return t_.back(); }
  double cycle() const { return cycle_; }
  SplineEnds ends() const { return ends_; }

  double value(double t) const;
  double slope(double t) const;
  double curvature(double t) const;
  // Map any time onto the sampled span, periodically with the cycle length.
  double wrap(double t) const;

 private:
  std::size_t interval(double t) const;

  std::vector<double> t_, v_, m_;  // m_: second derivatives at the knots
  double cycle_ = 0.0;
  SplineEnds ends_ = SplineEnds::Natural;
};

VolumeTimeCurve build_curve(const std::vector<double>& times, const std::vector<double>& volumes,
                            SplineEnds ends = SplineEnds::Natural);

struct Extrema {
  double edv = 0.0, esv = 0.0;
  double t_edv = 0.0, t_esv = 0.0;
};
Extrema edv_esv(const VolumeTimeCurve& curve);

struct StrokeOutput {
  double sv_ml = 0.0;
  double co_l_min = 0.0;
  double ef_pct = 0.0;
};
StrokeOutput stroke_cardiac_output(double edv, double esv, double hr_bpm);

struct Sample {
  double t = 0.0;
  double value = 0.0;
};

// Q(t) = -dV/dt on [t_avo, t_avc], n evenly spaced samples.
std::vector<Sample> flow_rate(const VolumeTimeCurve& curve, double t_avo, double t_avc, int n = 401);

struct PeakRates {
  double per = 0.0, t_per = 0.0;  // most negative dV/dt in the ejection window
  double pfr = 0.0, t_pfr = 0.0;  // largest dV/dt outside it
};
PeakRates peak_rates(const VolumeTimeCurve& curve, double t_avo, double t_avc);

struct EjectionWindow {
  double t_avo = 0.0, t_avc = 0.0;
};
// Walks out from the steepest descent while |dV/dt| stays above frac * |PER|.
EjectionWindow ejection_window(const VolumeTimeCurve& curve, double frac = 0.05);

// Enclosed area (cm^2) of a closed loop in mm, projected on its best-fit plane.
double effective_orifice_area(const Polyline3& loop);

struct Regurgitation {
  double rv_ml = 0.0;
  double sv_eff_ml = 0.0;
};
// Trapezoid integral of max(0, Q) over the samples.
Regurgitation regurgitant_volume(const std::vector<Sample>& q_diastole, double sv_ml);
// Q = -dV/dt sampled over the diastolic window [t_avc, t_avo + cycle].
std::vector<Sample> diastolic_flow(const VolumeTimeCurve& curve, double t_avo, double t_avc, int n = 801);

// Cross-sectional area profiles A(z) in cm^2 on a shared z grid in cm.
struct AreaProfile {
  std::vector<double> z_cm;
  std::vector<double> area_sys_cm2;
  std::vector<double> area_dia_cm2;
};
double aortic_distension(const AreaProfile& a, double z1, double z2);

// ---- ECG ----

struct ECGTrace {
  double rate_hz = 500.0;
  std::vector<double> samples_mv;
  std::vector<double> r_peaks_s;

  double duration() const { return samples_mv.empty() ? 0.0 : samples_mv.size() / rate_hz; }
  void validate() const;
};

struct SyntheticECG {
  double bpm = 60.0;
  double duration_s = 10.0;
  double rate_hz = 500.0;
  double snr_db = 30.0;   // signal power over white-noise power
  double rr_jitter = 0.0; // relative uniform jitter on each R-R interval
  unsigned seed = 1;
};
// PQRST beats from Gaussian waves; the returned trace carries the true R times.
ECGTrace synthetic_ecg(const SyntheticECG& p);
// Same, with explicit R-peak times.
ECGTrace synthetic_ecg_at(const std::vector<double>& r_times, double duration_s, double rate_hz, double snr_db,
                          unsigned seed);

std::vector<double> detect_r_peaks(const std::vector<double>& samples_mv, double rate_hz);

struct HeartRates {
  std::vector<double> rri_s;
  std::vector<double> instantaneous_bpm;
  double mean_bpm = 0.0;
};
HeartRates heart_rates(const std::vector<double>& peaks_s);

// CSV with a header line; columns time_s, mv.
void save_ecg_csv(const ECGTrace& ecg, const std::filesystem::path& path);
ECGTrace load_ecg_csv(const std::filesystem::path& path);

// ---- report ----

struct HemodynamicsReport {
  double edv_ml = 0.0, esv_ml = 0.0, sv_ml = 0.0, ef_pct = 0.0, co_l_min = 0.0;
  double per_ml_s = 0.0, t_per_s = 0.0, pfr_ml_s = 0.0, t_pfr_s = 0.0;
  double t_edv_s = 0.0, t_esv_s = 0.0;
  double t_avo_s = 0.0, t_avc_s = 0.0;
  double rv_ml = 0.0, sv_eff_ml = 0.0;
  double mean_hr_bpm = 0.0;
};

struct ReportOptions {
  double event_frac = 0.05;
  std::optional<double> t_avo, t_avc;  // override the detected valve events
};

HemodynamicsReport analyze(const VolumeTimeCurve& curve, double hr_bpm, const ReportOptions& opt = {});

// Report from EDV/ESV/HR alone; curve-derived fields stay zero.
HemodynamicsReport summary_report(double edv, double esv, double hr_bpm);

}  // namespace cathlab::hemo

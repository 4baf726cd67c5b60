#include "cathlab/error.hpp"
#include "cathlab/hemodynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace cathlab::hemo {

void ECGTrace::validate() const {
  require(rate_hz > 0.0, ErrorCode::InvalidArgument, "ECG sample rate must be positive");
  for (std::size_t i = 1; i < r_peaks_s.size(); ++i)
    require(r_peaks_s[i] > r_peaks_s[i - 1], ErrorCode::InvalidArgument, "R-peak times must be strictly increasing");
}

namespace {

struct Wave {
  double offset_s, amp_mv, width_s;
};

// PQRST relative to the R apex; the T wave moves with the R-R interval.
std::vector<Wave> beat_waves(double rr) {
  return {{-0.20, 0.15, 0.025}, {-0.03, -0.12, 0.010}, {0.0, 1.0, 0.012},
          {0.03, -0.25, 0.010}, {0.30 * std::sqrt(rr), 0.30, 0.050}};
}

}  // namespace

ECGTrace synthetic_ecg_at(const std::vector<double>& r_times, double duration_s, double rate_hz, double snr_db,
                          unsigned seed) {
  require(duration_s > 0.0 && rate_hz > 0.0, ErrorCode::InvalidArgument, "ECG duration and rate must be positive");
  ECGTrace ecg;
  ecg.rate_hz = rate_hz;
  ecg.r_peaks_s = r_times;
  ecg.validate();
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  ecg.samples_mv.assign(n, 0.0);
  for (std::size_t b = 0; b < r_times.size(); ++b) {
    const double rr = b + 1 < r_times.size() ? r_times[b + 1] - r_times[b]
                                             : (b > 0 ? r_times[b] - r_times[b - 1] : 1.0);
    for (const Wave& w : beat_waves(rr)) {
      const double c = r_times[b] + w.offset_s;
      const auto lo = static_cast<long>(std::floor((c - 5 * w.width_s) * rate_hz));
      const auto hi = static_cast<long>(std::ceil((c + 5 * w.width_s) * rate_hz));
      for (long i = std::max(0L, lo); i <= std::min<long>(static_cast<long>(n) - 1, hi); ++i) {
        const double d = (i / rate_hz - c) / w.width_s;
        ecg.samples_mv[static_cast<std::size_t>(i)] += w.amp_mv * std::exp(-0.5 * d * d);
      }
    }
  }
  double power = 0.0;
  for (double s : ecg.samples_mv) power += s * s;
  power /= std::max<std::size_t>(n, 1);
  if (std::isfinite(snr_db) && power > 0.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(power / std::pow(10.0, snr_db / 10.0)));
    for (double& s : ecg.samples_mv) s += noise(rng);
  }
  return ecg;
}

ECGTrace synthetic_ecg(const SyntheticECG& p) {
  require(p.bpm > 0.0, ErrorCode::InvalidArgument, "bpm must be positive");
  require(p.rr_jitter >= 0.0 && p.rr_jitter < 0.5, ErrorCode::InvalidArgument, "R-R jitter must be in [0, 0.5)");
  std::mt19937 rng(p.seed ^ 0x9e3779b9u);
  std::uniform_real_distribution<double> jit(-p.rr_jitter, p.rr_jitter);
  const double rr = 60.0 / p.bpm;
  std::vector<double> peaks;
  // first beat late enough that its P wave is inside the record
  for (double t = 0.35; t < p.duration_s - 0.35; t += rr * (1.0 + jit(rng))) peaks.push_back(t);
  return synthetic_ecg_at(peaks, p.duration_s, p.rate_hz, p.snr_db, p.seed);
}

namespace {

// RBJ biquad, run forward then backward for zero phase.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butter2(double fc, double fs, bool highpass) {
  const double w = 2.0 * kPi * fc / fs;
  const double alpha = std::sin(w) / (2.0 * std::sqrt(0.5));
  const double cw = std::cos(w);
  const double a0 = 1.0 + alpha;
  if (highpass) return {(1 + cw) / 2 / a0, -(1 + cw) / a0, (1 + cw) / 2 / a0, -2 * cw / a0, (1 - alpha) / a0};
  return {(1 - cw) / 2 / a0, (1 - cw) / a0, (1 - cw) / 2 / a0, -2 * cw / a0, (1 - alpha) / a0};
}

void run(const Biquad& f, std::vector<double>& x) {
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = f.b0 * v + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void filtfilt(const Biquad& f, std::vector<double>& x) {
  run(f, x);
  std::reverse(x.begin(), x.end());
  run(f, x);
  std::reverse(x.begin(), x.end());
}

}  // namespace

std::vector<double> detect_r_peaks(const std::vector<double>& samples, double rate_hz) {
  require(rate_hz >= 100.0, ErrorCode::InvalidArgument, "R-peak detection needs at least 100 Hz");
  require(samples.size() >= static_cast<std::size_t>(2.0 * rate_hz), ErrorCode::InsufficientData,
          "R-peak detection needs at least 2 s of signal");
  const auto n = static_cast<long>(samples.size());

  std::vector<double> bp = samples;
  const double mean = [&] {
    double s = 0.0;
    for (double v : bp) s += v;
    return s / static_cast<double>(bp.size());
  }();
  for (double& v : bp) v -= mean;
  filtfilt(butter2(5.0, rate_hz, true), bp);
  filtfilt(butter2(std::min(25.0, 0.45 * rate_hz), rate_hz, false), bp);

  // squared derivative, smoothed over 40 ms so each QRS gives one hump
  std::vector<double> e(samples.size(), 0.0);
  for (long i = 1; i + 1 < n; ++i) {
    const double d = 0.5 * (bp[i + 1] - bp[i - 1]) * rate_hz;
    e[i] = d * d;
  }
  const long half = std::max(1L, std::lround(0.02 * rate_hz));
  std::vector<double> prefix(samples.size() + 1, 0.0);
  for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + e[i];
  std::vector<double> en(samples.size());
  for (long i = 0; i < n; ++i) {
    const long a = std::max(0L, i - half), b = std::min(n, i + half + 1);
    en[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
  }

  // adaptive threshold: half the rolling max over +-1 s
  const long win = std::lround(rate_hz);
  std::vector<double> thr(samples.size());
  for (long i = 0; i < n; ++i) {
    double m = 0.0;
    for (long j = std::max(0L, i - win); j < std::min(n, i + win + 1); ++j) m = std::max(m, en[j]);
    thr[i] = 0.5 * m;
  }

  std::vector<long> cand;
  for (long i = 1; i + 1 < n; ++i)
    if (en[i] > thr[i] && en[i] > 0.0 && en[i] >= en[i - 1] && en[i] > en[i + 1]) cand.push_back(i);
  std::sort(cand.begin(), cand.end(), [&](long a, long b) { return en[a] != en[b] ? en[a] > en[b] : a < b; });
  const long refractory = std::lround(0.2 * rate_hz);
  std::vector<long> kept;
  for (long c : cand) {
    bool clear = true;
    for (long k : kept)
      if (std::abs(k - c) < refractory) {
        clear = false;
        break;
      }
    if (clear) kept.push_back(c);
  }
  require(!kept.empty(), ErrorCode::InsufficientData, "no R peaks found");
  std::sort(kept.begin(), kept.end());

  // R apex: maximum of the band-passed trace near the energy hump, refined by a parabola
  const long search = std::lround(0.075 * rate_hz);
  std::vector<double> peaks;
  for (long c : kept) {
    long best = c;
    for (long j = std::max(0L, c - search); j < std::min(n, c + search + 1); ++j)
      if (bp[j] > bp[best]) best = j;
    double t = static_cast<double>(best);
    if (best > 0 && best + 1 < n) {
      const double y0 = bp[best - 1], y1 = bp[best], y2 = bp[best + 1];
      const double den = y0 - 2 * y1 + y2;
      if (den < 0.0) t += 0.5 * (y0 - y2) / den;
    }
    const double ts = t / rate_hz;
    if (peaks.empty() || ts - peaks.back() >= 0.2) peaks.push_back(ts);
  }
  return peaks;
}

HeartRates heart_rates(const std::vector<double>& peaks) {
  require(peaks.size() >= 2, ErrorCode::InsufficientData, "heart rate needs at least 2 R peaks");
  HeartRates h;
  double total = 0.0;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    const double rri = peaks[i] - peaks[i - 1];
    require(rri > 0.0, ErrorCode::InvalidArgument, "R peaks must be strictly increasing");
    h.rri_s.push_back(rri);
    h.instantaneous_bpm.push_back(60.0 / rri);
    total += rri;
  }
  h.mean_bpm = 60.0 * static_cast<double>(peaks.size() - 1) / total;
  return h;
}

void save_ecg_csv(const ECGTrace& ecg, const std::filesystem::path& path) {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot write " + path.string());
  f << "time_s,mv\n";
  f.precision(17);
  for (std::size_t i = 0; i < ecg.samples_mv.size(); ++i) f << i / ecg.rate_hz << ',' << ecg.samples_mv[i] << '\n';
  require(static_cast<bool>(f), ErrorCode::Io, "write failed for " + path.string());
}

ECGTrace load_ecg_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot read " + path.string());
  std::string line;
  std::vector<double> t, v;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    if (row == 1 && line.find_first_of("abcdefghijklmnopqrstuvwxyz") != std::string::npos) continue;  // header
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a = 0, b = 0;
    require(static_cast<bool>(ss >> a >> b), ErrorCode::MalformedFile,
            "bad ECG row " + std::to_string(row) + " in " + path.string());
    t.push_back(a);
    v.push_back(b);
  }
  require(t.size() >= 2, ErrorCode::MalformedFile, "ECG file has fewer than 2 samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  require(dt > 0.0, ErrorCode::MalformedFile, "ECG times must increase");
  ECGTrace ecg;
  ecg.rate_hz = 1.0 / dt;
  ecg.samples_mv = std::move(v);
  return ecg;
}

}  // namespace cathlab::hemo

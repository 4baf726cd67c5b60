#include "cathlab/cardiac_dynamics.hpp"
#include "cathlab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

namespace cathlab::cardiac {

using volume::AttenuationVolume;
using VecField = std::vector<Vec3, Eigen::aligned_allocator<Vec3>>;

DeformationField DeformationField::zero_like(const AttenuationVolume& vol) {
  DeformationField f;
  f.dims = vol.dims();
  f.spacing = vol.spacing();
  f.origin = vol.origin();
  f.u.assign(vol.size(), Vec3::Zero());
  return f;
}

bool DeformationField::same_grid(const AttenuationVolume& vol) const {
  return dims == vol.dims() && spacing == vol.spacing() && origin == vol.origin() && u.size() == vol.size();
}

double sample_trilinear(const AttenuationVolume& vol, const Vec3& p) {
  const auto& d = vol.dims();
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  const double tx = p.x() - fx, ty = p.y() - fy, tz = p.z() - fz;
  double s = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int x = x0 + (c & 1), y = y0 + ((c >> 1) & 1), z = z0 + ((c >> 2) & 1);
    const double w = ((c & 1) ? tx : 1 - tx) * (((c >> 1) & 1) ? ty : 1 - ty) * (((c >> 2) & 1) ? tz : 1 - tz);
    if (w == 0.0) continue;
    if (x < 0 || y < 0 || z < 0 || x >= d[0] || y >= d[1] || z >= d[2]) continue;
    s += w * vol.at(x, y, z);
  }
  return s;
}

namespace {

// Vector field sampled trilinearly with clamped borders, voxel units.
Vec3 sample_field(const VecField& u, const std::array<int, 3>& d, const Vec3& p) {
  auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(d[0]) * (y + static_cast<std::size_t>(d[1]) * z);
  };
  const Vec3 q(std::clamp(p.x(), 0.0, d[0] - 1.0), std::clamp(p.y(), 0.0, d[1] - 1.0),
               std::clamp(p.z(), 0.0, d[2] - 1.0));
  const int x0 = std::min(static_cast<int>(q.x()), d[0] - 2 < 0 ? 0 : d[0] - 2);
  const int y0 = std::min(static_cast<int>(q.y()), d[1] - 2 < 0 ? 0 : d[1] - 2);
  const int z0 = std::min(static_cast<int>(q.z()), d[2] - 2 < 0 ? 0 : d[2] - 2);
  const double tx = q.x() - x0, ty = q.y() - y0, tz = q.z() - z0;
  Vec3 s = Vec3::Zero();
  for (int c = 0; c < 8; ++c) {
    const int x = std::min(x0 + (c & 1), d[0] - 1), y = std::min(y0 + ((c >> 1) & 1), d[1] - 1),
              z = std::min(z0 + ((c >> 2) & 1), d[2] - 1);
    const double w = ((c & 1) ? tx : 1 - tx) * (((c >> 1) & 1) ? ty : 1 - ty) * (((c >> 2) & 1) ? tz : 1 - tz);
    s += w * u[idx(x, y, z)];
  }
  return s;
}

void smooth_axis(VecField& f, const std::array<int, 3>& d, const std::vector<double>& k, int axis) {
  const int r = static_cast<int>(k.size() / 2);
  const std::size_t stride[3] = {1, static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[0]) * d[1]};
  VecField out(f.size());
#pragma omp parallel for
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const int pos[3] = {x, y, z};
        const std::size_t base = x + stride[1] * y + stride[2] * z;
        Vec3 s = Vec3::Zero();
        for (int j = -r; j <= r; ++j) {
          const int q = std::clamp(pos[axis] + j, 0, d[axis] - 1);
          s += k[static_cast<std::size_t>(j + r)] * f[base + (q - pos[axis]) * static_cast<long>(stride[axis])];
        }
        out[base] = s;
      }
  f.swap(out);
}

void smooth(VecField& f, const std::array<int, 3>& d, double sigma) {
  if (sigma <= 0.0) return;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  for (int a = 0; a < 3; ++a) smooth_axis(f, d, k, a);
}

struct Problem {
  const AttenuationVolume& i1;
  const AttenuationVolume& i2;
  std::array<int, 3> d;
  double norm;  // 1 / (range^2 * voxel count)
  double reg;   // lambda / voxel count
  std::size_t idx(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(d[0]) * (y + static_cast<std::size_t>(d[1]) * z);
  }
};

double energy(const Problem& pb, const VecField& u) {
  const auto& d = pb.d;
  double data = 0.0, smooth_term = 0.0;
#pragma omp parallel for reduction(+ : data, smooth_term)
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = pb.idx(x, y, z);
        const double r = pb.i1.at(x, y, z) - sample_trilinear(pb.i2, Vec3(x, y, z) + u[i]);
        data += r * r;
        if (x + 1 < d[0]) smooth_term += (u[pb.idx(x + 1, y, z)] - u[i]).squaredNorm();
        if (y + 1 < d[1]) smooth_term += (u[pb.idx(x, y + 1, z)] - u[i]).squaredNorm();
        if (z + 1 < d[2]) smooth_term += (u[pb.idx(x, y, z + 1)] - u[i]).squaredNorm();
      }
  return pb.norm * data + pb.reg * smooth_term;
}

VecField gradient(const Problem& pb, const VecField& u) {
  const auto& d = pb.d;
  VecField g(u.size());
#pragma omp parallel for
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = pb.idx(x, y, z);
        const Vec3 p = Vec3(x, y, z) + u[i];
        const double r = pb.i1.at(x, y, z) - sample_trilinear(pb.i2, p);
        Vec3 grad_i2;
        for (int a = 0; a < 3; ++a) {
          Vec3 e = Vec3::Zero();
          e[a] = 0.5;
          grad_i2[a] = sample_trilinear(pb.i2, p + e) - sample_trilinear(pb.i2, p - e);
        }
        // d/du of |grad u|^2 with forward differences, Neumann borders
        Vec3 lap = Vec3::Zero();
        if (x + 1 < d[0]) lap += u[i] - u[pb.idx(x + 1, y, z)];
        if (x > 0) lap += u[i] - u[pb.idx(x - 1, y, z)];
        if (y + 1 < d[1]) lap += u[i] - u[pb.idx(x, y + 1, z)];
        if (y > 0) lap += u[i] - u[pb.idx(x, y - 1, z)];
        if (z + 1 < d[2]) lap += u[i] - u[pb.idx(x, y, z + 1)];
        if (z > 0) lap += u[i] - u[pb.idx(x, y, z - 1)];
        g[i] = -2.0 * pb.norm * r * grad_i2 + 2.0 * pb.reg * lap;
      }
  return g;
}

}  // namespace

double registration_energy(const AttenuationVolume& i1, const AttenuationVolume& i2, const DeformationField& field,
                           double lambda) {
  require(i1.same_grid(i2) && field.same_grid(i1), ErrorCode::SizeMismatch, "registration grids differ");
  double lo = 0.0, hi = 0.0;
  for (float v : i1.data()) lo = std::min(lo, double(v)), hi = std::max(hi, double(v));
  for (float v : i2.data()) lo = std::min(lo, double(v)), hi = std::max(hi, double(v));
  const double range = hi > lo ? hi - lo : 1.0;
  const double n = static_cast<double>(i1.size());
  Problem pb{i1, i2, i1.dims(), 1.0 / (range * range * n), lambda / n};
  VecField u(field.u.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = field.u[i].cwiseQuotient(field.spacing);
  return energy(pb, u);
}

namespace {

// Descent at one resolution, starting from u. Appends accepted energies.
void descend(const Problem& pb, VecField& u, const RegistrationParams& prm, std::vector<double>& energies,
             int& iterations) {
  double e = energy(pb, u);
  energies.push_back(e);
  double step = -1.0;
  for (int it = 0; it < prm.max_iterations && e > 0.0; ++it) {
    VecField dir = gradient(pb, u);
    for (Vec3& g : dir) g = -g;
    smooth(dir, pb.d, prm.smooth_sigma);
    double dmax = 0.0;
    for (const Vec3& g : dir) dmax = std::max(dmax, g.norm());
    if (dmax == 0.0) break;
    if (step < 0.0) step = prm.initial_step / dmax;
    // backtracking: accept only strict decreases
    bool accepted = false;
    VecField trial(u.size());
    for (int ls = 0; ls < 30; ++ls) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + step * dir[i];
      const double et = energy(pb, trial);
      if (et < e) {
        u.swap(trial);
        const double rel = (e - et) / e;
        e = et;
        energies.push_back(e);
        accepted = true;
        step *= 1.5;
        if (rel < prm.tolerance) it = prm.max_iterations;
        break;
      }
      step *= 0.5;
    }
    ++iterations;
    if (!accepted) break;
  }
}

// 2x2x2 block average; odd trailing slices average what exists.
AttenuationVolume halve(const AttenuationVolume& v) {
  const auto& d = v.dims();
  const std::array<int, 3> h{(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2};
  AttenuationVolume out(h, v.spacing() * 2.0, v.origin());
  for (int z = 0; z < h[2]; ++z)
    for (int y = 0; y < h[1]; ++y)
      for (int x = 0; x < h[0]; ++x) {
        double s = 0.0;
        int c = 0;
        for (int k = 2 * z; k < std::min(2 * z + 2, d[2]); ++k)
          for (int j = 2 * y; j < std::min(2 * y + 2, d[1]); ++j)
            for (int i = 2 * x; i < std::min(2 * x + 2, d[0]); ++i) s += v.at(i, j, k), ++c;
        out.at(x, y, z) = static_cast<float>(s / c);
      }
  return out;
}

// Coarse field (voxel units of the coarse grid) onto the fine grid.
VecField upsample(const VecField& coarse, const std::array<int, 3>& dc, const std::array<int, 3>& df) {
  VecField u(static_cast<std::size_t>(df[0]) * df[1] * df[2]);
  for (int z = 0; z < df[2]; ++z)
    for (int y = 0; y < df[1]; ++y)
      for (int x = 0; x < df[0]; ++x)
        u[x + static_cast<std::size_t>(df[0]) * (y + static_cast<std::size_t>(df[1]) * z)] =
            2.0 * sample_field(coarse, dc, (Vec3(x, y, z) + Vec3::Constant(0.5)) / 2.0 - Vec3::Constant(0.5));
  return u;
}

}  // namespace

RegistrationResult register_volumes(const AttenuationVolume& i1, const AttenuationVolume& i2,
                                    const RegistrationParams& prm) {
  require(i1.same_grid(i2), ErrorCode::SizeMismatch, "registration needs volumes on the same grid");
  require(prm.lambda >= 0.0, ErrorCode::InvalidArgument, "lambda must be >= 0");
  require(prm.max_iterations >= 0 && prm.initial_step > 0.0 && prm.levels >= 1, ErrorCode::InvalidArgument,
          "bad registration iteration settings");
  double lo = 0.0, hi = 0.0;
  for (float v : i1.data()) lo = std::min(lo, double(v)), hi = std::max(hi, double(v));
  for (float v : i2.data()) lo = std::min(lo, double(v)), hi = std::max(hi, double(v));
  const double range = hi > lo ? hi - lo : 1.0;

  // pyramid: index 0 is the input grid; stop before any side drops below 8 voxels
  std::vector<std::pair<AttenuationVolume, AttenuationVolume>> pyr{{i1, i2}};
  while (static_cast<int>(pyr.size()) < prm.levels) {
    const auto& d = pyr.back().first.dims();
    if (std::min({d[0], d[1], d[2]}) < 16) break;
    pyr.emplace_back(halve(pyr.back().first), halve(pyr.back().second));
  }

  RegistrationResult res;
  VecField u;
  for (int l = static_cast<int>(pyr.size()) - 1; l >= 0; --l) {
    const auto& [a, b] = pyr[static_cast<std::size_t>(l)];
    const double n = static_cast<double>(a.size());
    const Problem pb{a, b, a.dims(), 1.0 / (range * range * n), prm.lambda / n};
    u = u.empty() ? VecField(a.size(), Vec3::Zero()) : upsample(u, pyr[static_cast<std::size_t>(l) + 1].first.dims(), a.dims());
    // only the input-grid energies are reported, so the sequence stays comparable
    std::vector<double> coarse;
    descend(pb, u, prm, l == 0 ? res.energy : coarse, res.iterations);
  }
  res.field = DeformationField::zero_like(i1);
  for (std::size_t i = 0; i < u.size(); ++i) res.field.u[i] = u[i].cwiseProduct(i1.spacing());
  return res;
}

AttenuationVolume interpolate_phase(const AttenuationVolume& i1, const DeformationField& field, double a) {
  require(field.same_grid(i1), ErrorCode::SizeMismatch, "deformation field is not on the volume grid");
  require(a >= 0.0 && a <= 1.0, ErrorCode::InvalidArgument, "phase fraction must be in [0, 1]");
  if (a == 0.0) return i1;
  const auto& d = i1.dims();
  VecField uv(field.u.size());
  for (std::size_t i = 0; i < uv.size(); ++i) uv[i] = field.u[i].cwiseQuotient(field.spacing);
  AttenuationVolume out(d, i1.spacing(), i1.origin());
#pragma omp parallel for
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        // the source point y with y + a u(y) = x, by fixed-point iteration
        const Vec3 target(x, y, z);
        Vec3 src = target - a * sample_field(uv, d, target);
        for (int k = 0; k < 20; ++k) {
          const Vec3 next = target - a * sample_field(uv, d, src);
          const bool done = (next - src).squaredNorm() < 1e-16;
          src = next;
          if (done) break;
        }
        out.at(x, y, z) = static_cast<float>(sample_trilinear(i1, src));
      }
  return out;
}

namespace {

std::pair<std::filesystem::path, std::filesystem::path> field_paths(const std::filesystem::path& p) {
  std::filesystem::path raw = p, side = p;
  if (p.extension() == ".json")
    raw.replace_extension(".raw");
  else
    side.replace_extension(".json");
  return {raw, side};
}

}  // namespace

void save_field(const DeformationField& f, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "field files are little-endian float32");
  const auto [raw, side] = field_paths(path);
  if (raw.has_parent_path()) std::filesystem::create_directories(raw.parent_path());
  nlohmann::json j;
  j["dims"] = f.dims;
  j["spacing_mm"] = {f.spacing.x(), f.spacing.y(), f.spacing.z()};
  j["origin_mm"] = {f.origin.x(), f.origin.y(), f.origin.z()};
  j["components"] = 3;
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["units"] = "mm";
  j["raw"] = raw.filename().string();
  std::ofstream js(side);
  require(static_cast<bool>(js), ErrorCode::Io, "cannot write " + side.string());
  js << j.dump(2) << '\n';
  std::vector<float> buf;
  buf.reserve(f.u.size() * 3);
  for (const Vec3& v : f.u)
    for (int c = 0; c < 3; ++c) buf.push_back(static_cast<float>(v[c]));
  std::ofstream out(raw, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + raw.string());
}

DeformationField load_field(const std::filesystem::path& path) {
  const auto [raw, side] = field_paths(path);
  std::ifstream js(side);
  require(static_cast<bool>(js), ErrorCode::Io, "cannot read " + side.string());
  nlohmann::json j;
  try {
    js >> j;
    DeformationField f;
    f.dims = j.at("dims").get<std::array<int, 3>>();
    const auto s = j.at("spacing_mm").get<std::array<double, 3>>();
    const auto o = j.at("origin_mm").get<std::array<double, 3>>();
    f.spacing = Vec3(s[0], s[1], s[2]);
    f.origin = Vec3(o[0], o[1], o[2]);
    require(j.value("components", 3) == 3 && j.value("dtype", "float32") == "float32", ErrorCode::MalformedFile,
            "field sidecar must describe 3 float32 components");
    for (int d : f.dims) require(d > 0, ErrorCode::MalformedFile, "field dims must be positive");
    const std::size_t n = static_cast<std::size_t>(f.dims[0]) * f.dims[1] * f.dims[2];
    std::vector<float> buf(n * 3);
    std::ifstream in(raw, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot read " + raw.string());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)), ErrorCode::MalformedFile,
            "field raw file is truncated");
    f.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.u[i] = Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
    return f;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("field sidecar: ") + e.what());
  }
}

}  // namespace cathlab::cardiac

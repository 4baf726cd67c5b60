#include "cathlab/cardiac_dynamics.hpp"
#include "cathlab/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cathlab::cardiac {

void HandleSet::validate(std::size_t n_vertices) const {
  require(!vertices.empty(), ErrorCode::InvalidArgument, "need at least one handle");
  std::vector<int> owner(n_vertices, -1);
  for (std::size_t b = 0; b < vertices.size(); ++b) {
    require(!vertices[b].empty(), ErrorCode::InvalidArgument, "handle " + std::to_string(b) + " is empty");
    for (int v : vertices[b]) {
      require(v >= 0 && static_cast<std::size_t>(v) < n_vertices, ErrorCode::IndexOutOfRange,
              "handle vertex index out of range");
      require(owner[static_cast<std::size_t>(v)] < 0 || owner[static_cast<std::size_t>(v)] == static_cast<int>(b),
              ErrorCode::InvalidArgument, "handle vertex sets overlap");
      owner[static_cast<std::size_t>(v)] = static_cast<int>(b);
    }
  }
}

void SkinningWeights::validate(const HandleSet& handles, double bound_tol, double sum_tol) const {
  require(w.cols() == static_cast<Eigen::Index>(handles.size()), ErrorCode::SizeMismatch,
          "weight columns do not match handle count");
  for (Eigen::Index v = 0; v < w.rows(); ++v) {
    for (Eigen::Index b = 0; b < w.cols(); ++b)
      require(w(v, b) >= -bound_tol && w(v, b) <= 1.0 + bound_tol, ErrorCode::InvalidArgument,
              "skinning weight out of [0, 1]");
    require(std::abs(w.row(v).sum() - 1.0) <= sum_tol, ErrorCode::InvalidArgument,
            "skinning weights do not sum to one");
  }
  for (std::size_t b = 0; b < handles.size(); ++b)
    for (int v : handles.vertices[b])
      require(std::abs(w(v, static_cast<Eigen::Index>(b)) - 1.0) <= bound_tol, ErrorCode::InvalidArgument,
              "handle vertex not fully bound to its handle");
}

TetOperators tet_operators(const volume::TetMesh& mesh) {
  volume::validate_indices(mesh);
  const auto n = static_cast<Eigen::Index>(mesh.vertices.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.tets.size() * 16);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  for (const auto& t : mesh.tets) {
    const Vec3& p0 = mesh.vertices[t[0]];
    Mat3 d;
    d.col(0) = mesh.vertices[t[1]] - p0;
    d.col(1) = mesh.vertices[t[2]] - p0;
    d.col(2) = mesh.vertices[t[3]] - p0;
    const double vol = std::abs(d.determinant()) / 6.0;
    require(vol > 0.0, ErrorCode::InvalidArgument, "degenerate tetrahedron");
    const Mat3 inv = d.inverse();
    Vec3 g[4];
    g[1] = inv.row(0).transpose();
    g[2] = inv.row(1).transpose();
    g[3] = inv.row(2).transpose();
    g[0] = -(g[1] + g[2] + g[3]);
    for (int i = 0; i < 4; ++i) {
      mass(t[i]) += vol / 4.0;
      for (int j = 0; j < 4; ++j) trip.emplace_back(t[i], t[j], vol * g[i].dot(g[j]));
    }
  }
  TetOperators ops;
  ops.stiffness.resize(n, n);
  ops.stiffness.setFromTriplets(trip.begin(), trip.end());
  ops.mass = mass;
  Eigen::VectorXd inv_mass = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_mass(i) = mass(i) > 0.0 ? 1.0 / mass(i) : 0.0;
  ops.bilaplacian = Eigen::SparseMatrix<double>(ops.stiffness * inv_mass.asDiagonal() * ops.stiffness);
  return ops;
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

// Every connected piece of the mesh must touch a handle, otherwise its
// weights are undetermined.
void check_components(const volume::TetMesh& mesh, const HandleSet& handles) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& t : mesh.tets)
    for (int i = 1; i < 4; ++i) parent[find_root(parent, t[0])] = find_root(parent, t[i]);
  std::vector<char> anchored(mesh.vertices.size(), 0);
  for (const auto& h : handles.vertices)
    for (int v : h) anchored[find_root(parent, v)] = 1;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
    require(anchored[find_root(parent, static_cast<int>(v))] != 0, ErrorCode::IllPosed,
            "mesh component without a handle vertex");
}

Eigen::SparseMatrix<double> submatrix(const Eigen::SparseMatrix<double>& q, const std::vector<int>& rows,
                                      const std::vector<int>& row_map) {
  // row_map: global index -> position in rows, or -1
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, rows[c]); it; ++it) {
      const int r = row_map[static_cast<std::size_t>(it.row())];
      if (r >= 0) trip.emplace_back(r, static_cast<int>(c), it.value());
    }
  Eigen::SparseMatrix<double> s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

}  // namespace

SkinningWeights compute_skinning_weights(const volume::TetMesh& mesh, const HandleSet& handles) {
  const std::size_t n = mesh.vertices.size();
  handles.validate(n);
  check_components(mesh, handles);
  const TetOperators ops = tet_operators(mesh);
  const Eigen::SparseMatrix<double>& q = ops.bilaplacian;

  std::vector<int> owner(n, -1);
  for (std::size_t b = 0; b < handles.size(); ++b)
    for (int v : handles.vertices[b]) owner[static_cast<std::size_t>(v)] = static_cast<int>(b);

  SkinningWeights sw;
  sw.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(handles.size()));
  constexpr double eps = 1e-12;

  for (std::size_t b = 0; b < handles.size(); ++b) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    // 0 free, 1 at lower bound, 2 at upper bound, 3 handle constraint
    std::vector<char> state(n, 0);
    for (std::size_t v = 0; v < n; ++v)
      if (owner[v] >= 0) {
        state[v] = 3;
        w(static_cast<Eigen::Index>(v)) = owner[v] == static_cast<int>(b) ? 1.0 : 0.0;
      }
    for (int iter = 0; iter < 200; ++iter) {
      std::vector<int> free, map(n, -1);
      for (std::size_t v = 0; v < n; ++v)
        if (state[v] == 0) {
          map[v] = static_cast<int>(free.size());
          free.push_back(static_cast<int>(v));
        }
      if (!free.empty()) {
        for (std::size_t v = 0; v < n; ++v)
          if (state[v] != 0) w(static_cast<Eigen::Index>(v)) = state[v] == 1 ? 0.0 : (state[v] == 2 ? 1.0 : w(static_cast<Eigen::Index>(v)));
        Eigen::VectorXd fixed = w;
        for (int v : free) fixed(v) = 0.0;
        const Eigen::VectorXd qf = q * fixed;
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i) rhs(static_cast<Eigen::Index>(i)) = -qf(free[i]);
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(submatrix(q, free, map));
        require(solver.info() == Eigen::Success, ErrorCode::IllPosed, "biharmonic system is singular");
        const Eigen::VectorXd x = solver.solve(rhs);
        for (std::size_t i = 0; i < free.size(); ++i) w(free[i]) = x(static_cast<Eigen::Index>(i));
      }
      bool changed = false;
      for (int v : free) {
        if (w(v) < -eps) {
          state[static_cast<std::size_t>(v)] = 1;
          changed = true;
        } else if (w(v) > 1.0 + eps) {
          state[static_cast<std::size_t>(v)] = 2;
          changed = true;
        }
      }
      if (changed) continue;
      // release bound vertices whose multiplier has the wrong sign
      const Eigen::VectorXd g = q * w;
      const double gscale = std::max(1e-300, g.cwiseAbs().maxCoeff());
      for (std::size_t v = 0; v < n; ++v) {
        if (state[v] == 1 && g(static_cast<Eigen::Index>(v)) < -1e-9 * gscale) {
          state[v] = 0;
          changed = true;
        } else if (state[v] == 2 && g(static_cast<Eigen::Index>(v)) > 1e-9 * gscale) {
          state[v] = 0;
          changed = true;
        }
      }
      if (!changed) break;
    }
    sw.w.col(static_cast<Eigen::Index>(b)) = w.cwiseMax(0.0).cwiseMin(1.0);
  }
  for (Eigen::Index v = 0; v < sw.w.rows(); ++v) {
    const double s = sw.w.row(v).sum();
    require(s > 0.0, ErrorCode::IllPosed, "vertex received no weight from any handle");
    sw.w.row(v) /= s;
  }
  return sw;
}

double biharmonic_energy(const TetOperators& ops, const SkinningWeights& w) {
  double e = 0.0;
  for (Eigen::Index b = 0; b < w.w.cols(); ++b) {
    const Eigen::VectorXd col = w.w.col(b);
    e += col.dot(ops.bilaplacian * col);
  }
  return e;
}

Keypose interpolate_pose(const Keypose& p1, const Keypose& p2, double t) {
  require(p1.size() == p2.size(), ErrorCode::SizeMismatch, "keyposes differ in handle count");
  require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "interpolation parameter must be in [0, 1]");
  if (t == 0.0) return p1;
  if (t == 1.0) return p2;
  Keypose out(p1.size());
  for (std::size_t b = 0; b < p1.size(); ++b) {
    const Eigen::Quaterniond q1(p1[b].rotation), q2(p2[b].rotation);
    out[b].rotation = q1.slerp(t, q2).normalized().toRotationMatrix();
    out[b].translation = (1.0 - t) * p1[b].translation + t * p2[b].translation;
  }
  return out;
}

Polyline3 deform_vertices(const Polyline3& vertices, const SkinningWeights& w, const Keypose& pose) {
  require(w.w.rows() == static_cast<Eigen::Index>(vertices.size()), ErrorCode::SizeMismatch,
          "weights do not match the vertex count");
  require(w.w.cols() == static_cast<Eigen::Index>(pose.size()), ErrorCode::SizeMismatch,
          "pose does not match the handle count");
  Polyline3 out(vertices.size());
#pragma omp parallel for
  for (long v = 0; v < static_cast<long>(vertices.size()); ++v) {
    Vec3 p = Vec3::Zero();
    for (std::size_t b = 0; b < pose.size(); ++b)
      p += w.w(v, static_cast<Eigen::Index>(b)) * pose[b].apply(vertices[static_cast<std::size_t>(v)]);
    out[static_cast<std::size_t>(v)] = p;
  }
  return out;
}

volume::TetMesh deform_mesh(const volume::TetMesh& mesh, const SkinningWeights& w, const Keypose& pose) {
  volume::TetMesh out = mesh;
  out.vertices = deform_vertices(mesh.vertices, w, pose);
  return out;
}

Keypose KeyposeTrack::pose_at(double position) const {
  require(!poses.empty(), ErrorCode::InsufficientData, "keypose track is empty");
  const double n = static_cast<double>(poses.size());
  if (poses.size() == 1) return poses.front();
  double p = std::fmod(position, n);
  if (p < 0.0) p += n;
  const auto i = static_cast<std::size_t>(std::floor(p));
  const double f = p - static_cast<double>(i);
  return interpolate_pose(poses[i % poses.size()], poses[(i + 1) % poses.size()], f);
}

}  // namespace cathlab::cardiac

#pragma once

#include "cathlab/hemodynamics.hpp"
#include "cathlab/types.hpp"
#include "cathlab/volume_data.hpp"

#include <Eigen/Sparse>

#include <filesystem>
#include <vector>

namespace cathlab::cardiac {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  static RigidTransform identity() { return {}; }
};

using Keypose = std::vector<RigidTransform>;  // one transform per handle

// Vertex indices rigidly bound to each handle.
struct HandleSet {
  std::vector<std::vector<int>> vertices;

  std::size_t size() const { return vertices.size(); }
  void validate(std::size_t n_vertices) const;
};

// Rows are vertices, columns handles.
struct SkinningWeights {
  Eigen::MatrixXd w;

  void validate(const HandleSet& handles, double bound_tol = 1e-9, double sum_tol = 1e-6) const;
};

// Discrete operators on a tet mesh: linear-FEM stiffness (cotangent
// Laplacian) and lumped mass.
struct TetOperators {
  Eigen::SparseMatrix<double> stiffness;
  Eigen::VectorXd mass;
  Eigen::SparseMatrix<double> bilaplacian;  // K M^-1 K
};
TetOperators tet_operators(const volume::TetMesh& mesh);

// Bounded biharmonic weights: per handle, minimize w' Q w with w = 1 on the
// handle, 0 on the other handles and 0 <= w <= 1 elsewhere (active set),
// then rows are renormalized to sum to one.
SkinningWeights compute_skinning_weights(const volume::TetMesh& mesh, const HandleSet& handles);

// Sum over handles of w_b' Q w_b.
double biharmonic_energy(const TetOperators& ops, const SkinningWeights& w);

// Translations blend linearly, rotations by slerp. t = 0 and t = 1 return
// the end poses unchanged.
Keypose interpolate_pose(const Keypose& p1, const Keypose& p2, double t);

// Linear blend skinning.
Polyline3 deform_vertices(const Polyline3& vertices, const SkinningWeights& w, const Keypose& pose);
volume::TetMesh deform_mesh(const volume::TetMesh& mesh, const SkinningWeights& w, const Keypose& pose);

// Keyposes spread evenly over the model cycle; pose_at takes a model
// position in [0, n - 1] (wrapping).
struct KeyposeTrack {
  std::vector<Keypose> poses;
  Keypose pose_at(double position) const;
};

// ---- volume registration ----

// Displacement per voxel in mm, on the grid of the volume it was built for.
struct DeformationField {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3, Eigen::aligned_allocator<Vec3>> u;

  static DeformationField zero_like(const volume::AttenuationVolume& vol);
  bool same_grid(const volume::AttenuationVolume& vol) const;
};

struct RegistrationParams {
  double lambda = 0.05;        // weight of the smoothness term |grad u|^2
  double smooth_sigma = 1.5;   // Gaussian smoothing of each update, voxels
  int max_iterations = 200;
  double tolerance = 1e-5;     // stop when the relative energy decrease falls below
  double initial_step = 0.5;   // largest first update, voxels
  int levels = 3;              // coarse-to-fine pyramid depth, halving each level
};

struct RegistrationResult {
  DeformationField field;
  std::vector<double> energy;  // per accepted iteration on the input grid, starting from the coarse estimate
  int iterations = 0;
};

// Finds u with i1(x) ~ i2(x + u(x)).
RegistrationResult register_volumes(const volume::AttenuationVolume& i1, const volume::AttenuationVolume& i2,
                                    const RegistrationParams& params = {});
double registration_energy(const volume::AttenuationVolume& i1, const volume::AttenuationVolume& i2,
                           const DeformationField& field, double lambda);

// Trilinear sample at a continuous voxel coordinate; 0 outside the grid.
double sample_trilinear(const volume::AttenuationVolume& vol, const Vec3& voxel);

// Intermediate state at fraction a in [0, 1]: i1 carried a fraction a of the
// way along the field, so a = 1 lands on i2. a = 0 returns i1 unchanged.
volume::AttenuationVolume interpolate_phase(const volume::AttenuationVolume& i1, const DeformationField& field,
                                            double a);

void save_field(const DeformationField& f, const std::filesystem::path& path);
DeformationField load_field(const std::filesystem::path& path);

// ---- phase clock ----

struct ModelPhase {
  double ecg_phase = 0.0;  // [0, 1), 0 at an R peak
  double rr_pct = 0.0;     // position in the model span, percent of R-R
  int index = 0;           // lower model phase
  double fraction = 0.0;   // towards index + 1
};

class PhaseClock {
 public:
  PhaseClock() = default;
  PhaseClock(std::vector<double> r_peaks_s, int n_phases = 20, double start_pct = -5.0, double end_pct = 106.0);

  int n_phases() const { return n_phases_; }
  const std::vector<double>& peaks() const { return peaks_; }
  double ecg_phase(double t) const;
  ModelPhase model_phase_at(double t) const;
  // Model phase for a given ECG phase.
  ModelPhase map_phase(double ecg_phase) const;

 private:
  std::vector<double> peaks_;
  int n_phases_ = 20;
  double start_pct_ = -5.0, end_pct_ = 106.0;
};

PhaseClock phase_clock(const hemo::ECGTrace& ecg, int n_phases = 20);

// ---- synthetic beating anatomy ----

// Coronary-like curved tube whose bend and length pulse with the cardiac
// phase (phase in [0, 1), 0 = end diastole). The long axis runs along z.
struct BeatingTube {
  double length_mm = 48.0;
  double bend_mm = 8.0;          // lateral sag at end diastole
  double bend_swing = 0.35;      // relative bend change over the cycle
  double radius_mm = 1.5;
  double axial_swing = 0.06;     // relative shortening at end systole

  Polyline3 knots(double phase) const;
  volume::PhantomSpec spec(double phase, std::array<int, 3> dims, Vec3 spacing) const;
};

}  // namespace cathlab::cardiac

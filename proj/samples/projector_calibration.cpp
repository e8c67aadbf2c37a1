// Recover a camera-to-projector transform from simulated checkerboards.

#include <cstdio>
#include <random>

#include "ppm/simulator.hpp"

int main() {
  ppm::ScenarioConfig scene;
  std::mt19937_64 rng(7);
  scene.transform_truth = ppm::random_rigid_transform(rng);
  scene.corner_noise_sigma = 0.05;

  const auto boards = ppm::generate_checkerboard_correspondences(scene);
  for (auto solver : {ppm::RigidSolver::procrustes, ppm::RigidSolver::nelder_mead}) {
    ppm::ProjectorCalibrationOptions opts;
    opts.solver = solver;
    const auto cal = ppm::estimate_projector_transform(boards.pairs, opts);
    const double angle = Eigen::AngleAxisd(cal.transform.rotation.transpose() * boards.truth.rotation).angle();
    std::printf("%-12s pairs=%zu rmse=%.4f mm rotation error=%.2e rad\n",
                solver == ppm::RigidSolver::procrustes ? "procrustes" : "nelder-mead", boards.pairs.size(), cal.rmse,
                angle);
  }
}

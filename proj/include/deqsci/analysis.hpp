#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deqsci/iteration_maps.hpp"

namespace deqsci {

/// Power iteration on J^T J for the Jacobian J of `map` at `x`. Jv is a
/// forward difference with step 1e-6 ||x|| / ||v||; J^T v comes from the map's
/// VJP, or from a dense finite-difference Jacobian (at most 4096 unknowns)
/// when the map has none. Returns sqrt of the top eigenvalue estimate.
double estimate_map_lipschitz(const IterationMap &map, const VideoCube &x, int n_iters, std::uint64_t seed);

struct ProjectionSpectrum {
  /// Eigenvalues of Phi^T (Phi Phi^T)^{-1} Phi, descending.
  std::vector<double> eigenvalues;
  /// Frobenius norm of P^2 - P.
  double idempotence_defect = 0.0;
  double trace = 0.0;
};

/// Dense eigen-decomposition of the row-space projector. Needs H W B <= 4096.
ProjectionSpectrum projection_spectrum(const SensingMask &mask);

/// (1 + epsilon) * max_i |1 - lambda_i|: the Lipschitz bound of the DE-GAP
/// map when D - I is epsilon-Lipschitz.
double gap_contraction_bound(double epsilon, const std::vector<double> &eigenvalues);

/// max over sampled pairs of ||f(x) - f(x')|| / ||x - x'||. Pairs alternate
/// between independent uniform cubes and 1e-3 Gaussian perturbations.
double estimate_rnn_contraction(const DeRnnMap &map, std::uint64_t seed, int n_pairs);

struct LipschitzReport {
  double sigma_hat = 0.0;
  /// Sampled lower bound on Lip(D - I).
  double epsilon_hat = 0.0;
  /// Product-of-layer-norms upper bound on Lip(D - I); 0 without a conv denoiser.
  double epsilon_upper = 0.0;
  double eta_bound = 0.0;
  bool contraction_flag = false;
  /// 0 unless a DE-RNN map was analysed.
  double rnn_c_hat = 0.0;
  /// Set when eta_bound >= 1, i.e. the bound does not certify a contraction.
  bool eta_not_contractive = false;

  /// One key=value per line.
  std::string to_text() const;
};

}  // namespace deqsci

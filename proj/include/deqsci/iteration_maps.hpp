#pragma once

#include <memory>
#include <string>
#include <vector>

#include "deqsci/denoiser.hpp"
#include "deqsci/fixed_point.hpp"
#include "deqsci/sci.hpp"

namespace deqsci {

/// An iteration map f(x; y, Phi) bound to one measurement, together with the
/// vector-Jacobian products needed for implicit differentiation.
class IterationMap {
 public:
  virtual ~IterationMap() = default;

  virtual VideoCube apply(const VideoCube &x) const = 0;
  virtual bool has_vjp() const { return true; }
  /// (df/dx)^T v at x.
  virtual VideoCube vjp_input(const VideoCube &x, const VideoCube &v) const = 0;
  virtual std::size_t param_count() const { return 0; }
  /// (df/dtheta)^T v at x.
  virtual std::vector<double> vjp_params(const VideoCube &x, const VideoCube &v) const;

  CubeMap as_function() const {
    return [this](const VideoCube &x) { return apply(x); };
  }
};

/// f(x) = D(x + Phi^T (Phi Phi^T)^{-1} (y - Phi x)).
class DeGapMap : public IterationMap {
 public:
  DeGapMap(Denoiser denoiser, SensingMask mask, Measurement y);

  VideoCube apply(const VideoCube &x) const override;
  bool has_vjp() const override;
  VideoCube vjp_input(const VideoCube &x, const VideoCube &v) const override;
  std::size_t param_count() const override;
  std::vector<double> vjp_params(const VideoCube &x, const VideoCube &v) const override;

  const Denoiser &denoiser() const noexcept { return denoiser_; }
  const SensingMask &mask() const noexcept { return mask_; }
  const Measurement &measurement() const noexcept { return y_; }

 private:
  Denoiser denoiser_;
  SensingMask mask_;
  Measurement y_;
};

/// Gated convolutional refinement cell. With in = [x, Phi^T y, Phi^T(y - Phi x)]:
///   cell(x) = skip * x + step * Phi^T(y - Phi x)
///           + W_o * (sigmoid(W_g * in + b_g) .* tanh(W_c * in + b_c)) + b_o
struct RecurrentCellParams {
  ConvLayer gate;
  ConvLayer cand;
  ConvLayer out;
  double skip = 0.0;
  double step = 0.0;
  double gamma = 0.05;
  std::size_t sn_height = 32;
  std::size_t sn_width = 32;
  std::uint64_t sn_seed = 0xce11;

  /// Conv weights ~ N(0, noise_scale^2), skip = -1 and step = 1 / (gamma * frames):
  /// without the conv branch, f(x) = (1 - gamma) x + Phi^T (y - Phi x) / frames,
  /// a contraction whose fixed point is a Tikhonov-regularized inverse.
  static RecurrentCellParams make(std::size_t frames, std::size_t hidden, std::size_t ksize, double gamma,
                                  std::uint64_t seed, double noise_scale = 0.01);

  std::size_t frames() const noexcept { return out.out_channels; }
  std::size_t hidden() const noexcept { return out.in_channels; }
  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double> &theta);
  void validate() const;

  void spectral_normalize(int n_iters);
  /// Upper bound on Lip(cell) given the largest mask energy max_q:
  /// |skip| + |step| max_q + ||W_o|| (||W_g||/4 + ||W_c||) sqrt(1 + max_q^2).
  double lipschitz_bound(double max_q, std::size_t h, std::size_t w, int iters = 200) const;
};

/// f(x) = x + gamma * cell(x, Phi^T y, Phi^T(y - Phi x)).
class DeRnnMap : public IterationMap {
 public:
  DeRnnMap(RecurrentCellParams cell, SensingMask mask, Measurement y);

  VideoCube apply(const VideoCube &x) const override;
  VideoCube vjp_input(const VideoCube &x, const VideoCube &v) const override;
  std::size_t param_count() const override { return cell_.param_count(); }
  std::vector<double> vjp_params(const VideoCube &x, const VideoCube &v) const override;

  const RecurrentCellParams &cell() const noexcept { return cell_; }
  const SensingMask &mask() const noexcept { return mask_; }

 private:
  struct Forward;
  Forward run(const VideoCube &x) const;
  VideoCube backward(const Forward &f, const VideoCube &v, std::vector<double> *param_grad) const;

  RecurrentCellParams cell_;
  SensingMask mask_;
  Measurement y_;
  VideoCube aty_;
};

VideoCube de_gap_apply(const DeGapMap &m, const VideoCube &x);
VideoCube de_rnn_apply(const DeRnnMap &m, const VideoCube &x);

// ---------------------------------------------------------------------------
// Classical baselines

/// Runs K GAP iterations x = project(v), v = tv_denoise(x, lambda_k) starting
/// from v = Phi^T y; lambdas are cycled from `schedule`. Trace row k holds
/// ||v_k - v_{k-1}|| and, with a reference, PSNR of v_k.
SolveResult pnp_gap_solve(const SensingMask &mask, const Measurement &y, const std::vector<double> &schedule, int K,
                          int tv_iters = 20, const IterateMetric &metric = {});

struct AdmmState {
  VideoCube x;
  VideoCube v;
  VideoCube u;
  double rho = 1.0;
};

/// One PnP-ADMM iteration: closed-form x-update, denoised v-update, dual update.
AdmmState pnp_admm_step(const AdmmState &state, const SensingMask &mask, const Measurement &y,
                        const Denoiser &denoiser);

/// K ADMM iterations from x = v = Phi^T y, u = 0, with the TV strength cycled
/// from `schedule`. The returned estimate is v_K.
SolveResult pnp_admm_solve(const SensingMask &mask, const Measurement &y, double rho,
                           const std::vector<double> &schedule, int K, int tv_iters = 20,
                           const IterateMetric &metric = {});

// ---------------------------------------------------------------------------
// Trainable models

/// Parameter container that can be bound to a measurement to yield a map.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<IterationMap> bind(const SensingMask &mask, const Measurement &y) const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(const std::vector<double> &theta) = 0;
  /// Applies the spectral-norm constraint after an update. No-op by default.
  virtual void normalize(int /*n_iters*/) {}
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual void save(const std::string &path) const;
};

class DeGapModel : public Model {
 public:
  explicit DeGapModel(ConvDenoiserParams p) : denoiser_(std::move(p)) {}
  std::string kind() const override { return "de_gap"; }
  std::unique_ptr<IterationMap> bind(const SensingMask &mask, const Measurement &y) const override;
  std::vector<double> params() const override { return denoiser_.flatten(); }
  void set_params(const std::vector<double> &theta) override { denoiser_.unflatten(theta); }
  void normalize(int n_iters) override { spectral_normalize_in_place(denoiser_, n_iters); }
  std::unique_ptr<Model> clone() const override { return std::make_unique<DeGapModel>(*this); }
  void save(const std::string &path) const override { save_checkpoint(path, denoiser_); }

  const ConvDenoiserParams &denoiser() const noexcept { return denoiser_; }
  ConvDenoiserParams &denoiser() noexcept { return denoiser_; }

 private:
  ConvDenoiserParams denoiser_;
};

class DeRnnModel : public Model {
 public:
  explicit DeRnnModel(RecurrentCellParams c) : cell_(std::move(c)) {}
  std::string kind() const override { return "de_rnn"; }
  std::unique_ptr<IterationMap> bind(const SensingMask &mask, const Measurement &y) const override;
  std::vector<double> params() const override { return cell_.flatten(); }
  void set_params(const std::vector<double> &theta) override { cell_.unflatten(theta); }
  void normalize(int n_iters) override { cell_.spectral_normalize(n_iters); }
  std::unique_ptr<Model> clone() const override { return std::make_unique<DeRnnModel>(*this); }
  void save(const std::string &path) const override;

  const RecurrentCellParams &cell() const noexcept { return cell_; }

 private:
  RecurrentCellParams cell_;
};

void save_cell_checkpoint(const std::string &path, const RecurrentCellParams &c);
RecurrentCellParams load_cell_checkpoint(const std::string &path);
/// Loads either checkpoint kind, dispatching on the sidecar.
std::unique_ptr<Model> load_model(const std::string &path);

}  // namespace deqsci

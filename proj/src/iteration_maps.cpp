#include "deqsci/iteration_maps.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "deqsci/error.hpp"
#include "deqsci/tensor_io.hpp"

namespace deqsci {

std::vector<double> IterationMap::vjp_params(const VideoCube &, const VideoCube &) const {
  throw Error(ErrorKind::Unsupported, "this iteration map has no trainable parameters");
}

// ---------------------------------------------------------------------------
// DE-GAP

DeGapMap::DeGapMap(Denoiser denoiser, SensingMask mask, Measurement y)
    : denoiser_(std::move(denoiser)), mask_(std::move(mask)), y_(std::move(y)) {
  validate(denoiser_);
  if (!mask_.matches(y_.data)) throw Error(ErrorKind::ShapeMismatch, "DE-GAP: measurement does not match mask");
}

VideoCube DeGapMap::apply(const VideoCube &x) const { return denoise(denoiser_, gap_project(mask_, y_, x)); }

bool DeGapMap::has_vjp() const { return !std::holds_alternative<TvDenoiser>(denoiser_); }

VideoCube DeGapMap::vjp_input(const VideoCube &x, const VideoCube &v) const {
  VideoCube w = deqsci::vjp_input(denoiser_, gap_project(mask_, y_, x), v);
  w.vec() -= rowspace_project(mask_, w).vec();
  return w;
}

std::size_t DeGapMap::param_count() const {
  const auto *p = std::get_if<ConvDenoiserParams>(&denoiser_);
  return p ? p->param_count() : 0;
}

std::vector<double> DeGapMap::vjp_params(const VideoCube &x, const VideoCube &v) const {
  return grad_params(denoiser_, gap_project(mask_, y_, x), v);
}

VideoCube de_gap_apply(const DeGapMap &m, const VideoCube &x) { return m.apply(x); }

// ---------------------------------------------------------------------------
// Recurrent cell

RecurrentCellParams RecurrentCellParams::make(std::size_t frames, std::size_t hidden, std::size_t ksize, double gamma,
                                              std::uint64_t seed, double noise_scale) {
  if (frames == 0 || hidden == 0 || ksize % 2 == 0)
    throw Error(ErrorKind::InvalidArgument, "recurrent cell needs frames, hidden >= 1 and an odd kernel size");
  RecurrentCellParams c;
  c.gate = ConvLayer(3 * frames, hidden, ksize);
  c.cand = ConvLayer(3 * frames, hidden, ksize);
  c.out = ConvLayer(hidden, frames, ksize);
  c.gamma = gamma;
  c.skip = -1.0;
  c.step = gamma != 0.0 ? 1.0 / (gamma * static_cast<double>(frames)) : 0.0;
  c.sn_seed = seed ^ 0x243f6a8885a308d3ULL;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise_scale);
  for (ConvLayer *l : {&c.gate, &c.cand, &c.out})
    for (double &w : l->kernel) w = gauss(rng);
  return c;
}

std::size_t RecurrentCellParams::param_count() const {
  return gate.param_count() + cand.param_count() + out.param_count() + 2;
}

std::vector<double> RecurrentCellParams::flatten() const {
  std::vector<double> theta;
  theta.reserve(param_count());
  for (const ConvLayer *l : {&gate, &cand, &out}) {
    theta.insert(theta.end(), l->kernel.begin(), l->kernel.end());
    theta.insert(theta.end(), l->bias.begin(), l->bias.end());
  }
  theta.push_back(skip);
  theta.push_back(step);
  return theta;
}

void RecurrentCellParams::unflatten(const std::vector<double> &theta) {
  if (theta.size() != param_count()) {
    throw Error(ErrorKind::ShapeMismatch, "cell parameter vector has " + std::to_string(theta.size()) +
                                              " entries, expected " + std::to_string(param_count()));
  }
  auto it = theta.begin();
  for (ConvLayer *l : {&gate, &cand, &out}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(l->kernel.size()), l->kernel.begin());
    it += static_cast<std::ptrdiff_t>(l->kernel.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(l->bias.size()), l->bias.begin());
    it += static_cast<std::ptrdiff_t>(l->bias.size());
  }
  skip = *it++;
  step = *it;
}

void RecurrentCellParams::validate() const {
  const std::size_t b = out.out_channels;
  if (gate.in_channels != 3 * b || cand.in_channels != 3 * b || gate.out_channels != out.in_channels ||
      cand.out_channels != out.in_channels) {
    throw Error(ErrorKind::InvalidArgument, "recurrent cell layer shapes are inconsistent");
  }
  for (double v : flatten())
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "recurrent cell parameters must be finite");
}

void RecurrentCellParams::spectral_normalize(int n_iters) {
  if (n_iters < 1) throw Error(ErrorKind::InvalidArgument, "spectral_normalize needs n_iters >= 1");
  std::uint64_t salt = 1;
  for (ConvLayer *l : {&gate, &cand, &out}) {
    const double sigma = conv_power_iteration(*l, sn_height, sn_width, n_iters, l->sn_u, sn_seed + 7919 * salt++);
    const double scale = std::min(1.0, 1.0 / std::max(sigma, 1e-12));
    if (scale < 1.0)
      for (double &w : l->kernel) w *= scale;
  }
}

double RecurrentCellParams::lipschitz_bound(double max_q, std::size_t h, std::size_t w, int iters) const {
  auto norm_of = [&](const ConvLayer &l, std::uint64_t salt) {
    std::vector<double> u;
    return conv_power_iteration(l, h, w, iters, u, sn_seed + 104729 * salt);
  };
  const double ng = norm_of(gate, 1), nc = norm_of(cand, 2), no = norm_of(out, 3);
  return std::abs(skip) + std::abs(step) * max_q + no * (0.25 * ng + nc) * std::sqrt(1.0 + max_q * max_q);
}

// ---------------------------------------------------------------------------
// DE-RNN

struct DeRnnMap::Forward {
  FeatureMap in;      // [x, Phi^T y, Phi^T (y - Phi x)]
  FeatureMap zg, zc;  // gate / candidate pre-activations
  FeatureMap h;       // sigmoid(zg) .* tanh(zc)
  VideoCube data_resid;
  VideoCube out;
};

namespace {

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

VideoCube normal_op(const SensingMask &mask, const VideoCube &v) { return adjoint(mask, forward(mask, v)); }

}  // namespace

DeRnnMap::DeRnnMap(RecurrentCellParams cell, SensingMask mask, Measurement y)
    : cell_(std::move(cell)), mask_(std::move(mask)), y_(std::move(y)), aty_(adjoint(mask_, y_)) {
  cell_.validate();
  if (cell_.frames() != mask_.frames())
    throw Error(ErrorKind::ShapeMismatch, "DE-RNN cell frames differ from mask frames");
}

DeRnnMap::Forward DeRnnMap::run(const VideoCube &x) const {
  if (!mask_.matches(x)) throw Error(ErrorKind::ShapeMismatch, "DE-RNN: cube does not match mask");
  Forward f;
  const std::size_t B = x.frames(), H = x.height(), W = x.width(), n = x.size();
  Measurement phix = forward(mask_, x);
  for (std::size_t i = 0; i < phix.data.size(); ++i) phix.data.data[i] = y_.data.data[i] - phix.data.data[i];
  f.data_resid = adjoint(mask_, phix);
  f.in = FeatureMap(3 * B, H, W);
  std::copy(x.data().begin(), x.data().end(), f.in.data.begin());
  std::copy(aty_.data().begin(), aty_.data().end(), f.in.data.begin() + static_cast<std::ptrdiff_t>(n));
  std::copy(f.data_resid.data().begin(), f.data_resid.data().end(),
            f.in.data.begin() + static_cast<std::ptrdiff_t>(2 * n));
  f.zg = conv2d(cell_.gate, f.in);
  f.zc = conv2d(cell_.cand, f.in);
  f.h = FeatureMap(f.zg.channels, H, W);
  for (std::size_t k = 0; k < f.h.data.size(); ++k) f.h.data[k] = sigmoid(f.zg.data[k]) * std::tanh(f.zc.data[k]);
  const FeatureMap o = conv2d(cell_.out, f.h);
  f.out = x;
  auto &od = f.out.data();
  for (std::size_t k = 0; k < n; ++k) {
    const double cell = cell_.skip * x.data()[k] + cell_.step * f.data_resid.data()[k] + o.data[k];
    od[k] += cell_.gamma * cell;
  }
  return f;
}

VideoCube DeRnnMap::backward(const Forward &f, const VideoCube &v, std::vector<double> *param_grad) const {
  const std::size_t B = v.frames(), H = v.height(), W = v.width(), n = v.size();
  // Cotangent of the cell output.
  VideoCube g = v;
  g.vec() *= cell_.gamma;
  FeatureMap gout(B, H, W, g.data());
  const FeatureMap gh = conv2d_transpose(cell_.out, gout);
  FeatureMap gzg(gh.channels, H, W), gzc(gh.channels, H, W);
  for (std::size_t k = 0; k < gh.data.size(); ++k) {
    const double s = sigmoid(f.zg.data[k]);
    const double t = std::tanh(f.zc.data[k]);
    gzg.data[k] = gh.data[k] * t * s * (1.0 - s);
    gzc.data[k] = gh.data[k] * s * (1.0 - t * t);
  }
  FeatureMap gin = conv2d_transpose(cell_.gate, gzg);
  const FeatureMap gin_c = conv2d_transpose(cell_.cand, gzc);
  for (std::size_t k = 0; k < gin.data.size(); ++k) gin.data[k] += gin_c.data[k];

  if (param_grad) {
    param_grad->assign(cell_.param_count(), 0.0);
    std::span<double> all(*param_grad);
    std::size_t off = 0;
    auto accumulate = [&](const ConvLayer &l, const FeatureMap &input, const FeatureMap &gy) {
      conv2d_param_grad(l, input, gy, all.subspan(off, l.kernel_size()),
                        all.subspan(off + l.kernel_size(), l.out_channels));
      off += l.param_count();
    };
    accumulate(cell_.gate, f.in, gzg);
    accumulate(cell_.cand, f.in, gzc);
    accumulate(cell_.out, f.h, gout);
    double dskip = 0.0, dstep = 0.0;
    // f.in holds x in its first n entries.
    for (std::size_t k = 0; k < n; ++k) {
      dskip += g.data()[k] * f.in.data[k];
      dstep += g.data()[k] * f.data_resid.data()[k];
    }
    (*param_grad)[off] = dskip;
    (*param_grad)[off + 1] = dstep;
  }

  // d in / dx = [I; 0; -Phi^T Phi]; the data term contributes -step Phi^T Phi g.
  VideoCube through_resid(H, W, B);
  for (std::size_t k = 0; k < n; ++k) through_resid.data()[k] = gin.data[2 * n + k] + cell_.step * g.data()[k];
  const VideoCube normal = normal_op(mask_, through_resid);
  VideoCube result = v;
  auto &rd = result.data();
  for (std::size_t k = 0; k < n; ++k) rd[k] += cell_.skip * g.data()[k] + gin.data[k] - normal.data()[k];
  return result;
}

VideoCube DeRnnMap::apply(const VideoCube &x) const { return run(x).out; }

VideoCube DeRnnMap::vjp_input(const VideoCube &x, const VideoCube &v) const {
  require_same_shape(x, v, "DeRnnMap::vjp_input");
  return backward(run(x), v, nullptr);
}

std::vector<double> DeRnnMap::vjp_params(const VideoCube &x, const VideoCube &v) const {
  require_same_shape(x, v, "DeRnnMap::vjp_params");
  std::vector<double> grad;
  backward(run(x), v, &grad);
  return grad;
}

VideoCube de_rnn_apply(const DeRnnMap &m, const VideoCube &x) { return m.apply(x); }

// ---------------------------------------------------------------------------
// Baselines

namespace {

void check_schedule(const std::vector<double> &schedule, int K) {
  if (schedule.empty()) throw Error(ErrorKind::InvalidArgument, "denoiser schedule must have at least one entry");
  if (K < 1) throw Error(ErrorKind::InvalidArgument, "iteration count K must be >= 1");
  for (double s : schedule)
    if (!(s >= 0.0)) throw Error(ErrorKind::InvalidArgument, "schedule strengths must be >= 0");
}

}  // namespace

SolveResult pnp_gap_solve(const SensingMask &mask, const Measurement &y, const std::vector<double> &schedule, int K,
                          int tv_iters, const IterateMetric &metric) {
  check_schedule(schedule, K);
  SolveResult res{init_estimate(mask, y), false, 0, {}};
  VideoCube &v = res.x_hat;
  for (int k = 1; k <= K; ++k) {
    const double lambda = schedule[static_cast<std::size_t>(k - 1) % schedule.size()];
    VideoCube next = tv_denoise(gap_project(mask, y, v), lambda, tv_iters);
    if (!next.all_finite()) throw DivergedError("PnP-GAP produced NaN/Inf at iteration " + std::to_string(k), k, res.trace);
    IterationRecord rec;
    rec.iter = k;
    rec.residual = (next.vec() - v.vec()).norm();
    rec.rel_residual = rec.residual / (v.vec().norm() + 1e-12);
    if (metric) rec.psnr = metric(next);
    res.trace.rows.push_back(std::move(rec));
    v = std::move(next);
  }
  res.iterations = K;
  return res;
}

AdmmState pnp_admm_step(const AdmmState &state, const SensingMask &mask, const Measurement &y,
                        const Denoiser &denoiser) {
  if (!(state.rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "ADMM penalty rho must be > 0");
  AdmmState next = state;
  VideoCube z = state.v;
  z.vec() -= state.u.vec() / state.rho;
  next.x = admm_x_update(mask, y.data, z, state.rho);
  VideoCube arg = next.x;
  arg.vec() += state.u.vec() / state.rho;
  next.v = denoise(denoiser, arg);
  next.u.vec() += state.rho * (next.x.vec() - next.v.vec());
  return next;
}

SolveResult pnp_admm_solve(const SensingMask &mask, const Measurement &y, double rho,
                           const std::vector<double> &schedule, int K, int tv_iters, const IterateMetric &metric) {
  check_schedule(schedule, K);
  const VideoCube x0 = init_estimate(mask, y);
  AdmmState state{x0, x0, x0.zeros_like(), rho};
  SolveResult res{x0, false, 0, {}};
  for (int k = 1; k <= K; ++k) {
    const double lambda = schedule[static_cast<std::size_t>(k - 1) % schedule.size()];
    const Denoiser d = lambda > 0.0 ? Denoiser{TvDenoiser{lambda, tv_iters}} : Denoiser{IdentityDenoiser{}};
    AdmmState next = pnp_admm_step(state, mask, y, d);
    if (!next.v.all_finite()) throw DivergedError("PnP-ADMM produced NaN/Inf at iteration " + std::to_string(k), k, res.trace);
    IterationRecord rec;
    rec.iter = k;
    rec.residual = (next.v.vec() - state.v.vec()).norm();
    rec.rel_residual = rec.residual / (state.v.vec().norm() + 1e-12);
    if (metric) rec.psnr = metric(next.v);
    res.trace.rows.push_back(std::move(rec));
    state = std::move(next);
  }
  res.x_hat = state.v;
  res.iterations = K;
  return res;
}

// ---------------------------------------------------------------------------
// Models and checkpoints

void Model::save(const std::string &) const {
  throw Error(ErrorKind::Unsupported, "model kind '" + kind() + "' cannot be saved");
}

std::unique_ptr<IterationMap> DeGapModel::bind(const SensingMask &mask, const Measurement &y) const {
  return std::make_unique<DeGapMap>(Denoiser{denoiser_}, mask, y);
}

std::unique_ptr<IterationMap> DeRnnModel::bind(const SensingMask &mask, const Measurement &y) const {
  return std::make_unique<DeRnnMap>(cell_, mask, y);
}

void DeRnnModel::save(const std::string &path) const { save_cell_checkpoint(path, cell_); }

void save_cell_checkpoint(const std::string &path, const RecurrentCellParams &c) {
  const std::vector<double> theta = c.flatten();
  write_tensor(path, Tensor{{static_cast<std::uint32_t>(theta.size())}, theta, Dtype::Float64});
  char gamma[32];
  std::snprintf(gamma, sizeof gamma, "%.17g", c.gamma);
  write_sidecar(path + ".meta", {{"kind", "de_rnn"},
                                 {"frames", std::to_string(c.frames())},
                                 {"hidden", std::to_string(c.hidden())},
                                 {"ksize", std::to_string(c.out.ksize)},
                                 {"gamma", gamma},
                                 {"sn_height", std::to_string(c.sn_height)},
                                 {"sn_width", std::to_string(c.sn_width)},
                                 {"sn_seed", std::to_string(c.sn_seed)}});
}

RecurrentCellParams load_cell_checkpoint(const std::string &path) {
  const Sidecar kv = read_sidecar(path + ".meta");
  auto need = [&](const char *key) -> const std::string & {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorKind::Io, "checkpoint sidecar for '" + path + "' lacks key " + key);
    return it->second;
  };
  if (need("kind") != "de_rnn") throw Error(ErrorKind::Io, "'" + path + "' is not a de_rnn checkpoint");
  const std::size_t frames = std::stoul(need("frames"));
  const std::size_t hidden = std::stoul(need("hidden"));
  const std::size_t ksize = std::stoul(need("ksize"));
  RecurrentCellParams c;
  c.gate = ConvLayer(3 * frames, hidden, ksize);
  c.cand = ConvLayer(3 * frames, hidden, ksize);
  c.out = ConvLayer(hidden, frames, ksize);
  c.gamma = std::stod(need("gamma"));
  c.sn_height = std::stoul(need("sn_height"));
  c.sn_width = std::stoul(need("sn_width"));
  c.sn_seed = std::stoull(need("sn_seed"));
  c.unflatten(read_tensor(path, Dtype::Float64).data);
  c.validate();
  return c;
}

std::unique_ptr<Model> load_model(const std::string &path) {
  const Sidecar kv = read_sidecar(path + ".meta");
  const auto it = kv.find("kind");
  if (it == kv.end()) throw Error(ErrorKind::Io, "checkpoint sidecar for '" + path + "' lacks key kind");
  if (it->second == "conv_residual") return std::make_unique<DeGapModel>(load_checkpoint(path));
  if (it->second == "de_rnn") return std::make_unique<DeRnnModel>(load_cell_checkpoint(path));
  throw Error(ErrorKind::Io, "unknown checkpoint kind '" + it->second + "' in '" + path + "'");
}

}  // namespace deqsci

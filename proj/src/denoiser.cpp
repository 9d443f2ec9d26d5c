#include "deqsci/denoiser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "deqsci/error.hpp"
#include "deqsci/tensor_io.hpp"

namespace deqsci {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

FeatureMap as_features(const VideoCube &x) { return FeatureMap(x.frames(), x.height(), x.width(), x.data()); }

void check_conv_shape(const ConvDenoiserParams &p, const VideoCube &x) {
  if (p.layers.empty()) throw Error(ErrorKind::InvalidArgument, "conv_residual denoiser has no layers");
  if (x.frames() != p.layers.front().in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "conv_residual denoiser built for " +
                                              std::to_string(p.layers.front().in_channels) + " frames, cube has " +
                                              std::to_string(x.frames()));
  }
}

void check_finite(const VideoCube &x, const char *what) {
  if (!x.all_finite()) throw Error(ErrorKind::NonFinite, std::string(what) + ": input contains NaN or Inf");
}

/// Forward pass of r keeping the pre-activations z_l and the layer inputs a_l.
struct ConvForward {
  std::vector<FeatureMap> inputs;       // a_0 .. a_{L-1}
  std::vector<FeatureMap> preacts;      // z_0 .. z_{L-2}
  FeatureMap output;                    // r(x)
};

ConvForward conv_forward(const ConvDenoiserParams &p, const VideoCube &x) {
  ConvForward f;
  f.inputs.push_back(as_features(x));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    FeatureMap z = conv2d(p.layers[l], f.inputs.back());
    if (l + 1 == p.layers.size()) {
      f.output = std::move(z);
    } else {
      FeatureMap a = z;
      for (double &v : a.data) v = smooth_act(v);
      f.preacts.push_back(std::move(z));
      f.inputs.push_back(std::move(a));
    }
  }
  return f;
}

/// Reverse sweep through r with output cotangent g. Optionally accumulates
/// parameter gradients; returns the cotangent at the input.
FeatureMap conv_backward(const ConvDenoiserParams &p, const ConvForward &f, FeatureMap g,
                         std::vector<double> *param_grad) {
  std::vector<std::size_t> offsets(p.layers.size());
  std::size_t off = 0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    offsets[l] = off;
    off += p.layers[l].param_count();
  }
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const ConvLayer &layer = p.layers[l];
    if (param_grad) {
      std::span<double> all(*param_grad);
      conv2d_param_grad(layer, f.inputs[l], g, all.subspan(offsets[l], layer.kernel_size()),
                        all.subspan(offsets[l] + layer.kernel_size(), layer.out_channels));
    }
    FeatureMap ga = conv2d_transpose(layer, g);
    if (l > 0) {
      const FeatureMap &z = f.preacts[l - 1];
      for (std::size_t k = 0; k < ga.data.size(); ++k) ga.data[k] *= smooth_act_grad(z.data[k]);
    }
    g = std::move(ga);
  }
  return g;
}

void set_center_identity(ConvLayer &layer, double scale) {
  const std::size_t c = layer.ksize / 2;
  for (std::size_t k = 0; k < std::min(layer.in_channels, layer.out_channels); ++k) layer.w(k, k, c, c) = scale;
}

void set_shrinking_smoother(ConvLayer &layer) {
  // -(I - blur / 2) with blur = [1 2 1]^T [1 2 1] / 16 (3x3 core of the kernel).
  // Frequency response lies in [-1, -1/2], so the operator norm is 1.
  const std::size_t c = layer.ksize / 2;
  static constexpr double kBlur[3] = {0.25, 0.5, 0.25};
  for (std::size_t k = 0; k < std::min(layer.in_channels, layer.out_channels); ++k) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (layer.ksize < 3) continue;
        layer.w(k, k, c + dy, c + dx) += 0.5 * kBlur[dy + 1] * kBlur[dx + 1];
      }
    }
    layer.w(k, k, c, c) -= 1.0;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvDenoiserParams

ConvDenoiserParams ConvDenoiserParams::make(std::size_t frames, std::size_t hidden, std::size_t n_layers,
                                            std::size_t ksize, double gamma, std::uint64_t seed, ConvInit init,
                                            double noise_scale) {
  if (frames == 0 || hidden == 0 || n_layers == 0 || ksize % 2 == 0) {
    throw Error(ErrorKind::InvalidArgument, "conv denoiser needs frames, hidden, layers >= 1 and an odd kernel size");
  }
  ConvDenoiserParams p;
  p.gamma = gamma;
  p.sn_seed = seed ^ 0x9e3779b97f4a7c15ULL;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = l == 0 ? frames : hidden;
    const std::size_t out = l + 1 == n_layers ? frames : hidden;
    p.layers.emplace_back(in, out, ksize);
  }
  if (init == ConvInit::Smoothing) {
    for (std::size_t l = 0; l + 1 < n_layers; ++l) set_center_identity(p.layers[l], 1.0);
    set_shrinking_smoother(p.layers.back());
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise_scale);
  for (ConvLayer &layer : p.layers) {
    for (double &w : layer.kernel) w += gauss(rng);
  }
  validate(Denoiser{p});
  return p;
}

std::size_t ConvDenoiserParams::param_count() const {
  std::size_t n = 0;
  for (const auto &l : layers) n += l.param_count();
  return n;
}

std::vector<double> ConvDenoiserParams::flatten() const {
  std::vector<double> theta;
  theta.reserve(param_count());
  for (const auto &l : layers) {
    theta.insert(theta.end(), l.kernel.begin(), l.kernel.end());
    theta.insert(theta.end(), l.bias.begin(), l.bias.end());
  }
  return theta;
}

void ConvDenoiserParams::unflatten(const std::vector<double> &theta) {
  if (theta.size() != param_count()) {
    throw Error(ErrorKind::ShapeMismatch,
                "parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                    std::to_string(param_count()));
  }
  auto it = theta.begin();
  for (auto &l : layers) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(l.kernel.size()), l.kernel.begin());
    it += static_cast<std::ptrdiff_t>(l.kernel.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(l.bias.size()), l.bias.begin());
    it += static_cast<std::ptrdiff_t>(l.bias.size());
  }
}

std::string ConvDenoiserParams::architecture() const {
  std::string s;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l) s += ',';
    s += std::to_string(layers[l].in_channels) + ':' + std::to_string(layers[l].out_channels) + ':' +
         std::to_string(layers[l].ksize);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Operator dispatch

void validate(const Denoiser &d) {
  std::visit(overloaded{
                 [](const IdentityDenoiser &) {},
                 [](const ScaleShiftDenoiser &s) {
                   if (!std::isfinite(s.a) || !std::isfinite(s.b))
                     throw Error(ErrorKind::InvalidArgument, "scale_shift parameters must be finite");
                 },
                 [](const TvDenoiser &t) {
                   if (!(t.lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tv lambda must be >= 0");
                   if (t.iters < 1) throw Error(ErrorKind::InvalidArgument, "tv iters must be >= 1");
                 },
                 [](const ConvDenoiserParams &p) {
                   if (p.layers.empty()) throw Error(ErrorKind::InvalidArgument, "conv_residual needs layers");
                   if (!std::isfinite(p.gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be finite");
                   for (std::size_t l = 0; l < p.layers.size(); ++l) {
                     const auto &L = p.layers[l];
                     if (L.ksize % 2 == 0) throw Error(ErrorKind::InvalidArgument, "kernel size must be odd");
                     if (l > 0 && L.in_channels != p.layers[l - 1].out_channels)
                       throw Error(ErrorKind::InvalidArgument, "layer " + std::to_string(l) + " channel mismatch");
                   }
                   if (p.layers.back().out_channels != p.layers.front().in_channels)
                     throw Error(ErrorKind::InvalidArgument, "residual output channels must equal input channels");
                 },
             },
             d);
}

bool is_trainable(const Denoiser &d) { return std::holds_alternative<ConvDenoiserParams>(d); }

VideoCube denoise(const Denoiser &d, const VideoCube &x) {
  check_finite(x, "denoise");
  return std::visit(overloaded{
                        [&](const IdentityDenoiser &) { return x; },
                        [&](const ScaleShiftDenoiser &s) {
                          VideoCube out = x;
                          for (double &v : out.data()) v = s.a * v + s.b;
                          return out;
                        },
                        [&](const TvDenoiser &t) { return tv_denoise(x, t.lambda, t.iters); },
                        [&](const ConvDenoiserParams &p) {
                          check_conv_shape(p, x);
                          const ConvForward f = conv_forward(p, x);
                          VideoCube out = x;
                          auto &o = out.data();
                          for (std::size_t k = 0; k < o.size(); ++k) o[k] += p.gamma * f.output.data[k];
                          return out;
                        },
                    },
                    d);
}

VideoCube denoise_residual(const Denoiser &d, const VideoCube &x) {
  check_finite(x, "denoise_residual");
  return std::visit(overloaded{
                        [&](const IdentityDenoiser &) { return x.zeros_like(); },
                        [&](const ScaleShiftDenoiser &s) {
                          VideoCube out = x;
                          for (double &v : out.data()) v = (s.a - 1.0) * v + s.b;
                          return out;
                        },
                        [&](const TvDenoiser &t) {
                          VideoCube out = tv_denoise(x, t.lambda, t.iters);
                          out.vec() -= x.vec();
                          return out;
                        },
                        [&](const ConvDenoiserParams &p) {
                          check_conv_shape(p, x);
                          ConvForward f = conv_forward(p, x);
                          VideoCube out(x.height(), x.width(), x.frames(), std::move(f.output.data));
                          out.vec() *= p.gamma;
                          return out;
                        },
                    },
                    d);
}

VideoCube vjp_input(const Denoiser &d, const VideoCube &x, const VideoCube &v) {
  require_same_shape(x, v, "vjp_input");
  check_finite(x, "vjp_input");
  return std::visit(overloaded{
                        [&](const IdentityDenoiser &) { return v; },
                        [&](const ScaleShiftDenoiser &s) {
                          VideoCube out = v;
                          out.vec() *= s.a;
                          return out;
                        },
                        [&](const TvDenoiser &) -> VideoCube {
                          throw Error(ErrorKind::Unsupported, "tv denoiser has no vector-Jacobian product");
                        },
                        [&](const ConvDenoiserParams &p) {
                          check_conv_shape(p, x);
                          const ConvForward f = conv_forward(p, x);
                          FeatureMap g = as_features(v);
                          for (double &e : g.data) e *= p.gamma;
                          FeatureMap gx = conv_backward(p, f, std::move(g), nullptr);
                          VideoCube out = v;
                          auto &o = out.data();
                          for (std::size_t k = 0; k < o.size(); ++k) o[k] += gx.data[k];
                          return out;
                        },
                    },
                    d);
}

std::vector<double> grad_params(const Denoiser &d, const VideoCube &x, const VideoCube &v) {
  require_same_shape(x, v, "grad_params");
  const auto *p = std::get_if<ConvDenoiserParams>(&d);
  if (!p) throw Error(ErrorKind::Unsupported, "only conv_residual denoisers have trainable parameters");
  check_conv_shape(*p, x);
  check_finite(x, "grad_params");
  const ConvForward f = conv_forward(*p, x);
  FeatureMap g = as_features(v);
  for (double &e : g.data) e *= p->gamma;
  std::vector<double> grad(p->param_count(), 0.0);
  conv_backward(*p, f, std::move(g), &grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Total variation

namespace {

// Forward differences of one frame: horizontal into dh (last column zero),
// vertical into dv (last row zero).
void tv_grad(const double *z, std::size_t H, std::size_t W, std::vector<double> &dh, std::vector<double> &dv) {
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t k = i * W + j;
      dh[k] = j + 1 < W ? z[k + 1] - z[k] : 0.0;
      dv[k] = i + 1 < H ? z[k + W] - z[k] : 0.0;
    }
  }
}

// Adjoint of tv_grad.
void tv_grad_adjoint(const std::vector<double> &ph, const std::vector<double> &pv, std::size_t H, std::size_t W,
                     double *out) {
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t k = i * W + j;
      double s = 0.0;
      if (j + 1 < W) s -= ph[k];
      if (j > 0) s += ph[k - 1];
      if (i + 1 < H) s -= pv[k];
      if (i > 0) s += pv[k - W];
      out[k] = s;
    }
  }
}

}  // namespace

VideoCube tv_denoise(const VideoCube &x, double lambda, int iters) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tv lambda must be >= 0");
  if (iters < 1) throw Error(ErrorKind::InvalidArgument, "tv iters must be >= 1");
  if (lambda == 0.0) return x;
  const std::size_t H = x.height(), W = x.width(), n = H * W;
  const double step = 1.0 / (8.0 * lambda);
  VideoCube out = x;
  std::vector<double> ph(n), pv(n), qh(n), qv(n), ph_old(n), pv_old(n), dh(n), dv(n), z(n), adj(n);
  for (std::size_t b = 0; b < x.frames(); ++b) {
    const auto xb = x.frame(b);
    std::fill(ph.begin(), ph.end(), 0.0);
    std::fill(pv.begin(), pv.end(), 0.0);
    qh = ph;
    qv = pv;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
      tv_grad_adjoint(qh, qv, H, W, adj.data());
      for (std::size_t k = 0; k < n; ++k) z[k] = xb[k] - lambda * adj[k];
      tv_grad(z.data(), H, W, dh, dv);
      ph_old.swap(ph);
      pv_old.swap(pv);
      for (std::size_t k = 0; k < n; ++k) {
        ph[k] = std::clamp(qh[k] + step * dh[k], -1.0, 1.0);
        pv[k] = std::clamp(qv[k] + step * dv[k], -1.0, 1.0);
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      for (std::size_t k = 0; k < n; ++k) {
        qh[k] = ph[k] + beta * (ph[k] - ph_old[k]);
        qv[k] = pv[k] + beta * (pv[k] - pv_old[k]);
      }
      t = t_next;
    }
    tv_grad_adjoint(ph, pv, H, W, adj.data());
    auto ob = out.frame(b);
    for (std::size_t k = 0; k < n; ++k) ob[k] = xb[k] - lambda * adj[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral normalization and Lipschitz diagnostics

void spectral_normalize_in_place(ConvDenoiserParams &p, int n_iters) {
  if (n_iters < 1) throw Error(ErrorKind::InvalidArgument, "spectral_normalize needs n_iters >= 1");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    ConvLayer &layer = p.layers[l];
    const double sigma =
        conv_power_iteration(layer, p.sn_height, p.sn_width, n_iters, layer.sn_u, p.sn_seed + 7919 * (l + 1));
    const double scale = std::min(1.0, 1.0 / std::max(sigma, 1e-12));
    if (scale < 1.0)
      for (double &w : layer.kernel) w *= scale;
  }
}

ConvDenoiserParams spectral_normalize(const ConvDenoiserParams &p, int n_iters) {
  ConvDenoiserParams out = p;
  spectral_normalize_in_place(out, n_iters);
  return out;
}

std::vector<double> layer_operator_norms(const ConvDenoiserParams &p, std::size_t h, std::size_t w, int iters) {
  std::vector<double> norms;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    std::vector<double> u;
    norms.push_back(conv_power_iteration(p.layers[l], h, w, iters, u, p.sn_seed + 104729 * (l + 1)));
  }
  return norms;
}

double residual_lipschitz_bound(const ConvDenoiserParams &p, std::size_t h, std::size_t w, int iters) {
  double bound = std::abs(p.gamma);
  for (double s : layer_operator_norms(p, h, w, iters)) bound *= s;
  return bound;
}

double estimate_residual_lipschitz(const Denoiser &d, std::uint64_t seed, int n_pairs, std::size_t h, std::size_t w,
                                   std::size_t b) {
  if (n_pairs < 1) throw Error(ErrorKind::InvalidArgument, "n_pairs must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    VideoCube x(h, w, b), xp(h, w, b);
    for (double &v : x.data()) v = unif(rng);
    if (k % 2 == 0) {
      for (double &v : xp.data()) v = unif(rng);
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) xp.data()[i] = x.data()[i] + 1e-3 * gauss(rng);
    }
    const double dx = (x.vec() - xp.vec()).norm();
    if (dx == 0.0) continue;
    const VideoCube rx = denoise_residual(d, x);
    const VideoCube rxp = denoise_residual(d, xp);
    best = std::max(best, (rx.vec() - rxp.vec()).norm() / dx);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_sidecar(const std::string &path, const Sidecar &kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  for (const auto &[k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw Error(ErrorKind::Io, "short write to '" + path + "'");
}

Sidecar read_sidecar(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  Sidecar kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Io, "malformed sidecar line '" + line + "' in " + path);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void save_checkpoint(const std::string &path, const ConvDenoiserParams &p) {
  const std::vector<double> theta = p.flatten();
  write_tensor(path, Tensor{{static_cast<std::uint32_t>(theta.size())}, theta, Dtype::Float64});
  write_sidecar(path + ".meta", {{"kind", "conv_residual"},
                                 {"arch", p.architecture()},
                                 {"gamma", format_double(p.gamma)},
                                 {"sn_height", std::to_string(p.sn_height)},
                                 {"sn_width", std::to_string(p.sn_width)},
                                 {"sn_seed", std::to_string(p.sn_seed)}});
}

ConvDenoiserParams load_checkpoint(const std::string &path) {
  const Sidecar kv = read_sidecar(path + ".meta");
  auto need = [&](const char *key) -> const std::string & {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorKind::Io, "checkpoint sidecar for '" + path + "' lacks key " + key);
    return it->second;
  };
  if (need("kind") != "conv_residual") throw Error(ErrorKind::Io, "'" + path + "' is not a conv_residual checkpoint");
  ConvDenoiserParams p;
  p.gamma = std::stod(need("gamma"));
  p.sn_height = std::stoul(need("sn_height"));
  p.sn_width = std::stoul(need("sn_width"));
  p.sn_seed = std::stoull(need("sn_seed"));
  std::stringstream arch(need("arch"));
  std::string item;
  while (std::getline(arch, item, ',')) {
    std::size_t in = 0, out = 0, k = 0;
    if (std::sscanf(item.c_str(), "%zu:%zu:%zu", &in, &out, &k) != 3)
      throw Error(ErrorKind::Io, "bad layer descriptor '" + item + "' in checkpoint '" + path + "'");
    p.layers.emplace_back(in, out, k);
  }
  validate(Denoiser{p});
  const Tensor t = read_tensor(path, Dtype::Float64);
  p.unflatten(t.data);
  return p;
}

}  // namespace deqsci

#include "deqsci/bench.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "deqsci/error.hpp"
#include "deqsci/iteration_maps.hpp"
#include "deqsci/metrics.hpp"
#include "deqsci/sci.hpp"

namespace deqsci {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_real(const std::string &s, const std::string &context) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw Error(ErrorKind::Config, "bad number '" + s + "' in method '" + context + "'");
  return v;
}

std::vector<double> parse_schedule(const std::string &s, const std::string &context) {
  std::vector<double> out;
  for (const auto &part : split(s, '/')) out.push_back(parse_real(part, context));
  if (out.empty()) throw Error(ErrorKind::Config, "empty schedule in method '" + context + "'");
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Trajectory {
  std::vector<double> psnr;
  std::vector<double> residual;
  std::vector<double> time_ms;
  VideoCube last;
  bool diverged = false;
  int diverged_at = 0;
  double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Trajectory run_equilibrium(const IterationMap &map, const SensingMask &mask, const Measurement &y,
                           const VideoCube &x_star, int K) {
  Trajectory t;
  const auto t0 = Clock::now();
  VideoCube x = init_estimate(mask, y);
  for (int k = 1; k <= K; ++k) {
    VideoCube next = map.apply(x);
    if (!next.all_finite()) {
      t.diverged = true;
      t.diverged_at = k;
      break;
    }
    t.residual.push_back((next.vec() - x.vec()).norm());
    t.psnr.push_back(psnr(clamp01(next), x_star).mean);
    t.time_ms.push_back(ms_since(t0));
    x = std::move(next);
  }
  t.seconds = ms_since(t0) / 1000.0;
  t.last = std::move(x);
  return t;
}

Trajectory run_classical(const BenchMethod &m, const SensingMask &mask, const Measurement &y,
                         const VideoCube &x_star, int K) {
  Trajectory t;
  const auto t0 = Clock::now();
  const IterateMetric metric = [&](const VideoCube &v) {
    const double p = psnr(clamp01(v), x_star).mean;
    t.time_ms.push_back(ms_since(t0));
    return p;
  };
  auto take_trace = [&](const IterationTrace &tr) {
    for (const auto &r : tr.rows) {
      t.residual.push_back(r.residual);
      t.psnr.push_back(r.psnr.value_or(kNaN));
    }
    t.time_ms.resize(t.psnr.size());
  };
  try {
    SolveResult r = m.kind == BenchMethod::Kind::PnpGap
                        ? pnp_gap_solve(mask, y, m.schedule, K, m.tv_iters, metric)
                        : pnp_admm_solve(mask, y, m.rho, m.schedule, K, m.tv_iters, metric);
    take_trace(r.trace);
    t.last = std::move(r.x_hat);
  } catch (const DivergedError &e) {
    take_trace(e.trace());
    t.diverged = true;
    t.diverged_at = e.iteration();
  }
  t.seconds = ms_since(t0) / 1000.0;
  return t;
}

std::string sanitize(std::string s) {
  for (char &c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  return s;
}

}  // namespace

BenchMethod parse_bench_method(const std::string &text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  BenchMethod m;
  m.label = kind;
  if (kind == "pnp_gap") {
    m.kind = BenchMethod::Kind::PnpGap;
    if (!rest.empty()) m.schedule = parse_schedule(rest, text);
  } else if (kind == "admm") {
    m.kind = BenchMethod::Kind::Admm;
    if (!rest.empty()) {
      const auto c2 = rest.find(':');
      m.rho = parse_real(rest.substr(0, c2), text);
      if (c2 != std::string::npos) m.schedule = parse_schedule(rest.substr(c2 + 1), text);
    }
  } else if (kind == "de_gap") {
    m.kind = BenchMethod::Kind::DeGap;
    m.checkpoint = rest;
    if (rest.empty()) m.label = "de_gap_identity";
  } else if (kind == "de_rnn") {
    m.kind = BenchMethod::Kind::DeRnn;
    if (rest.empty()) throw Error(ErrorKind::Config, "method de_rnn needs a checkpoint: de_rnn:<path>");
    m.checkpoint = rest;
  } else {
    throw Error(ErrorKind::Config, "unknown bench method '" + text + "'");
  }
  return m;
}

std::string to_string(const BenchMethod &m) {
  auto sched = [&] {
    std::string s;
    for (std::size_t i = 0; i < m.schedule.size(); ++i) s += (i ? "/" : "") + fmt(m.schedule[i]);
    return s;
  };
  switch (m.kind) {
    case BenchMethod::Kind::PnpGap: return "pnp_gap:" + sched();
    case BenchMethod::Kind::Admm: return "admm:" + fmt(m.rho) + ":" + sched();
    case BenchMethod::Kind::DeGap: return m.checkpoint.empty() ? "de_gap" : "de_gap:" + m.checkpoint;
    case BenchMethod::Kind::DeRnn: return "de_rnn:" + m.checkpoint;
  }
  return "?";
}

std::string scene_label(const SyntheticScene &s) {
  return std::string(to_string(s.kind)) + "_s" + std::to_string(s.seed);
}

std::vector<Sample> synthetic_samples(const SyntheticScene &base, int count, const SensingMask &mask,
                                      double noise_sigma, std::uint64_t noise_seed) {
  std::vector<Sample> out;
  for (int k = 0; k < count; ++k) {
    SyntheticScene s = base;
    s.seed = base.seed + static_cast<std::uint64_t>(k);
    VideoCube x = synth_video(s);
    if (!mask.matches(x)) throw Error(ErrorKind::ShapeMismatch, "scene and mask shapes differ");
    Measurement y = add_noise(forward(mask, x), noise_sigma, noise_seed + static_cast<std::uint64_t>(k));
    out.push_back(Sample{mask, std::move(y), std::move(x)});
  }
  return out;
}

void BenchSpec::validate() const {
  if (scenes.empty()) throw Error(ErrorKind::Config, "bench needs at least one scene");
  if (methods.empty()) throw Error(ErrorKind::Config, "bench needs at least one method");
  if (K < 1) throw Error(ErrorKind::Config, "bench K must be >= 1");
  if (workers < 1) throw Error(ErrorKind::Config, "bench workers must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::Config, "noise sigma must be >= 0");
  for (const auto &m : methods) {
    if (m.kind == BenchMethod::Kind::Admm && !(m.rho > 0.0)) throw Error(ErrorKind::Config, "admm rho must be > 0");
    for (double l : m.schedule)
      if (!(l >= 0.0)) throw Error(ErrorKind::Config, "TV strengths must be >= 0");
  }
}

BenchResult run_trajectory_bench(const BenchSpec &spec) {
  spec.validate();
  // Load every checkpoint up front so a missing file fails before any work.
  std::vector<std::unique_ptr<Model>> models(spec.methods.size());
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    const auto &meth = spec.methods[m];
    if (meth.checkpoint.empty()) continue;
    if (!std::filesystem::exists(meth.checkpoint))
      throw Error(ErrorKind::Io, "checkpoint '" + meth.checkpoint + "' does not exist");
    models[m] = load_model(meth.checkpoint);
    const std::string want = meth.kind == BenchMethod::Kind::DeGap ? "de_gap" : "de_rnn";
    if (models[m]->kind() != want)
      throw Error(ErrorKind::Config, "checkpoint '" + meth.checkpoint + "' holds a " + models[m]->kind() +
                                         " model, expected " + want);
  }

  std::vector<std::string> labels;
  std::map<std::string, int> seen;
  for (const auto &m : spec.methods) {
    std::string l = sanitize(m.label.empty() ? parse_bench_method(to_string(m)).label : m.label);
    const int n = ++seen[l];
    labels.push_back(n == 1 ? l : l + "_" + std::to_string(n));
  }

  std::error_code ec;
  std::filesystem::create_directories(spec.output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory '" + spec.output_dir + "': " + ec.message());

  const std::size_t n_cells = spec.scenes.size() * spec.methods.size();
  std::vector<BenchRow> rows(n_cells);
  std::vector<std::exception_ptr> errors(n_cells);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t cell = next++; cell < n_cells; cell = next++) {
      try {
        const SyntheticScene &scene = spec.scenes[cell / spec.methods.size()];
        const std::size_t mi = cell % spec.methods.size();
        const BenchMethod &meth = spec.methods[mi];
        const VideoCube x_star = synth_video(scene);
        const SensingMask mask = mask_generate(spec.mask_seed, scene.h, scene.w, scene.b,
                                               MaskKind::bernoulli(spec.mask_p), DeadPixelPolicy::floor());
        const Measurement y = add_noise(forward(mask, x_star), spec.noise_sigma, spec.noise_seed ^ scene.seed);

        Trajectory t;
        switch (meth.kind) {
          case BenchMethod::Kind::PnpGap:
          case BenchMethod::Kind::Admm: t = run_classical(meth, mask, y, x_star, spec.K); break;
          case BenchMethod::Kind::DeGap:
          case BenchMethod::Kind::DeRnn: {
            std::unique_ptr<IterationMap> map =
                models[mi] ? models[mi]->bind(mask, y)
                           : std::make_unique<DeGapMap>(Denoiser{IdentityDenoiser{}}, mask, y);
            t = run_equilibrium(*map, mask, y, x_star, spec.K);
            break;
          }
        }

        BenchRow &row = rows[cell];
        row.scene = scene_label(scene);
        row.method = labels[mi];
        row.diverged = t.diverged;
        row.diverged_at = t.diverged_at;
        row.final_psnr = t.psnr.empty() ? kNaN : t.psnr.back();
        row.max_psnr = kNaN;
        for (double p : t.psnr)
          if (std::isnan(row.max_psnr) || p > row.max_psnr) row.max_psnr = p;
        row.drop_db = t.diverged ? kNaN : row.max_psnr - row.final_psnr;
        row.mean_ssim = (!t.diverged && scene.h >= 11 && scene.w >= 11) ? ssim(clamp01(t.last), x_star).mean : kNaN;
        row.sec_per_meas = spec.timing ? t.seconds : kNaN;

        row.trace_file = (std::filesystem::path(spec.output_dir) / ("trace_" + row.scene + "_" + row.method + ".csv")).string();
        std::ofstream out(row.trace_file, std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot open '" + row.trace_file + "' for writing");
        out << "iter,psnr,residual,time_ms\n";
        for (std::size_t k = 0; k < t.psnr.size(); ++k)
          out << (k + 1) << ',' << fmt(t.psnr[k]) << ',' << fmt(t.residual[k]) << ','
              << (spec.timing ? fmt(t.time_ms[k]) : "") << '\n';
        if (!out) throw Error(ErrorKind::Io, "short write to '" + row.trace_file + "'");
      } catch (...) {
        errors[cell] = std::current_exception();
      }
    }
  };

  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(spec.workers), n_cells));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);

  BenchResult result;
  result.rows = std::move(rows);
  result.summary_file = (std::filesystem::path(spec.output_dir) / "summary.csv").string();
  std::ofstream out(result.summary_file, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + result.summary_file + "' for writing");
  out << "scene,method,final_psnr,max_psnr,drop_db,mean_ssim,sec_per_meas\n";
  for (const auto &r : result.rows)
    out << r.scene << ',' << r.method << ',' << fmt(r.final_psnr) << ',' << fmt(r.max_psnr) << ','
        << fmt(r.drop_db) << ',' << fmt(r.mean_ssim) << ',' << (spec.timing ? fmt(r.sec_per_meas) : "") << '\n';
  if (!out) throw Error(ErrorKind::Io, "short write to '" + result.summary_file + "'");
  return result;
}

}  // namespace deqsci

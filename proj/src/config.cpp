#include "deqsci/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (s.back() == sep) out.emplace_back();
  return out;
}

Error bad_value(const std::string &key, const std::string &value, const std::string &what) {
  return Error(ErrorKind::Config, "config key '" + key + "': '" + value + "' is not " + what);
}

double to_real(const std::string &key, const std::string &v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw bad_value(key, v, "a number");
  return out;
}

long long to_int(const std::string &key, const std::string &v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(const std::string &key, const std::string &v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw bad_value(key, v, "a nonnegative integer");
  return out;
}

bool to_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw bad_value(key, v, "a boolean (true/false)");
}

const std::vector<ConfigKey> kKeys = {
    {"seed", "0", "u64", "base seed for commands without a more specific one"},
    // scene
    {"scene.kind", "moving_square", "moving_square|shifting_gradient|bouncing_dots", "synthetic scene generator"},
    {"scene.seed", "0", "u64", "scene seed"},
    {"scene.height", "64", "int", "frame height"},
    {"scene.width", "64", "int", "frame width"},
    {"scene.frames", "8", "int", "frames per measurement (B)"},
    {"scene.amplitude", "1", "int", "motion in pixels per frame"},
    // mask and noise
    {"mask.kind", "bernoulli", "bernoulli|all_ones", "mask generator"},
    {"mask.p", "0.5", "real", "Bernoulli on-probability"},
    {"mask.seed", "1", "u64", "mask seed"},
    {"mask.dead_pixels", "floor", "floor|reject", "policy for pixels no mask frame covers"},
    {"mask.tau", "1e-6", "real", "mask energy floor under the floor policy"},
    {"noise.sigma", "0", "real", "measurement noise standard deviation"},
    {"noise.seed", "7", "u64", "noise seed"},
    // files
    {"io.mask", "", "str", "mask tensor file"},
    {"io.cube", "", "str", "ground-truth cube tensor file"},
    {"io.measurement", "", "str", "measurement tensor file"},
    {"io.output", "", "str", "output file (cube, checkpoint or report)"},
    {"io.trace", "", "str", "iteration trace CSV"},
    {"io.log", "", "str", "training log CSV"},
    {"io.checkpoint", "", "str", "model checkpoint to load"},
    // reconstruction
    {"method", "de-gap", "de-gap|de-rnn|pnp-gap|pnp-admm", "reconstruction method"},
    {"solver.kind", "anderson", "anderson|picard", "fixed-point solver"},
    {"solver.tol", "1e-6", "real", "relative residual tolerance"},
    {"solver.max_iter", "150", "int", "iteration cap"},
    {"solver.memory", "3", "int", "Anderson history size"},
    {"solver.damping", "1", "real", "Anderson damping"},
    {"solver.reg", "1e-8", "real", "Anderson Tikhonov weight"},
    {"solver.divergence_factor", "1e6", "real", "residual blow-up factor treated as divergence"},
    {"pnp.schedule", "0.05", "reals", "TV strengths cycled over iterations, '/'-separated"},
    {"pnp.iters", "50", "int", "PnP iterations"},
    {"pnp.tv_iters", "20", "int", "inner TV iterations"},
    {"admm.rho", "1", "real", "ADMM penalty"},
    // model
    {"model.kind", "de_gap", "de_gap|de_rnn", "trainable model"},
    {"model.hidden", "8", "int", "hidden channels"},
    {"model.layers", "3", "int", "conv layers (de_gap)"},
    {"model.ksize", "3", "int", "kernel size"},
    {"model.gamma", "0.9", "real", "residual factor gamma"},
    {"model.init", "smoothing", "smoothing|random", "conv initialization"},
    {"model.noise", "0.01", "real", "init noise scale"},
    {"model.seed", "0", "u64", "init seed"},
    // backward pass
    {"backward.mode", "fixed_point", "fixed_point|neumann", "implicit backward solve"},
    {"backward.terms", "50", "int", "Neumann terms"},
    {"backward.tol", "1e-8", "real", "backward relative tolerance"},
    {"backward.max_iter", "150", "int", "backward iteration cap"},
    // training
    {"train.samples", "64", "int", "training cubes"},
    {"train.val_samples", "8", "int", "held-out cubes"},
    {"train.epochs", "6", "int", "epochs"},
    {"train.batch_size", "1", "int", "mini-batch size"},
    {"train.lr", "2e-6", "real", "learning rate (the loss is a sum over voxels)"},
    {"train.lr_decay", "0.9", "real", "learning-rate factor"},
    {"train.decay_every", "10", "int", "epochs between decays"},
    {"train.momentum", "0", "real", "SGD momentum"},
    {"train.sn_iters", "1", "int", "spectral-norm power iterations per update (0 disables)"},
    {"train.max_skip", "0.5", "real", "largest fraction of diverged samples per epoch"},
    {"train.seed", "0", "u64", "shuffling seed"},
    // gradient check
    {"gradcheck.h", "1e-5", "real", "central-difference step"},
    {"gradcheck.probes", "0", "int", "coordinates to probe (0 = all)"},
    {"gradcheck.threshold", "1e-3", "real", "largest accepted relative error"},
    // spectrum
    {"spectrum.power_iters", "50", "int", "power iterations for the Jacobian norm"},
    {"spectrum.pairs", "20", "int", "sampled pairs for Lipschitz lower bounds"},
    // bench
    {"bench.scenes", "moving_square", "list", "scene kinds, ','-separated"},
    {"bench.scene_count", "1", "int", "seeds per scene kind, starting at scene.seed"},
    {"bench.methods", "pnp_gap,de_gap", "list", "methods, ','-separated: pnp_gap[:l1/l2], admm[:rho[:l1/l2]], de_gap[:ckpt], de_rnn:ckpt"},
    {"bench.K", "100", "int", "iterations per run"},
    {"bench.workers", "1", "int", "worker threads"},
    {"bench.out", "bench_out", "str", "output directory"},
    {"timing", "true", "bool", "record wall-clock columns (off for bitwise-reproducible output)"},
};

const ConfigKey &find_key(const std::string &key) {
  for (const auto &k : kKeys)
    if (k.name == key) return k;
  throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
}

void check_value(const ConfigKey &k, const std::string &v) {
  if (k.type == "real") (void)to_real(k.name, v);
  else if (k.type == "int") (void)to_int(k.name, v);
  else if (k.type == "u64") (void)to_u64(k.name, v);
  else if (k.type == "bool") (void)to_bool(k.name, v);
  else if (k.type == "reals") {
    for (const auto &p : split(v, '/')) (void)to_real(k.name, p);
  } else if (k.type.find('|') != std::string::npos) {
    const auto choices = split(k.type, '|');
    if (std::find(choices.begin(), choices.end(), v) == choices.end())
      throw bad_value(k.name, v, "one of " + k.type);
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto &k : kKeys) values_[k.name] = k.default_value;
}

const std::vector<ConfigKey> &RunConfig::keys() { return kKeys; }

bool RunConfig::known(const std::string &key) {
  return std::any_of(kKeys.begin(), kKeys.end(), [&](const ConfigKey &k) { return k.name == key; });
}

void RunConfig::set(const std::string &key, const std::string &value) {
  const ConfigKey &k = find_key(key);
  check_value(k, value);
  values_[key] = value;
}

const std::string &RunConfig::get(const std::string &key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string &key) const { return to_real(key, get(key)); }
long long RunConfig::integer(const std::string &key) const { return to_int(key, get(key)); }
std::uint64_t RunConfig::u64(const std::string &key) const { return to_u64(key, get(key)); }
bool RunConfig::flag(const std::string &key) const { return to_bool(key, get(key)); }

std::vector<double> RunConfig::reals(const std::string &key) const {
  std::vector<double> out;
  for (const auto &p : split(get(key), '/')) out.push_back(to_real(key, p));
  return out;
}

std::vector<std::string> RunConfig::list(const std::string &key) const { return split(get(key), ','); }

void RunConfig::load_text(const std::string &text, const std::string &origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!known(key))
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    set(key, trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto &k : kKeys) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

void RunConfig::validate() const {
  for (const auto &k : kKeys) check_value(k, values_.at(k.name));
}

}  // namespace deqsci

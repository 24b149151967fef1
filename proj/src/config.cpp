#include "roughmal/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "roughmal/errors.hpp"
#include "roughmal/vector_field.hpp"

namespace roughmal {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
    throw ConfigError("config key " + key + ": '" + v + "' is not a finite number");
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("config key " + key + ": '" + v + "' is not an integer");
  return x;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + f(v[k]);
  return s;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "experiment") {
    if (v != "jacobian_moments" && v != "nalpha_tail" && v != "wong_zakai" && v != "chaos_check")
      throw ConfigError("unknown experiment '" + v + "'");
    cfg.experiment = v;
  } else if (key == "model") {
    if (v == "brownian") cfg.model.kind = CovarianceKind::Brownian;
    else if (v == "fbm") cfg.model.kind = CovarianceKind::FractionalBrownian;
    else throw ConfigError("model must be brownian or fbm, got '" + v + "'");
  } else if (key == "hurst") {
    cfg.model.hurst = parse_double(key, v);
  } else if (key == "driver") {
    if (v != "gaussian" && v != "smooth") throw ConfigError("driver must be gaussian or smooth");
    cfg.driver = v;
  } else if (key == "p") {
    cfg.p = parse_double(key, v);
  } else if (key == "q") {
    cfg.q = parse_double(key, v);
  } else if (key == "preset") {
    cfg.preset = v;
  } else if (key == "y0") {
    cfg.y0.clear();
    for (const auto& s : split_list(v)) cfg.y0.push_back(parse_double(key, s));
  } else if (key == "m_list") {
    cfg.m_list.clear();
    for (const auto& s : split_list(v)) cfg.m_list.push_back(static_cast<int>(parse_int(key, s)));
  } else if (key == "samples") {
    cfg.samples = static_cast<int>(parse_int(key, v));
  } else if (key == "r_list") {
    cfg.r_list.clear();
    for (const auto& s : split_list(v)) cfg.r_list.push_back(static_cast<int>(parse_int(key, s)));
  } else if (key == "alpha_list") {
    cfg.alpha_list.clear();
    for (const auto& s : split_list(v)) cfg.alpha_list.push_back(parse_double(key, s));
  } else if (key == "seed") {
    const long long s = parse_int(key, v);
    if (s < 0) throw ConfigError("seed must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "output_dir") {
    cfg.output_dir = v;
  } else if (key == "b_samples") {
    cfg.b_samples = static_cast<int>(parse_int(key, v));
  } else if (key == "tolerance") {
    cfg.tolerance = parse_double(key, v);
  } else if (key == "moment_w_samples") {
    cfg.moment_w_samples = static_cast<int>(parse_int(key, v));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void finalize_config(ExperimentConfig& cfg) {
  CovarianceModel model;
  try {
    model = cfg.model.kind == CovarianceKind::Brownian ? CovarianceModel::brownian() : CovarianceModel::fbm(cfg.model.hurst);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.model.kind == CovarianceKind::Brownian && cfg.model.hurst != 0.5)
    throw ConfigError("brownian model has hurst = 0.5");
  cfg.model = model;
  if (cfg.p == 0.0) cfg.p = default_p(model);
  if (cfg.q == 0.0) cfg.q = default_q(model.hurst);
  const double rho = model.rho();
  if (!(cfg.p > 2.0 * rho && cfg.p < 4.0))
    throw ConfigError("p = " + fmt(cfg.p) + " must lie in (2ρ, 4) = (" + fmt(2.0 * rho) + ", 4)");
  if (!(cfg.q >= 1.0 && cfg.q < 2.0)) throw ConfigError("q must lie in [1, 2)");
  if (!(1.0 / cfg.p + 1.0 / cfg.q > 1.0)) throw ConfigError("need 1/p + 1/q > 1");
  if (cfg.samples < 100) throw ConfigError("samples must be at least 100");
  if (cfg.m_list.empty()) throw ConfigError("m_list is empty");
  for (std::size_t k = 0; k < cfg.m_list.size(); ++k) {
    if (cfg.m_list[k] < 1 || cfg.m_list[k] >= kMaxSampleLevel) throw ConfigError("grid levels must lie in [1, 13]");
    if (k > 0 && cfg.m_list[k] <= cfg.m_list[k - 1]) throw ConfigError("m_list must be increasing");
  }
  for (int r : cfg.r_list)
    if (r < 1) throw ConfigError("moment orders must be positive");
  for (double a : cfg.alpha_list)
    if (!(a > 0.0)) throw ConfigError("alpha values must be positive");
  if (cfg.b_samples < 100) throw ConfigError("b_samples must be at least 100");
  if (!(cfg.tolerance > 0.0 && cfg.tolerance < 1e-3)) throw ConfigError("tolerance must lie in (0, 1e-3)");
  if (cfg.moment_w_samples < 0) throw ConfigError("moment_w_samples must be non-negative");
  VectorFieldSystem vf = [&] {
    try {
      return make_preset(cfg.preset);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }();
  if (cfg.y0.size() == 1 && vf.state_dim() > 1) cfg.y0.assign(vf.state_dim(), cfg.y0[0]);
  if (static_cast<int>(cfg.y0.size()) != vf.state_dim())
    throw ConfigError("y0 has " + std::to_string(cfg.y0.size()) + " entries, preset " + cfg.preset + " needs " +
                      std::to_string(vf.state_dim()));
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "experiment = " << cfg.experiment << "\n"
     << "model = " << (cfg.model.kind == CovarianceKind::Brownian ? "brownian" : "fbm") << "\n"
     << "hurst = " << fmt(cfg.model.hurst) << "\n"
     << "driver = " << cfg.driver << "\n"
     << "p = " << fmt(cfg.p) << "\n"
     << "q = " << fmt(cfg.q) << "\n"
     << "preset = " << cfg.preset << "\n"
     << "y0 = " << join(cfg.y0, fmt) << "\n"
     << "m_list = " << join(cfg.m_list, [](int m) { return std::to_string(m); }) << "\n"
     << "samples = " << cfg.samples << "\n"
     << "r_list = " << join(cfg.r_list, [](int r) { return std::to_string(r); }) << "\n"
     << "alpha_list = " << join(cfg.alpha_list, fmt) << "\n"
     << "seed = " << cfg.seed << "\n"
     << "b_samples = " << cfg.b_samples << "\n"
     << "moment_w_samples = " << cfg.moment_w_samples << "\n"
     << "tolerance = " << fmt(cfg.tolerance) << "\n";
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(canonical_text(cfg)); }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const char* library_version() { return ROUGHMAL_VERSION; }

}  // namespace roughmal

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "roughmal/config.hpp"
#include "roughmal/errors.hpp"
#include "roughmal/experiments.hpp"
#include "roughmal/flow.hpp"
#include "roughmal/malliavin.hpp"
#include "roughmal/rng.hpp"
#include "roughmal/roughpath.hpp"

using namespace roughmal;

namespace {

struct Common {
  std::string out = "out";
  std::uint64_t seed = 42;
  double hurst = 0.5;
  int m = 8;
  double p = 0.0;
};

CovarianceModel model_of(double hurst) {
  return hurst == 0.5 ? CovarianceModel::brownian() : CovarianceModel::fbm(hurst);
}

double lift_p(const Common& c) { return c.p > 0.0 ? c.p : default_p(model_of(c.hurst)); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Every output starts with a line naming the library version and a hash of the arguments.
std::string header(const std::string& what, const std::string& args) {
  return "# roughmal " + std::string(library_version()) + " " + what + " args " + fnv1a_hex(args) + "\n";
}

std::string args_text(const Common& c, const std::string& extra) {
  return "seed=" + std::to_string(c.seed) + " hurst=" + fmt(c.hurst) + " m=" + std::to_string(c.m) +
         " p=" + fmt(c.p) + " " + extra;
}

std::string write_file(const std::string& dir, const std::string& name, const std::string& body) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write " + path);
  f << body;
  return path;
}

void add_common(CLI::App* sub, Common& c, bool with_p) {
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "sample seed");
  sub->add_option("--hurst", c.hurst, "Hurst index; 0.5 is Brownian motion");
  sub->add_option("--m", c.m, "grid level (2^m cells)")->check(CLI::Range(1, kMaxSampleLevel - 1));
  if (with_p) sub->add_option("--p", c.p, "lift exponent in (2 rho, 4); default from the model");
}

SampledPath driver_path(const Common& c, int dim) {
  return piecewise_linear_path(sample_gaussian(model_of(c.hurst), c.m, dim, c.seed, false), c.m);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roughmal: Gaussian rough paths, RDE flows and Malliavin derivatives"};
  app.require_subcommand(1);
  Common c;

  int dim = 1;
  bool copy = false;
  auto* sample = app.add_subcommand("sample", "sample a Gaussian path on the dyadic grid");
  add_common(sample, c, false);
  sample->add_option("--dim", dim, "path dimension")->check(CLI::PositiveNumber);
  sample->add_flag("--copy", copy, "also emit the independent copy b");

  auto* lift = app.add_subcommand("lift", "lift a sampled path and write the rough path as JSON");
  add_common(lift, c, true);
  lift->add_option("--dim", dim, "path dimension")->check(CLI::PositiveNumber);

  std::string preset = "linear-scalar";
  std::vector<double> y0;
  double tolerance = 1e-11;
  auto* solve = app.add_subcommand("solve", "solve y, J, K along a sampled driver");
  add_common(solve, c, true);
  solve->add_option("--preset", preset, "vector field preset");
  solve->add_option("--y0", y0, "initial state (one value is broadcast)");
  solve->add_option("--tolerance", tolerance, "per-cell solver defect");

  int order = 1;
  auto* deriv = app.add_subcommand("derivative", "directional derivatives D_h^n y for h(t) = (t, t^2, ...)");
  add_common(deriv, c, true);
  deriv->add_option("--preset", preset, "vector field preset");
  deriv->add_option("--y0", y0, "initial state (one value is broadcast)");
  deriv->add_option("--order", order, "highest derivative order")->check(CLI::Range(1, kMaxDerivativeOrder));

  double alpha = 0.1;
  int samples = 1000;
  auto* nalpha = app.add_subcommand("nalpha", "greedy N_alpha and omega(0,1) over Monte Carlo samples");
  add_common(nalpha, c, true);
  nalpha->add_option("--alpha", alpha, "threshold")->required();
  nalpha->add_option("--samples", samples, "number of samples")->check(CLI::PositiveNumber);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_override;
  long long seed_override = -1;
  auto* exper = app.add_subcommand("experiment", "run a configured Monte Carlo experiment");
  exper->add_option("--config", config_path, "flat key = value config file")->required();
  exper->add_option("--seed", seed_override, "override the master seed");
  exper->add_option("--set", overrides, "override a key, as key=value");
  exper->add_option("--out", out_override, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sample) {
      const GaussianSample g = sample_gaussian(model_of(c.hurst), c.m, dim, c.seed, copy);
      SampledPath w = piecewise_linear_path(g, c.m);
      if (copy) w = concat_components(w, piecewise_linear_path(g, c.m, true));
      const std::string args = args_text(c, "dim=" + std::to_string(dim) + " copy=" + std::to_string(copy));
      const auto path = write_file(c.out, "sample.csv", header("sample", args) + path_to_csv(w, "w"));
      std::cout << "sample: " << w.nodes() << " nodes, dimension " << w.dim << " -> " << path << "\n";
    } else if (*lift) {
      const RoughPathGrid x = lift_piecewise_linear(driver_path(c, dim), lift_p(c));
      const std::string args = args_text(c, "dim=" + std::to_string(dim));
      // JSON has no comments, so the header goes into a sidecar line file
      const auto path = write_file(c.out, "lift.json", rough_path_to_json(x));
      write_file(c.out, "lift.header", header("lift", args));
      std::cout << "lift: " << x.cells() << " cells, depth " << x.depth() << ", omega(0,1) = "
                << control_omega(x, 0, x.cells()) << " -> " << path << "\n";
    } else if (*solve || *deriv) {
      const VectorFieldSystem vf = make_preset(preset);
      if (y0.empty()) y0 = {1.0};
      if (y0.size() == 1) y0.assign(vf.state_dim(), y0[0]);
      const SampledPath w = driver_path(c, vf.driver_dim());
      const RoughPathGrid x = lift_piecewise_linear(w, lift_p(c));
      SolverOptions opts;
      opts.tolerance = tolerance;
      const FlowSolution sol = solve_flow(x, vf, y0, opts);
      std::ostringstream yargs;
      yargs << "preset=" << preset << " tol=" << fmt(tolerance) << " y0=";
      for (double v : y0) yargs << fmt(v) << ";";
      if (*solve) {
        const std::string args = args_text(c, yargs.str());
        const auto path = write_file(c.out, "solve.csv", header("solve", args) + flow_to_csv(sol));
        write_file(c.out, "driver.csv", header("driver", args) + path_to_csv(w, "w"));
        const double y1 = sol.y(sol.nodes() - 1)[0];
        std::cout << "solve: y_1 = " << fmt(y1);
        if (preset == "linear-scalar") {
          const double exact = y0[0] * std::exp(w(w.cells(), 0));
          std::cout << ", closed form " << fmt(exact) << ", relative error " << std::abs(y1 - exact) / std::abs(exact);
        }
        std::cout << " -> " << path << "\n";
      } else {
        SampledPath h(c.m, vf.driver_dim());
        for (std::size_t n = 0; n < h.nodes(); ++n)
          for (int a = 0; a < h.dim; ++a) h(n, a) = std::pow(h.time(n), a + 1);
        DerivativeOptions dopts;
        dopts.solver = opts;
        const DerivativeStack ds = directional_derivative_with_plan(x, vf, y0, h, order, sol.plan, dopts);
        std::ostringstream os;
        os << "t";
        for (int n = 1; n <= order; ++n)
          for (int i = 1; i <= vf.state_dim(); ++i) os << ",D" << n << "_y" << i;
        os << "\n";
        for (std::size_t node = 0; node < w.nodes(); ++node) {
          os << fmt(w.time(node));
          for (int n = 1; n <= order; ++n)
            for (double v : ds.at(n, node)) os << "," << fmt(v);
          os << "\n";
        }
        const std::string args = args_text(c, yargs.str() + " order=" + std::to_string(order));
        const auto path = write_file(c.out, "derivative.csv", header("derivative", args) + os.str());
        std::cout << "derivative: D^" << order << " y_1 = " << fmt(ds.at(order, w.cells())[0]) << " -> " << path << "\n";
      }
    } else if (*nalpha) {
      if (!(alpha > 0.0)) throw ConfigError("--alpha must be positive");
      const CovarianceModel model = model_of(c.hurst);
      const double p = lift_p(c);
      std::vector<int> n(samples);
      std::vector<double> omega(samples);
      parallel_for(static_cast<std::size_t>(samples), [&](std::size_t i) {
        const auto g = sample_gaussian(model, c.m, 1, derive_seed(c.seed, i), false);
        const RoughPathGrid x = lift_piecewise_linear(piecewise_linear_path(g, c.m), p);
        omega[i] = control_omega(x, 0, x.cells());
        n[i] = greedy_n_alpha(x, alpha).n_alpha;
      });
      std::string body = "seed,n_alpha,omega01\n";
      double mean = 0.0;
      for (int i = 0; i < samples; ++i) {
        body += std::to_string(derive_seed(c.seed, static_cast<std::uint64_t>(i))) + "," + std::to_string(n[i]) + "," +
                fmt(omega[i]) + "\n";
        mean += n[i] / static_cast<double>(samples);
      }
      const std::string args = args_text(c, "alpha=" + fmt(alpha) + " samples=" + std::to_string(samples));
      const auto path = write_file(c.out, "nalpha.csv", header("nalpha", args) + body);
      std::cout << "nalpha: " << samples << " samples, mean N_alpha " << mean << " -> " << path << "\n";
    } else if (*exper) {
      ExperimentConfig cfg = load_config(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      if (!out_override.empty()) cfg.output_dir = out_override;
      finalize_config(cfg);
      const ResultRecord r = run_experiment(cfg);
      const auto paths = write_record(r, cfg.output_dir);
      std::size_t passed = 0;
      for (const auto& ch : r.checks) passed += ch.passed;
      std::cout << "experiment " << r.experiment << ": " << passed << "/" << r.checks.size() << " checks passed, config "
                << r.config_hash << ", " << r.runtime_seconds << " s -> " << paths[0] << ", " << paths[1] << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

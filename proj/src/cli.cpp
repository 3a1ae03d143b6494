#include "sbmot/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbmot/bassim.hpp"
#include "sbmot/dualsolve.hpp"
#include "sbmot/errors.hpp"
#include "sbmot/examples.hpp"
#include "sbmot/gaussmcov.hpp"
#include "sbmot/motlp.hpp"
#include "sbmot/paving.hpp"
#include "sbmot/serialize.hpp"

namespace sbm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kInvalidInput = 2;
constexpr int kInfeasible = 3;
constexpr int kNonConvergence = 4;
constexpr int kVerificationFailed = 5;

struct GlobalOpts {
  std::uint64_t seed = 0;
  double tol = 1e-8;
  std::uint64_t samples = 8192;
  std::string out = ".";
  std::string format = "json";
};

void ensure_out(const GlobalOpts& g) {
  if (!g.out.empty()) fs::create_directories(g.out);
}

std::string opath(const GlobalOpts& g, const std::string& name) {
  return (fs::path(g.out) / name).string();
}

int cmd_mcov(const GlobalOpts& g, const std::string& input) {
  DiscreteMeasure m = load_measure(input);
  McConfig mc;
  mc.seed = g.seed;
  mc.samples = static_cast<int>(g.samples);
  McovResult r = mcov(m, mc);
  std::cout << "mcov " << fmt17(r.value) << " +- " << fmt17(r.error_estimate)
            << "\n";
  return kOk;
}

int cmd_check_order(const GlobalOpts& g, const std::string& mu_path,
                    const std::string& nu_path) {
  DiscreteMeasure mu = load_measure(mu_path);
  DiscreteMeasure nu = load_measure(nu_path);
  auto r = check_convex_order(mu, nu);
  ensure_out(g);
  std::ostringstream os;
  os << "{\"ordered\":" << (r.ordered ? "true" : "false");
  if (r.ordered) {
    os << ",\"coupling\":" << coupling_to_json(*r.transport);
  } else if (r.witness) {
    os << ",\"witness\":{\"violation\":" << fmt17(r.witness->violation);
    if (r.witness->strike) os << ",\"strike\":" << fmt17(*r.witness->strike);
    os << "}";
  }
  os << "}\n";
  write_file(opath(g, "check_order.json"), os.str());
  std::cout << (r.ordered ? "ordered" : "not ordered") << "\n";
  return r.ordered ? kOk : kInfeasible;
}

int cmd_solve_dual(const GlobalOpts& g, const std::string& mu_path,
                   const std::string& nu_path, int max_iter) {
  DiscreteMeasure mu = load_measure(mu_path);
  DiscreteMeasure nu = load_measure(nu_path);
  DualConfig cfg;
  cfg.grad_tol = g.tol;
  cfg.max_iter = max_iter;
  cfg.mc.seed = g.seed;
  cfg.mc.samples = static_cast<int>(g.samples);
  SolveResult r = solve_dual(mu, nu, cfg);
  ensure_out(g);
  write_file(opath(g, "trace.jsonl"), trace_to_jsonl(r.trace));
  std::ostringstream psi;
  psi << "{\"values\":[";
  for (int j = 0; j < r.state.psi.size(); ++j)
    psi << (j ? "," : "") << fmt17(r.state.psi.values()(j));
  psi << "]}\n";
  write_file(opath(g, "psi.json"), psi.str());
  std::ostringstream os;
  os << "{\"dual\":" << fmt17(r.state.dual_value)
     << ",\"primal\":" << fmt17(r.state.primal_value)
     << ",\"gap\":" << fmt17(r.state.gap)
     << ",\"grad_norm\":" << fmt17(r.state.gradient.cwiseAbs().maxCoeff())
     << ",\"iterations\":" << r.trace.iterations
     << ",\"converged\":" << (r.trace.converged ? "true" : "false") << "}\n";
  write_file(opath(g, "solve_summary.json"), os.str());
  std::cout << "dual " << fmt17(r.state.dual_value) << " gap "
            << fmt17(r.state.gap) << "\n";
  return r.trace.converged ? kOk : kNonConvergence;
}

int cmd_pave(const GlobalOpts& g, const std::string& mu_path,
             const std::string& nu_path, const std::string& method) {
  DiscreteMeasure mu = load_measure(mu_path);
  DiscreteMeasure nu = load_measure(nu_path);
  PavingResult p("" == method ? PavingResult{} : PavingResult{});
  if (method == "lp") {
    p = pave_lp(mu, nu);
  } else if (method == "potential") {
    p = pave_potential_1d(mu, nu);
  } else if (method == "dual-divergence") {
    DualConfig cfg;
    cfg.grad_tol = g.tol;
    cfg.mc.seed = g.seed;
    SolveResult r = solve_dual(mu, nu, cfg);
    PavingResult lp = pave_lp(mu, nu);
    p = pave_dual_divergence(r.trace, mu, nu, {}, &lp);
  } else {
    throw InvalidInputError("pave: unknown method '" + method + "'");
  }
  ensure_out(g);
  write_file(opath(g, "paving.json"), paving_to_json(p) + "\n");
  std::cout << p.components.size() << " component(s)\n";
  return kOk;
}

int cmd_decompose(const GlobalOpts& g, const std::string& mu_path,
                  const std::string& nu_path) {
  DiscreteMeasure mu = load_measure(mu_path);
  DiscreteMeasure nu = load_measure(nu_path);
  DecomposeConfig cfg;
  cfg.component_gap_tol = std::max(g.tol, 1e-10);
  cfg.global.mc.seed = g.seed;
  cfg.local.mc.seed = g.seed + 1;
  DecomposeResult r = decompose(mu, nu, cfg);
  ensure_out(g);
  write_file(opath(g, "paving.json"), paving_to_json(r.paving) + "\n");
  write_file(opath(g, "trace.jsonl"), trace_to_jsonl(r.global_trace));
  std::ostringstream os;
  os << "components: " << r.paving.components.size() << "\n";
  for (size_t c = 0; c < r.paving.components.size(); ++c) {
    const auto& pc = r.paving.components[c];
    os << "  [" << c << "] kappa " << fmt17(pc.kappa_weight) << " atoms "
       << pc.mu_indices.size() << "->" << pc.nu_indices.size();
    if (pc.bass)
      os << " P " << fmt17(pc.bass->local_primal) << " gap "
         << fmt17(pc.bass->local_gap)
         << (pc.bass->irreducible ? "" : " (NOT irreducible)");
    os << "\n";
  }
  std::cout << os.str();
  write_file(opath(g, "decompose_summary.txt"), os.str());
  return kOk;
}

int cmd_simulate(const GlobalOpts& g, const std::string& paving_path,
                 int paths, int steps) {
  const json j = json::parse(read_file(paving_path));
  if (!j.contains("components"))
    throw InvalidInputError("simulate: not a paving file");
  ensure_out(g);
  bool all_pass = true;
  std::ostringstream os;
  int idx = 0;
  for (const auto& jc : j["components"]) {
    if (!jc.contains("bass") || !jc.contains("nu_local") ||
        !jc.contains("mu_local"))
      throw InvalidInputError("simulate: paving lacks fitted Bass models");
    DiscreteMeasure nu_local = measure_from_json(jc["nu_local"].dump());
    DiscreteMeasure mu_local = measure_from_json(jc["mu_local"].dump());
    DiscreteMeasure alpha = measure_from_json(jc["bass"]["alpha"].dump());
    Vec psi(nu_local.size());
    const auto& pv = jc["bass"]["psi_values"];
    if (static_cast<int>(pv.size()) != nu_local.size())
      throw InvalidInputError("simulate: psi_values arity mismatch");
    for (int k = 0; k < nu_local.size(); ++k) psi(k) = pv[k].get<double>();
    BassModel model{PwaPotential(nu_local.atoms(), psi), alpha,
                    nu_local.dim()};
    SimulateConfig sc;
    sc.n_paths = paths;
    sc.steps = steps;
    sc.seed = g.seed + 101ull * idx;
    PathBundle pb = simulate(model, sc);
    const auto mart = verify_martingale(pb);
    const auto term = verify_terminal_marginal(pb, nu_local);
    const auto init = verify_initial_marginal(pb, mu_local);
    const double expected =
        jc["bass"].contains("local_primal")
            ? jc["bass"]["local_primal"].get<double>()
            : 0.0;
    ValueReport val;
    bool val_ok = true;
    if (steps >= 16) {
      val = verify_value(pb, expected);
      val_ok = val.pass;
    }
    const bool pass = mart.pass && term.pass && init.pass && val_ok;
    all_pass = all_pass && pass;
    os << "component " << idx << ": martingale "
       << (mart.pass ? "pass" : "FAIL") << " (max|z| " << fmt17(mart.max_abs_z)
       << "), terminal law " << (term.pass ? "pass" : "FAIL") << " (z "
       << fmt17(term.z) << "), initial law " << (init.pass ? "pass" : "FAIL")
       << ", trace value " << (val_ok ? "pass" : "FAIL") << " (mean "
       << fmt17(val.mean) << " vs " << fmt17(expected) << ")\n";
    if (g.format == "csv")
      write_file(opath(g, "paths_" + std::to_string(idx) + ".csv"),
                 path_bundle_to_csv(pb));
    ++idx;
  }
  std::cout << os.str();
  write_file(opath(g, "simulate_report.txt"), os.str());
  return all_pass ? kOk : kVerificationFailed;
}

int cmd_example(const GlobalOpts& g, const std::string& name) {
  ensure_out(g);
  if (name == "ex61") {
    examples::Ex61Config cfg;
    cfg.seed = g.seed;
    examples::Ex61Result r = examples::run_ex61(cfg);
    save_measure(r.mu, opath(g, "ex61_mu.json"));
    save_measure(r.nu, opath(g, "ex61_nu.json"));
    write_file(opath(g, "ex61_paving.json"),
               paving_to_json(r.dec.paving) + "\n");
    write_file(opath(g, "ex61_trace.jsonl"), trace_to_jsonl(r.dec.global_trace));
    // psi-shape comparison series for the positive component
    std::ostringstream csv;
    csv << "y,fitted_secdiff,analytic_secdiff\n";
    for (const auto& c : r.dec.paving.components) {
      if (!c.bass || c.nu_local->atoms()(0, 0) < 0.0) continue;
      const Vec y = c.nu_local->atoms().col(0);
      Vec ana(y.size());
      for (int k = 0; k < y.size(); ++k)
        ana(k) = examples::ex61_analytic_psi(y(k));
      const Vec df = examples::second_differences(y, c.bass->psi_values);
      const Vec da = examples::second_differences(y, ana);
      for (int k = 0; k < df.size(); ++k)
        csv << fmt17(y(k + 1)) << "," << fmt17(df(k)) << "," << fmt17(da(k))
            << "\n";
    }
    write_file(opath(g, "ex61_psi_compare.csv"), csv.str());
    std::ostringstream os;
    os << "components " << r.dec.paving.components.size() << ", kappa";
    for (const auto& c : r.dec.paving.components)
      os << " " << fmt17(c.kappa_weight);
    os << ", psi shape error " << fmt17(r.max_secdiff_error) << ", P";
    for (double p : r.component_primal) os << " " << fmt17(p);
    os << "\n";
    std::cout << os.str();
    write_file(opath(g, "ex61_summary.txt"), os.str());
    const bool pass = r.dec.paving.components.size() == 2 &&
                      r.max_secdiff_error <= 5e-2;
    return pass ? kOk : kVerificationFailed;
  }
  if (name == "circles") {
    examples::CirclesConfig cfg;
    cfg.seed = g.seed;
    cfg.mc_samples = static_cast<int>(std::max<std::uint64_t>(g.samples, 1000));
    examples::CirclesResult r = examples::run_circles(cfg);
    std::ostringstream csv;
    csv << "rho,k,R,k_mc,R_mc\n";
    for (size_t i = 0; i < r.rho.size(); ++i)
      csv << fmt17(r.rho[i]) << "," << fmt17(r.k_values[i]) << ","
          << fmt17(r.r_values[i]) << "," << fmt17(r.k_mc[i]) << ","
          << fmt17(r.r_mc[i]) << "\n";
    write_file(opath(g, "circles_kR.csv"), csv.str());
    std::ostringstream os;
    os << "R(rho):";
    for (size_t i = 0; i < r.rho.size(); ++i)
      os << " R(" << r.rho[i] << ")=" << fmt17(r.r_values[i]);
    os << "\nfeasible at R=1.5: " << (r.feasible_at_threshold ? "yes" : "NO")
       << ", feasible at R=1.4: " << (r.feasible_below ? "YES" : "no")
       << "\ncomponents at R=3/2: " << r.components_at_threshold
       << " (radial cells " << (r.threshold_cells_radial ? "ok" : "WRONG")
       << "), above: " << r.components_above << "\n"
       << r.summary << "\n";
    std::cout << os.str();
    write_file(opath(g, "circles_summary.txt"), os.str());
    bool decreasing = true;
    for (size_t i = 1; i < r.r_values.size(); ++i)
      if (!(r.r_values[i] < r.r_values[i - 1])) decreasing = false;
    const bool pass = r.feasible_at_threshold && !r.feasible_below &&
                      r.components_at_threshold == cfg.n_angles &&
                      r.threshold_cells_radial && r.components_above == 1 &&
                      r.sim_pass && decreasing;
    return pass ? kOk : kVerificationFailed;
  }
  throw InvalidInputError("example: unknown name '" + name + "'");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"stretched Brownian motion decomposition toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master random seed");
  app.add_option("--tol", g.tol, "solver tolerance");
  app.add_option("--samples", g.samples, "Monte Carlo sample count");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--format", g.format, "json|csv extras");

  std::string input, mu_path, nu_path, method = "lp", name, paving_path;
  int max_iter = 20000, paths = 20000, steps = 64;

  auto* mcov_cmd = app.add_subcommand("mcov", "maximal covariance of a measure");
  mcov_cmd->add_option("--input", input)->required();

  auto* order_cmd = app.add_subcommand("check-order", "convex order test");
  order_cmd->add_option("--mu", mu_path)->required();
  order_cmd->add_option("--nu", nu_path)->required();

  auto* solve_cmd = app.add_subcommand("solve-dual", "minimize the dual");
  solve_cmd->add_option("--mu", mu_path)->required();
  solve_cmd->add_option("--nu", nu_path)->required();
  solve_cmd->add_option("--max-iter", max_iter);

  auto* pave_cmd = app.add_subcommand("pave", "compute the Bass paving");
  pave_cmd->add_option("--mu", mu_path)->required();
  pave_cmd->add_option("--nu", nu_path)->required();
  pave_cmd->add_option("--method", method, "lp|potential|dual-divergence");

  auto* dec_cmd = app.add_subcommand("decompose", "full decomposition");
  dec_cmd->add_option("--mu", mu_path)->required();
  dec_cmd->add_option("--nu", nu_path)->required();

  auto* sim_cmd = app.add_subcommand("simulate", "simulate fitted models");
  sim_cmd->add_option("--paving", paving_path)->required();
  sim_cmd->add_option("--paths", paths);
  sim_cmd->add_option("--steps", steps);

  auto* ex_cmd = app.add_subcommand("example", "reproduce a worked example");
  ex_cmd->add_option("--name", name, "ex61|circles")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream dummy;
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return kOk;
    }
    std::cerr << e.what() << "\n";
    return kInvalidInput;
  }

  try {
    if (mcov_cmd->parsed()) return cmd_mcov(g, input);
    if (order_cmd->parsed()) return cmd_check_order(g, mu_path, nu_path);
    if (solve_cmd->parsed())
      return cmd_solve_dual(g, mu_path, nu_path, max_iter);
    if (pave_cmd->parsed()) return cmd_pave(g, mu_path, nu_path, method);
    if (dec_cmd->parsed()) return cmd_decompose(g, mu_path, nu_path);
    if (sim_cmd->parsed()) return cmd_simulate(g, paving_path, paths, steps);
    if (ex_cmd->parsed()) return cmd_example(g, name);
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const ConvexOrderError& e) {
    std::cerr << "convex order: " << e.what() << "\n";
    return kInfeasible;
  } catch (const CrossLeakError& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const NonConvergenceError& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidInput;
  }
  return kInvalidInput;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace sbm::cli

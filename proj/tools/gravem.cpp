// gravem: command-line driver for simulation, design, emulation, calibration and flux.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <gsl/gsl_version.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/gravem.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gravem;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

struct CommonArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;
};

// Inputs named on the command line (training set, emulator, chain, panel) by role.
using RoleInputs = std::map<std::string, std::string>;

void add_common(CLI::App* sub, CommonArgs& a, bool needs_out = true) {
  sub->add_option("--config,-c", a.config, "run configuration (key = value lines)");
  sub->add_option("--manifest", a.manifest, "replay settings and inputs from a previous run's manifest");
  auto* out = sub->add_option("--out,-o", a.out, "output path");
  if (needs_out) out->required();
  sub->add_option("--seed", a.seed, "root seed (overrides the config)");
  sub->add_option("--workers", a.workers, "worker thread bound (0 = all cores)");
  sub->add_option("--set", a.sets, "override a config key: key=value")->allow_extra_args(false);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("manifest " + path + ": " + e.what());
  }
}

RunConfig resolve_config(const CommonArgs& a, RoleInputs& inputs) {
  RunConfig cfg;
  if (!a.config.empty() && !a.manifest.empty()) throw UsageError("give either --config or --manifest, not both");
  if (!a.config.empty()) cfg = load_config(a.config);
  if (!a.manifest.empty()) {
    const json m = read_json(a.manifest);
    if (!m.contains("config")) throw DataError("manifest " + a.manifest + " has no config block");
    for (const auto& [k, v] : m["config"].items()) apply_setting(cfg, k, v.get<std::string>());
    if (m.contains("inputs"))
      for (const auto& [role, rec] : m["inputs"].items())
        if (!inputs.count(role) || inputs[role].empty()) inputs[role] = rec.at("path").get<std::string>();
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, found '" + s + "'");
    apply_setting(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), fs::current_path());
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  return cfg;
}

std::size_t worker_count(const RunConfig& c) { return c.workers == 0 ? default_workers() : c.workers; }

std::string sibling(const std::string& out, const std::string& suffix) {
  std::string base = out;
  if (base.size() > 4 && base.compare(base.size() - 4, 4, ".csv") == 0) base.resize(base.size() - 4);
  return base + suffix;
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
  out.flush();
  if (!out) throw DataError("write failed for " + path);
}

std::ifstream open_input(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + what + " " + path);
  return in;
}

// ---------------------------------------------------------------------------
// Manifest

class Manifest {
public:
  Manifest(std::string command, const RunConfig& cfg) {
    doc_["tool"] = "gravem";
    doc_["version"] = kVersion;
    doc_["command"] = std::move(command);
    doc_["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                       std::to_string(EIGEN_MINOR_VERSION)},
                         {"gsl", GSL_VERSION},
                         {"cli11", CLI11_VERSION},
                         {"compiler", __VERSION__}};
    json c = json::object();
    for (const auto& [k, v] : cfg.entries()) c[k] = v;
    doc_["config"] = c;
    doc_["seeds"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    doc_["results"] = json::object();
  }

  void seed(const std::string& name, std::uint64_t v) { doc_["seeds"][name] = v; }
  void input(const std::string& role, const std::string& path) {
    if (path.empty()) return;
    doc_["inputs"][role] = {{"path", fs::absolute(path).lexically_normal().string()}, {"fnv1a", file_hash(path)}};
  }
  void output(const std::string& path) { doc_["outputs"][path] = file_hash(path); }
  json& results() { return doc_["results"]; }

  void write(const std::string& out) const {
    write_file(out + ".manifest.json", [&](std::ostream& o) { o << doc_.dump(2) << '\n'; });
  }

private:
  json doc_;
};

void record_data_inputs(Manifest& m, const RunConfig& c) {
  m.input("cities", c.data.cities);
  m.input("cases", c.data.cases);
  m.input("vaccination", c.data.vaccination);
  m.input("distances", c.data.distances);
  m.input("mask", c.mask);
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces

Dataset load_data(const RunConfig& c) {
  if (c.data.cities.empty()) throw UsageError("config must name a cities file ('cities')");
  if (c.data.cases.empty()) throw UsageError("config must name a case file ('cases')");
  Dataset ds = load_panel(c.data);
  if (c.underreporting_rate < 1.0) ds.panel = correct_underreporting(ds.panel, c.underreporting_rate);
  return ds;
}

/// Simulation starts from the first observed biweek.
SimulationSetup make_setup(const RunConfig& c, const Dataset& ds) {
  SimulationSetup s;
  s.initial.t = ds.panel.first_biweek();
  const std::size_t K = ds.panel.cities();
  s.initial.infected.resize(K);
  for (std::size_t k = 0; k < K; ++k) s.initial.infected[k] = ds.panel(k, 0);
  s.initial.susceptibles = c.susceptible_init == SusceptibleInit::balanced
                               ? balanced_susceptibles(ds.demographics, s.initial.infected, s.local, s.initial.t)
                               : initial_susceptibles(ds.demographics, c.s0, s.initial.t);
  s.demographics = ds.demographics;
  s.distances = ds.distances;
  s.horizon = c.horizon ? c.horizon : ds.panel.biweeks();
  s.normalize_by_population = c.normalize_by_population;
  s.city_ids = ds.city_ids();
  return s;
}

json params_json(const GravityParams& g) {
  json j = json::object();
  for (std::size_t a = 0; a < kGravityAxes; ++a) j[kAxisNames[a]] = g[a];
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_simulate(const CommonArgs& a) {
  RoleInputs inputs;
  const RunConfig cfg = resolve_config(a, inputs);
  const std::uint64_t seed = cfg.require_seed();
  const Dataset ds = load_data(cfg);
  const SimulationSetup setup = make_setup(cfg, ds);
  SimulationOptions opt;
  opt.seed = seed;
  opt.normalize_by_population = setup.normalize_by_population;
  const Trajectory tr = simulate_trajectory(setup.initial, CouplingParams::from(cfg.truth), setup.local, setup.demographics, setup.distances,
                                            setup.horizon, opt, setup.city_ids);
  write_file(a.out, [&](std::ostream& o) { write_panel_csv(o, tr.panel); });

  Manifest m("simulate", cfg);
  m.seed("simulation", seed);
  record_data_inputs(m, cfg);
  m.output(a.out);
  m.results()["parameters"] = params_json(cfg.truth);
  m.results()["theta"] = cfg.truth.theta();
  m.results()["truncations"] = tr.truncations;
  m.results()["simulator_hash"] = hex64(setup.content_hash());
  m.write(a.out);
  return kOk;
}

int cmd_summarize(const CommonArgs& a, const std::string& panel_path) {
  RoleInputs inputs{{"panel", panel_path}};
  const RunConfig cfg = resolve_config(a, inputs);
  const Dataset ds = load_data(cfg);
  EpidemicPanel panel = ds.panel;
  if (!inputs["panel"].empty()) panel = load_cases(inputs["panel"], ds.city_ids());
  const SummaryVector s = summarize(panel, cfg.statistic);
  write_file(a.out, [&](std::ostream& o) { write_summary_csv(o, s); });

  Manifest m("summarize", cfg);
  record_data_inputs(m, cfg);
  m.input("panel", inputs["panel"]);
  m.output(a.out);
  m.results()["summary_hash"] = hex64(s.content_hash());
  m.write(a.out);
  return kOk;
}

int cmd_design(const CommonArgs& a) {
  RoleInputs inputs;
  const RunConfig cfg = resolve_config(a, inputs);
  const std::uint64_t seed = cfg.require_seed();
  cfg.prior.validate();
  const Dataset ds = load_data(cfg);
  const SimulationSetup setup = make_setup(cfg, ds);
  const SummaryVector observed = summarize(ds.panel, cfg.statistic);
  const DesignGrid grid = make_grid(cfg.prior, cfg.grid, cfg.pinned);
  const TrainingSet ts = build_training_set(grid, observed, setup, cfg.replicates, seed, worker_count(cfg));
  write_file(a.out, [&](std::ostream& o) { write_training_csv(o, ts); });

  Manifest m("design", cfg);
  m.seed("design_root", seed);
  record_data_inputs(m, cfg);
  m.output(a.out);
  const std::size_t best = ts.argmin();
  m.results()["points"] = ts.size();
  m.results()["min_distance"] = ts.distances[best];
  m.results()["argmin"] = params_json(ts.points[best]);
  m.results()["simulator_hash"] = ts.simulator_hash;
  m.results()["observed_hash"] = ts.observed_hash;
  m.write(a.out);
  return kOk;
}

int cmd_fit(const CommonArgs& a, const std::string& training) {
  RoleInputs inputs{{"training", training}};
  const RunConfig cfg = resolve_config(a, inputs);
  const std::uint64_t seed = cfg.require_seed();
  if (inputs["training"].empty()) throw UsageError("fit needs --training");
  auto in = open_input(inputs["training"], "training set");
  const TrainingSet ts = read_training_csv(in);
  FitOptions opt;
  opt.starts = cfg.fit_starts;
  opt.seed = derive_key(seed, 0x666974ULL);
  opt.workers = worker_count(cfg);
  const TrainedEmulator em = fit_emulator(ts, opt);
  write_file(a.out, [&](std::ostream& o) { em.save(o); });

  Manifest m("fit", cfg);
  m.seed("fit_starts", opt.seed);
  m.input("training", inputs["training"]);
  m.output(a.out);
  const auto& h = em.hyper();
  m.results()["sigma2"] = h.sigma2;
  m.results()["nugget"] = h.nugget;
  m.results()["phi"] = h.phi;
  m.results()["neg_log_likelihood"] = em.diagnostics().best_nll;
  m.results()["starts_converged"] = em.diagnostics().converged;
  m.results()["degenerate"] = em.diagnostics().degenerate;
  m.results()["emulator_hash"] = hex64(em.content_hash());
  m.write(a.out);
  return kOk;
}

int cmd_calibrate(const CommonArgs& a, const std::string& emulator) {
  RoleInputs inputs{{"emulator", emulator}};
  const RunConfig cfg = resolve_config(a, inputs);
  const std::uint64_t seed = cfg.require_seed();
  if (inputs["emulator"].empty()) throw UsageError("calibrate needs --emulator");
  auto in = open_input(inputs["emulator"], "emulator");
  const TrainedEmulator em = TrainedEmulator::load(in);

  Priors pr;
  pr.box = em.bounds();
  pr.pinned = em.pinned();
  pr.no_discrepancy = !cfg.discrepancy;
  McmcOptions opt;
  opt.seed = derive_key(seed, 0x6d636d63ULL);
  opt.burn_in = cfg.burn_in;
  opt.thin = cfg.thin;
  const PosteriorChain chain = run_mcmc(em, pr, cfg.chain_length, initial_sample(em, pr), opt);
  write_file(a.out, [&](std::ostream& o) { write_chain_csv(o, chain); });

  Manifest m("calibrate", cfg);
  m.seed("chain", opt.seed);
  m.input("emulator", inputs["emulator"]);
  m.output(a.out);
  json med = json::object();
  for (std::size_t c = 0; c < kChainCoords; ++c) med[kChainNames[c]] = median(chain.coordinate(c));
  m.results()["samples"] = chain.size();
  m.results()["burn_in"] = chain.burn_in;
  m.results()["posterior_median"] = med;

  const auto [rx, ry] = cfg.region;
  if (!pr.is_free(rx) || !pr.is_free(ry)) {
    std::cerr << "note: region coordinates include a fixed axis; no credible region written\n";
  } else if (chain.size() < 5000) {
    std::cerr << "note: chain shorter than 5000 samples; no credible region written\n";
  } else {
    const CredibleRegion2D region = credible_region_2d(chain, rx, ry, cfg.gamma);
    const std::string rpath = sibling(a.out, ".region.csv");
    write_file(rpath, [&](std::ostream& o) { write_region_csv(o, region); });
    m.output(rpath);
    const auto mode = posterior_mode(chain, {rx, ry});
    m.results()["region"] = {{"x", kChainNames[rx]}, {"y", kChainNames[ry]},   {"gamma", cfg.gamma},
                             {"area", region.area()}, {"mode", {mode[0], mode[1]}}};
  }
  m.write(a.out);
  return kOk;
}

int cmd_flux(const CommonArgs& a, const std::string& chain_path) {
  RoleInputs inputs{{"chain", chain_path}};
  const RunConfig cfg = resolve_config(a, inputs);
  if (inputs["chain"].empty()) throw UsageError("flux needs --chain");
  auto in = open_input(inputs["chain"], "chain");
  const PosteriorChain chain = read_chain_csv(in);
  const Dataset ds = load_data(cfg);
  const auto ids = ds.city_ids();

  FluxOptions opt;
  opt.average = cfg.flux_average;
  if (!cfg.flux_label.empty()) {
    if (cfg.mask.empty()) throw UsageError("flux.label needs a mask file ('mask')");
    opt.mask = mask_columns(load_mask(cfg.mask), ds.panel, cfg.flux_label);
    if (std::none_of(opt.mask.begin(), opt.mask.end(), [](bool b) { return b; }))
      throw DataError("no biweeks carry mask label '" + cfg.flux_label + "'");
  }
  std::vector<std::size_t> cities;
  if (cfg.flux_cities.empty()) {
    for (std::size_t k = 0; k < ids.size(); ++k) cities.push_back(k);
  } else {
    for (const auto& id : cfg.flux_cities) {
      auto it = std::find(ids.begin(), ids.end(), id);
      if (it == ids.end()) throw DataError("flux.cities names unknown city '" + id + "'");
      cities.push_back(static_cast<std::size_t>(it - ids.begin()));
    }
  }
  const FluxSummary summary = flux_posterior_summary(chain, ds.demographics, ds.distances, ds.panel, cities, cfg.gamma, opt,
                                                     worker_count(cfg));

  // Network and histograms use the coordinate-wise posterior median.
  GravityParams med;
  for (std::size_t c = 0; c < kGravityAxes; ++c) med[c] = median(chain.coordinate(c));
  const FluxMatrix mm = movement_matrix(med, ds.demographics, ds.distances, ds.panel, opt);

  const std::string p = a.out;
  const std::vector<std::pair<std::string, std::function<void(std::ostream&)>>> files = {
      {p + ".summary.csv", [&](std::ostream& o) { write_flux_summary_csv(o, summary, ids); }},
      {p + ".edges_out.csv", [&](std::ostream& o) { write_edges_csv(o, export_network(mm, cfg.flux_threshold, FluxDirection::out), ids); }},
      {p + ".edges_in.csv", [&](std::ostream& o) { write_edges_csv(o, export_network(mm, cfg.flux_threshold, FluxDirection::in), ids); }},
      {p + ".hist_out.csv", [&](std::ostream& o) { write_histogram_csv(o, degree_histogram(mm, FluxDirection::out, cfg.flux_bins, cfg.flux_log)); }},
      {p + ".hist_in.csv", [&](std::ostream& o) { write_histogram_csv(o, degree_histogram(mm, FluxDirection::in, cfg.flux_bins, cfg.flux_log)); }},
  };
  Manifest m("flux", cfg);
  record_data_inputs(m, cfg);
  m.input("chain", inputs["chain"]);
  for (const auto& [path, fn] : files) {
    write_file(path, fn);
    m.output(path);
  }
  m.results()["samples"] = chain.size();
  m.results()["median_parameters"] = params_json(med);
  m.results()["theta"] = med.theta();
  m.results()["total_flux"] = mm.total();
  m.write(p);
  return kOk;
}

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::string preset = "recovery";
  std::vector<double> truth{0.71, 1.0, 1.0, 1.0};
  std::size_t horizon = 260;
  std::size_t cities = 40;
  std::size_t grid = 15;
};

int cmd_synth(const SynthArgs& s) {
  SyntheticWorldSpec spec = s.preset == "recovery" ? recovery_world_spec() : SyntheticWorldSpec{};
  if (s.preset != "recovery" && s.preset != "default") throw UsageError("--preset must be 'default' or 'recovery'");
  if (s.truth.size() != kGravityAxes) throw UsageError("--truth expects theta_prime,tau1,tau2,rho");
  spec.cities = s.cities;
  const SyntheticWorld w = make_synthetic_world(spec, s.seed);
  const GravityParams truth = GravityParams::from_array({s.truth[0], s.truth[1], s.truth[2], s.truth[3]});
  const EpidemicPanel observed = w.setup(s.horizon).run(truth, derive_key(s.seed, 0x6f6273ULL));

  const fs::path dir(s.out);
  fs::create_directories(dir);
  write_file((dir / "cities.csv").string(), [&](std::ostream& o) { write_cities_csv(o, w.cities); });
  write_file((dir / "cases.csv").string(), [&](std::ostream& o) { write_panel_csv(o, observed); });
  write_file((dir / "run.cfg").string(), [&](std::ostream& o) {
    o << "# synthetic world, preset " << s.preset << ", seed " << s.seed << "\n";
    o << "seed = " << s.seed << "\ncities = cities.csv\ncases = cases.csv\n";
    o << "statistic = zero-proportion\nsusceptible_init = balanced\n";
    for (std::size_t ax = 0; ax < kGravityAxes; ++ax) o << "truth." << kAxisNames[ax] << " = " << format_double(truth[ax]) << '\n';
    o << "grid.theta_prime = " << s.grid << "\ngrid.rho = " << s.grid << '\n';
    o << "pin.tau1 = " << format_double(truth.tau1) << "\npin.tau2 = " << format_double(truth.tau2) << '\n';
    o << "chain_length = 20000\nregion = theta_prime,rho\n";
  });

  RunConfig cfg;
  cfg.seed = s.seed;
  cfg.truth = truth;
  Manifest m("synth", cfg);
  m.seed("world", s.seed);
  for (const char* f : {"cities.csv", "cases.csv", "run.cfg"}) m.output((dir / f).string());
  m.results()["preset"] = s.preset;
  m.results()["zero_proportion_mean"] = [&] {
    const auto p = zero_proportion(observed).values;
    double sum = 0.0;
    for (double v : p) sum += v;
    return p.empty() ? 0.0 : sum / static_cast<double>(p.size());
  }();
  m.write((dir / "run").string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gravem: gravity-model epidemic simulation and emulator-based calibration"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs common;
  std::string panel, training, emulator, chain;
  SynthArgs synth;

  auto* sim = app.add_subcommand("simulate", "simulate a case panel at the configured truth parameters");
  add_common(sim, common);
  auto* sum = app.add_subcommand("summarize", "summary vector of the observed (or a given) panel");
  add_common(sum, common);
  sum->add_option("--panel", panel, "panel CSV to summarize instead of the observed cases");
  auto* des = app.add_subcommand("design", "simulate the design grid and record distances to the data");
  add_common(des, common);
  auto* fit = app.add_subcommand("fit", "fit the Gaussian-process emulator to a training set");
  add_common(fit, common);
  fit->add_option("--training,-t", training, "training set CSV from 'design'");
  auto* cal = app.add_subcommand("calibrate", "slice-sample the emulator posterior");
  add_common(cal, common);
  cal->add_option("--emulator,-e", emulator, "emulator file from 'fit'");
  auto* flx = app.add_subcommand("flux", "posterior flux summaries, edge lists and histograms");
  add_common(flx, common);
  flx->add_option("--chain", chain, "chain CSV from 'calibrate'");
  auto* syn = app.add_subcommand("synth", "write a synthetic world (cities, cases, config)");
  syn->add_option("--out,-o", synth.out, "output directory")->required();
  syn->add_option("--seed", synth.seed, "world and observation seed")->required();
  syn->add_option("--preset", synth.preset, "default | recovery")->capture_default_str();
  syn->add_option("--truth", synth.truth, "theta_prime tau1 tau2 rho")->delimiter(',')->expected(4)->capture_default_str();
  syn->add_option("--horizon", synth.horizon, "biweeks")->capture_default_str();
  syn->add_option("--cities", synth.cities, "city count")->capture_default_str();
  syn->add_option("--grid", synth.grid, "design points per free axis")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (dynamic_cast<const CLI::RequiredError*>(&e) && app.get_subcommands().empty()) std::cerr << app.help();
    return kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (sum->parsed()) return cmd_summarize(common, panel);
    if (des->parsed()) return cmd_design(common);
    if (fit->parsed()) return cmd_fit(common, training);
    if (cal->parsed()) return cmd_calibrate(common, emulator);
    if (flx->parsed()) return cmd_flux(common, chain);
    if (syn->parsed()) return cmd_synth(synth);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  std::cerr << app.help();
  return kUsage;
}

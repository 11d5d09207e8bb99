#include "calibr8/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"
#include "calibr8/predict.hpp"
#include "calibr8/subprocess.hpp"
#include "calibr8/testbed.hpp"

namespace calibr8::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

std::string resolve_path(const std::string& p, const std::string& base) {
  fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).string();
}

Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigurationError(std::string("invalid JSON: ") + e.what(), what);
  }
}

// Fragment readers that record the value actually used into `res`.
struct Fragment {
  const Json& j;
  std::string path;
  Json& res;

  bool has(const char* k) const { return j.contains(k); }
  std::string at(const char* k) const { return path + "." + k; }
  std::size_t count(const char* k, std::size_t def) {
    std::size_t v = has(k) ? io::get_count(j[k], at(k)) : def;
    res[k] = v;
    return v;
  }
  double real(const char* k, double def) {
    double v = has(k) ? io::get_real(j[k], at(k)) : def;
    res[k] = std::isinf(v) ? Json(v > 0 ? "inf" : "-inf") : Json(v);
    return v;
  }
  bool flag(const char* k, bool def) {
    bool v = has(k) ? io::get_bool(j[k], at(k)) : def;
    res[k] = v;
    return v;
  }
  std::string str(const char* k, const std::string& def) {
    std::string v = has(k) ? io::get_string(j[k], at(k)) : def;
    res[k] = v;
    return v;
  }
  Vector vec(const char* k, const Vector& def) {
    Vector v = has(k) ? io::get_vector(j[k], at(k)) : def;
    res[k] = io::to_json(v);
    return v;
  }
};

void require_positive(std::size_t v, const std::string& path) {
  if (v == 0) throw ConfigurationError("must be positive", path);
}

std::vector<std::string> allowed_keys(const std::string& method) {
  if (method == "mh") return {"proposal_sd", "n_iter", "burn_in", "adapt", "m"};
  if (method == "abc") return {"n_sims", "rule", "distance"};
  if (method == "smc")
    return {"n_particles", "schedule", "adaptive", "values", "final_tolerance", "target_ess_fraction", "max_stages",
            "mh_moves", "distance"};
  if (method == "hm") return {"var_disc", "candidates", "tau", "wave_count", "runs_per_wave", "emulator"};
  if (method == "eki") return {"prior_mu", "prior_Sigma", "n_ensemble", "n_iterations"};
  if (method == "vi") return {"steps", "mc_samples", "step_size", "decay_steps", "draws"};
  if (method == "surrogate_mh")
    return {"proposal_sd", "n_iter", "burn_in", "adapt", "variance_threshold", "n_design", "refit_every", "kernel"};
  if (method == "mle") return {"restarts"};
  return {};
}

std::uint64_t method_minimum_budget(const std::string& method, std::size_t d) {
  return method == "mle" ? 10 * d : 1;
}

}  // namespace

RunConfig parse_run_config(const Json& j, const std::string& base_dir) {
  io::check_keys(j, {"simulator", "space", "observations", "method", "budget", "seed", "output_dir", "predict"}, "");
  RunConfig cfg;
  cfg.raw = j;

  // simulator
  const Json& sj = io::field(j, "simulator", "");
  std::optional<testbed::TestProblem> problem;
  if (!sj.is_object()) throw ConfigurationError("expected an object", "simulator");
  if (sj.contains("builtin")) {
    io::check_keys(sj, {"builtin"}, "simulator");
    cfg.simulator_name = io::get_string(sj["builtin"], "simulator.builtin");
    problem = testbed::make_problem(cfg.simulator_name);
  } else if (sj.contains("command")) {
    io::check_keys(sj, {"command", "input_dim", "output_dim", "control_dim", "stochastic", "timeout_s"}, "simulator");
    cfg.simulator_name = "subprocess";
  } else {
    throw ConfigurationError("needs 'builtin' or 'command'", "simulator");
  }

  // space
  if (j.contains("space")) cfg.space = io::parameter_space_from_json(j["space"], "space");
  else if (problem) cfg.space = problem->space;
  else throw ConfigurationError("missing required field", "space");

  if (problem) {
    if (cfg.space.dim() != problem->space.dim())
      throw ConfigurationError("builtin simulator expects " + std::to_string(problem->space.dim()) + " dimensions",
                               "space");
    cfg.simulator = problem->simulator;
  } else {
    SubprocessSpec spec;
    spec.command = io::get_string(io::field(sj, "command", "simulator"), "simulator.command");
    spec.info.name = "subprocess";
    spec.info.input_dim = sj.contains("input_dim") ? io::get_count(sj["input_dim"], "simulator.input_dim") : cfg.space.dim();
    spec.info.output_dim = io::get_count(io::field(sj, "output_dim", "simulator"), "simulator.output_dim");
    spec.info.control_dim = sj.contains("control_dim") ? io::get_count(sj["control_dim"], "simulator.control_dim") : 0;
    spec.info.stochastic = sj.contains("stochastic") && io::get_bool(sj["stochastic"], "simulator.stochastic");
    if (sj.contains("timeout_s")) spec.timeout_s = io::get_real(sj["timeout_s"], "simulator.timeout_s");
    if (spec.info.input_dim != cfg.space.dim())
      throw ConfigurationError("must equal the number of space dimensions", "simulator.input_dim");
    require_positive(spec.info.output_dim, "simulator.output_dim");
    if (!(spec.timeout_s > 0)) throw ConfigurationError("must be positive", "simulator.timeout_s");
    cfg.simulator = make_subprocess_simulator(spec, cfg.space);
  }

  // observations
  if (j.contains("observations")) {
    const Json& oj = j["observations"];
    if (oj.is_string()) {
      std::string p = resolve_path(oj.get<std::string>(), base_dir);
      Json file;
      try {
        file = parse_json_text(io::read_file(p), "observations");
      } catch (const ConfigurationError& e) {
        throw ConfigurationError(e.what(), "observations");
      }
      cfg.observations = io::observation_set_from_json(file, "observations");
    } else {
      cfg.observations = io::observation_set_from_json(oj, "observations");
    }
  } else if (problem) {
    cfg.observations = problem->observations;
  } else {
    throw ConfigurationError("missing required field", "observations");
  }
  try {
    cfg.observations.op.check(cfg.simulator->output_dim());
    if (cfg.observations.control.dim() != cfg.simulator->control_dim())
      throw ConfigurationError("control length does not match the simulator", "observations.control");
    Vector probe = Vector::Zero(static_cast<Eigen::Index>(cfg.simulator->output_dim()));
    if (static_cast<std::size_t>(apply_operator(cfg.observations.op, probe).size()) != cfg.observations.size())
      throw ConfigurationError("operator output length does not match y", "observations.operator");
  } catch (const ConfigurationError& e) {
    std::string p = e.path();
    if (p.rfind("observations", 0) != 0) p = "observations." + (p.empty() ? std::string("operator") : p);
    throw ConfigurationError(e.what(), p);
  }

  // method
  const Json& mj = io::field(j, "method", "");
  if (!mj.is_object() || mj.size() != 1)
    throw ConfigurationError("exactly one method fragment is required", "method");
  cfg.method = mj.begin().key();
  const auto& names = method_names();
  if (std::find(names.begin(), names.end(), cfg.method) == names.end())
    throw ConfigurationError("unknown method '" + cfg.method + "'", "method");
  cfg.fragment = mj.begin().value();
  if (!cfg.fragment.is_object()) throw ConfigurationError("expected an object", "method." + cfg.method);
  io::check_keys(cfg.fragment, allowed_keys(cfg.method), "method." + cfg.method);

  cfg.budget = io::get_count(io::field(j, "budget", ""), "budget");
  if (cfg.budget < method_minimum_budget(cfg.method, cfg.space.dim()))
    throw ConfigurationError("below the minimum of " + std::to_string(method_minimum_budget(cfg.method, cfg.space.dim())) +
                                 " for method " + cfg.method,
                             "budget");
  cfg.seed = j.contains("seed") ? static_cast<std::uint64_t>(io::get_count(j["seed"], "seed")) : 0;
  if (j.contains("output_dir")) cfg.output_dir = io::get_string(j["output_dir"], "output_dir");

  cfg.resolved = {{"simulator", sj},
                  {"space", io::to_json(cfg.space)},
                  {"observations", io::to_json(cfg.observations)},
                  {"budget", cfg.budget},
                  {"seed", cfg.seed}};
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  Json j = parse_json_text(io::read_file(path), "config");
  return parse_run_config(j, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

namespace {

struct RunOutput {
  ParticleSet particles;
  Json diagnostics = Json::object();
  std::vector<std::pair<std::string, std::string>> extra_files;  // name, content
};

SummaryStatistic parse_summary(const Json& j, const std::string& path) {
  io::check_keys(j, {"kind", "levels", "A", "b"}, path);
  SummaryStatistic T;
  std::string k = io::get_string(io::field(j, "kind", path), path + ".kind");
  if (k == "identity") T.kind = SummaryStatistic::Kind::identity;
  else if (k == "mean") T.kind = SummaryStatistic::Kind::mean;
  else if (k == "variance") T.kind = SummaryStatistic::Kind::variance;
  else if (k == "quantiles") {
    T.kind = SummaryStatistic::Kind::quantiles;
    Vector l = io::get_vector(io::field(j, "levels", path), path + ".levels");
    T.levels.assign(l.data(), l.data() + l.size());
  } else if (k == "affine") {
    T.kind = SummaryStatistic::Kind::affine;
    T.A = io::get_matrix(io::field(j, "A", path), path + ".A");
    if (j.contains("b")) T.b = io::get_vector(j["b"], path + ".b");
  } else {
    throw ConfigurationError("unknown summary kind", path + ".kind");
  }
  return T;
}

ScoreFunction parse_distance(const RunConfig& cfg, const Json& frag, const std::string& path, Json& res) {
  SummaryStatistic T;
  DistanceMetric metric = DistanceMetric::euclidean;
  Vector weights;
  Json r = {{"metric", "euclidean"}, {"summary", {{"kind", "identity"}}}};
  if (frag.contains("distance")) {
    const Json& dj = frag["distance"];
    const std::string dp = path + ".distance";
    io::check_keys(dj, {"summary", "metric", "weights"}, dp);
    if (dj.contains("summary")) {
      T = parse_summary(dj["summary"], dp + ".summary");
      r["summary"] = dj["summary"];
    }
    if (dj.contains("metric")) {
      std::string m = io::get_string(dj["metric"], dp + ".metric");
      if (m == "scaled-euclidean") metric = DistanceMetric::scaled_euclidean;
      else if (m != "euclidean") throw ConfigurationError("metric must be euclidean or scaled-euclidean", dp + ".metric");
      r["metric"] = m;
    }
    if (dj.contains("weights")) {
      weights = io::get_vector(dj["weights"], dp + ".weights");
      r["weights"] = io::to_json(weights);
    }
  }
  res["distance"] = r;
  return make_summary_distance_score(*cfg.simulator, cfg.observations, T, metric, weights);
}

/// Log likelihood for engines that call it concurrently: stochastic
/// simulators draw their seed from the bits of x, so values do not depend
/// on evaluation order.
LogDensity concurrent_log_lik(const RunConfig& cfg, std::size_t m) {
  const auto& sim = *cfg.simulator;
  const auto& obs = cfg.observations;
  const std::uint64_t seed = cfg.seed;
  return [&sim, &obs, seed, m](const Vector& x) {
    if (!sim.stochastic()) return log_likelihood(obs, apply_operator(obs.op, evaluate(sim, x, obs.control, 0)));
    std::uint64_t h = seed;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &x[i], sizeof bits);
      h = splitmix64(h ^ bits);
    }
    return log_likelihood_stochastic(sim, obs, x, m, derive_seed(h, stream::likelihood), {}).value;
  };
}

Json particles_summary(const ParticleSet& p) {
  Json j = {{"n_particles", p.size()}, {"ess", p.size() ? p.ess() : 0.0}};
  if (p.size()) {
    j["mean"] = io::to_json(p.mean());
    j["variance"] = io::to_json(p.variance());
  }
  return j;
}

RunOutput run_method(const RunConfig& cfg, unsigned threads, Json& res) {
  const auto& sim = *cfg.simulator;
  const auto& obs = cfg.observations;
  const auto& space = cfg.space;
  const std::size_t d = space.dim();
  const std::string path = "method." + cfg.method;
  Fragment f{cfg.fragment, path, res};
  RunOutput out;

  if (cfg.method == "mh") {
    MhOptions o;
    o.proposal_sd = f.vec("proposal_sd", 0.5 * space.prior_sd());
    o.n_iter = f.count("n_iter", 10000);
    o.burn_in = f.count("burn_in", o.n_iter / 5);
    o.adapt = f.flag("adapt", true);
    std::size_t m = f.count("m", 10);
    o.seed = derive_seed(cfg.seed, stream::mcmc);
    if (static_cast<std::size_t>(o.proposal_sd.size()) != d)
      throw ConfigurationError("needs one entry per dimension", f.at("proposal_sd"));
    if (o.n_iter <= o.burn_in) throw ConfigurationError("must exceed burn_in", f.at("n_iter"));
    Chain c = metropolis_hastings(make_log_posterior(sim, obs, space, {}, sim.stochastic() ? m : 1, cfg.seed), space, o);
    out.particles = c.to_particles();
    out.diagnostics["final_proposal_sd"] = io::to_json(c.proposal_sd);
    if (c.size() >= 4) {
      Json ess = Json::array();
      for (Eigen::Index k = 0; k < c.states.cols(); ++k) ess.push_back(series_ess(c.states.col(k)));
      out.diagnostics["chain_ess"] = ess;
    }
  } else if (cfg.method == "abc") {
    AbcOptions o;
    o.n_sims = f.count("n_sims", 10000);
    require_positive(o.n_sims, f.at("n_sims"));
    o.threads = threads;
    o.seed = cfg.seed;
    Json rule = {{"kind", "quantile"}, {"alpha", 0.01}};
    if (cfg.fragment.contains("rule")) {
      const Json& rj = cfg.fragment["rule"];
      const std::string rp = f.at("rule");
      io::check_keys(rj, {"kind", "alpha", "tau"}, rp);
      std::string k = io::get_string(io::field(rj, "kind", rp), rp + ".kind");
      if (k == "quantile") {
        double a = io::get_real(io::field(rj, "alpha", rp), rp + ".alpha");
        if (!(a > 0 && a <= 1)) throw ConfigurationError("must lie in (0, 1]", rp + ".alpha");
        o.rule = AcceptanceRule::quantile(a);
        rule = {{"kind", k}, {"alpha", a}};
      } else if (k == "fixed") {
        double t = io::get_real(io::field(rj, "tau", rp), rp + ".tau");
        o.rule = AcceptanceRule::fixed(t);
        rule = {{"kind", k}, {"tau", std::isinf(t) ? Json("inf") : Json(t)}};
      } else if (k == "three-sigma") {
        o.rule = AcceptanceRule::three_sigma();
        rule = {{"kind", k}};
      } else {
        throw ConfigurationError("rule kind must be quantile, fixed or three-sigma", rp + ".kind");
      }
    }
    res["rule"] = rule;
    if (o.rule.provenance == AcceptanceRule::Provenance::quantile && o.n_sims < 100)
      throw ConfigurationError("quantile rules need n_sims >= 100", f.at("n_sims"));
    ScoreFunction dist = parse_distance(cfg, cfg.fragment, path, res);
    out.particles = abc_rejection(space, dist, o);
  } else if (cfg.method == "smc") {
    SmcOptions o;
    o.n_particles = f.count("n_particles", 1000);
    if (o.n_particles < 50) throw ConfigurationError("must be at least 50", f.at("n_particles"));
    std::string sched = f.str("schedule", "tempering");
    try {
      o.schedule = smc_schedule_from_string(sched);
    } catch (const ConfigurationError&) {
      throw ConfigurationError("must be tempering or abc-tolerance", f.at("schedule"));
    }
    o.adaptive = f.flag("adaptive", true);
    if (!o.adaptive) {
      Vector v = f.vec("values", Vector());
      if (v.size() == 0) throw ConfigurationError("required when adaptive is false", f.at("values"));
      o.values.assign(v.data(), v.data() + v.size());
    }
    o.final_tolerance = f.real("final_tolerance", 0.0);
    o.target_ess_fraction = f.real("target_ess_fraction", 0.5);
    o.max_stages = f.count("max_stages", 100);
    o.mh_moves = static_cast<int>(f.count("mh_moves", 1));
    o.threads = threads;
    o.seed = cfg.seed;
    if (o.schedule == SmcSchedule::tempering) {
      out.particles = smc_tempering(concurrent_log_lik(cfg, 10), space, o);
    } else {
      out.particles = smc_abc(parse_distance(cfg, cfg.fragment, path, res), space, o);
    }
  } else if (cfg.method == "hm") {
    HistoryMatchOptions o;
    o.var_disc = f.vec("var_disc", Vector::Zero(static_cast<Eigen::Index>(obs.size())));
    if (static_cast<std::size_t>(o.var_disc.size()) != obs.size())
      throw ConfigurationError("needs one entry per observation", f.at("var_disc"));
    if (cfg.fragment.contains("candidates") && cfg.fragment["candidates"].is_array()) {
      o.candidates = io::get_matrix(cfg.fragment["candidates"], f.at("candidates"));
      if (static_cast<std::size_t>(o.candidates->cols()) != d)
        throw ConfigurationError("candidate rows need one entry per dimension", f.at("candidates"));
      res["candidates"] = cfg.fragment["candidates"];
    } else {
      o.n_candidates = f.count("candidates", 200 * d);
      require_positive(o.n_candidates, f.at("candidates"));
    }
    o.tau = f.real("tau", 3.0);
    o.wave_count = f.count("wave_count", 1);
    require_positive(o.wave_count, f.at("wave_count"));
    o.runs_per_wave = f.count("runs_per_wave", 20);
    o.seed = cfg.seed;
    o.threads = threads;
    std::vector<NroyReport> waves;
    if (cfg.fragment.contains("emulator")) {
      const Json& ej = cfg.fragment["emulator"];
      const std::string ep = f.at("emulator");
      io::check_keys(ej, {"n_design", "kernel"}, ep);
      std::size_t nd = ej.contains("n_design") ? io::get_count(ej["n_design"], ep + ".n_design") : 10 * d;
      if (nd < 3) throw ConfigurationError("must be at least 3", ep + ".n_design");
      if (ej.contains("kernel")) {
        try {
          o.gp.kernel = kernel_kind_from_string(io::get_string(ej["kernel"], ep + ".kernel"));
        } catch (const ConfigurationError&) {
          throw ConfigurationError("unknown kernel", ep + ".kernel");
        }
      }
      res["emulator"] = {{"n_design", nd}, {"kernel", to_string(o.gp.kernel)}};
      Matrix design = build_design(space, nd, DesignMethod::latin_hypercube, derive_seed(cfg.seed, stream::design));
      Ensemble ens = run_ensemble(sim, design, obs.control, cfg.seed, threads);
      Matrix Y(ens.outputs.rows(), static_cast<Eigen::Index>(obs.size()));
      for (Eigen::Index i = 0; i < Y.rows(); ++i)
        Y.row(i) = apply_operator(obs.op, ens.outputs.row(i).transpose()).transpose();
      o.gp.seed = derive_seed(cfg.seed, stream::gp_fit);
      waves = history_match(Emulator::fit(ens.inputs, Y, o.gp), sim, obs, space, o);
    } else {
      waves = history_match(sim, obs, space, o);
    }
    const NroyReport& last = waves.back();
    out.particles = ParticleSet::uniform(last.nroy(), "hm");
    Vector lp(static_cast<Eigen::Index>(last.n_accepted()));
    for (std::size_t i = 0, k = 0; i < last.accepted.size(); ++i)
      if (last.accepted[i]) lp[static_cast<Eigen::Index>(k++)] = -last.implausibility[static_cast<Eigen::Index>(i)];
    out.particles.log_post = lp;
    out.particles.meta.accepted = last.n_accepted();
    out.particles.meta.proposed = static_cast<std::uint64_t>(last.candidates.rows());
    Json wj = Json::array();
    std::ostringstream csv;
    csv << "wave";
    for (const auto& n : space.names()) csv << ",x_" << n;
    csv << ",implausibility,accepted\n";
    for (const auto& w : waves) {
      wj.push_back({{"wave", w.wave},
                    {"candidates", w.candidates.rows()},
                    {"accepted", w.n_accepted()},
                    {"retained_fraction", w.retained_fraction},
                    {"retained_of_initial", w.retained_of_initial},
                    {"new_runs", w.new_runs},
                    {"warnings", w.warnings}});
      for (auto& m : w.warnings) out.particles.meta.warnings.push_back(m);
      for (Eigen::Index i = 0; i < w.candidates.rows(); ++i) {
        csv << w.wave;
        for (Eigen::Index k = 0; k < w.candidates.cols(); ++k) csv << ',' << io::format_real(w.candidates(i, k));
        csv << ',' << io::format_real(w.implausibility[i]) << ',' << int(w.accepted[static_cast<std::size_t>(i)]) << '\n';
      }
    }
    out.diagnostics["waves"] = wj;
    out.extra_files.emplace_back("hm_waves.csv", csv.str());
  } else if (cfg.method == "eki") {
    EkiOptions o;
    Vector mu = f.vec("prior_mu", space.prior_mean());
    Matrix Sigma;
    if (cfg.fragment.contains("prior_Sigma")) {
      Sigma = io::get_matrix(cfg.fragment["prior_Sigma"], f.at("prior_Sigma"));
      res["prior_Sigma"] = cfg.fragment["prior_Sigma"];
    } else {
      Vector sd = space.prior_sd();
      Sigma = sd.cwiseAbs2().asDiagonal();
      res["prior_Sigma"] = io::to_json(Sigma);
    }
    if (static_cast<std::size_t>(mu.size()) != d) throw ConfigurationError("needs one entry per dimension", f.at("prior_mu"));
    if (static_cast<std::size_t>(Sigma.rows()) != d || Sigma.cols() != Sigma.rows())
      throw ConfigurationError("must be d x d", f.at("prior_Sigma"));
    o.n_ensemble = f.count("n_ensemble", 100);
    if (o.n_ensemble < d + 2) throw ConfigurationError("must be at least d + 2", f.at("n_ensemble"));
    o.n_iterations = f.count("n_iterations", 5);
    require_positive(o.n_iterations, f.at("n_iterations"));
    o.seed = cfg.seed;
    o.threads = threads;
    if (obs.model.kind != ObservationModel::Kind::gaussian_iid &&
        obs.model.kind != ObservationModel::Kind::gaussian_correlated)
      throw ConfigurationError("eki requires a gaussian observation model", "observations.model.kind");
    EkiResult r = eki(sim, obs, space, mu, Sigma, o);
    out.particles = std::move(r.particles);
    out.diagnostics["gaussian"] = {{"mu", io::to_json(r.approx.mu)}, {"Sigma", io::to_json(r.approx.Sigma)}};
    out.diagnostics["bimodality"] = io::to_json(r.bimodality);
    out.diagnostics["multimodality_risk"] = r.multimodality_risk;
  } else if (cfg.method == "vi") {
    ViOptions o;
    o.steps = f.count("steps", 3000);
    if (o.steps < 4) throw ConfigurationError("must be at least 4", f.at("steps"));
    o.mc_samples = f.count("mc_samples", 32);
    if (o.mc_samples < 2) throw ConfigurationError("must be at least 2", f.at("mc_samples"));
    o.step_size = f.real("step_size", 0.05);
    if (!(o.step_size > 0)) throw ConfigurationError("must be positive", f.at("step_size"));
    o.decay_steps = f.real("decay_steps", 500);
    if (!(o.decay_steps > 0)) throw ConfigurationError("must be positive", f.at("decay_steps"));
    std::size_t draws = f.count("draws", 1000);
    require_positive(draws, f.at("draws"));
    o.seed = cfg.seed;
    ViResult r = meanfield_vi(concurrent_log_lik(cfg, 10), space, o);
    Matrix pts(static_cast<Eigen::Index>(draws), static_cast<Eigen::Index>(d));
    Rng rng = make_rng(cfg.seed, stream::vi, 1);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      Vector z(static_cast<Eigen::Index>(d));
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = r.params.mu[k] + r.params.sigma[k] * normal(rng);
      pts.row(i) = space.clamp(z).transpose();
    }
    out.particles = ParticleSet::uniform(pts, "vi");
    out.diagnostics["variational"] = {{"mu", io::to_json(r.params.mu)}, {"sigma", io::to_json(r.params.sigma)}};
    std::ostringstream csv;
    csv << "step,elbo\n";
    for (std::size_t t = 0; t < r.elbo.size(); ++t) csv << t << ',' << io::format_real(r.elbo[t]) << '\n';
    out.extra_files.emplace_back("vi_elbo.csv", csv.str());
  } else if (cfg.method == "surrogate_mh") {
    SurrogateMhOptions o;
    o.mh.proposal_sd = f.vec("proposal_sd", 0.5 * space.prior_sd());
    o.mh.n_iter = f.count("n_iter", 10000);
    o.mh.burn_in = f.count("burn_in", o.mh.n_iter / 5);
    o.mh.adapt = f.flag("adapt", true);
    o.mh.seed = derive_seed(cfg.seed, stream::mcmc);
    if (static_cast<std::size_t>(o.mh.proposal_sd.size()) != d)
      throw ConfigurationError("needs one entry per dimension", f.at("proposal_sd"));
    if (o.mh.n_iter <= o.mh.burn_in) throw ConfigurationError("must exceed burn_in", f.at("n_iter"));
    o.variance_threshold = f.real("variance_threshold", 0.1);
    o.refit_every = f.count("refit_every", 10);
    std::size_t nd = f.count("n_design", 5 * d + 5);
    if (nd < 3) throw ConfigurationError("must be at least 3", f.at("n_design"));
    std::string kern = f.str("kernel", "squared-exponential");
    try {
      o.gp.kernel = kernel_kind_from_string(kern);
    } catch (const ConfigurationError&) {
      throw ConfigurationError("unknown kernel", f.at("kernel"));
    }
    if (sim.stochastic()) throw ConfigurationError("surrogate_mh needs a deterministic simulator", "simulator");
    if (obs.model.kind != ObservationModel::Kind::gaussian_iid &&
        obs.model.kind != ObservationModel::Kind::gaussian_correlated)
      throw ConfigurationError("surrogate_mh requires a gaussian observation model", "observations.model.kind");
    Matrix design = build_design(space, nd, DesignMethod::latin_hypercube, derive_seed(cfg.seed, stream::design));
    Ensemble ens = run_ensemble(sim, design, obs.control, cfg.seed, threads);
    Matrix Y(ens.outputs.rows(), static_cast<Eigen::Index>(obs.size()));
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      Y.row(i) = apply_operator(obs.op, ens.outputs.row(i).transpose()).transpose();
    o.gp.seed = derive_seed(cfg.seed, stream::gp_fit);
    auto r = surrogate_mh(sim, Emulator::fit(ens.inputs, Y, o.gp), ens, obs, space, o);
    out.particles = r.chain.to_particles();
    out.particles.meta.method = "surrogate_mh";
    out.diagnostics["surrogate_sim_calls"] = r.sim_calls;
    out.diagnostics["initial_design"] = nd;
    out.diagnostics["fell_back"] = r.fell_back;
  } else if (cfg.method == "mle") {
    int restarts = static_cast<int>(f.count("restarts", 4));
    if (restarts < 1) throw ConfigurationError("must be at least 1", f.at("restarts"));
    auto score = make_neg_log_lik_score(sim, obs, {}, sim.stochastic() ? 10 : 1);
    MleResult r = mle(score, space, static_cast<std::size_t>(cfg.budget), restarts, cfg.seed);
    Matrix pt = r.x.transpose();
    out.particles = ParticleSet::uniform(pt, "mle");
    out.particles.log_post = Vector::Constant(1, -r.score);
    out.diagnostics["mle"] = {{"x", io::to_json(r.x)}, {"score", r.score}, {"best_restart", r.best_restart}};
  }
  return out;
}

std::string particles_csv(const ParticleSet& p, const std::vector<std::string>& names) {
  std::ostringstream os;
  io::write_particles_csv(os, p, names);
  return os.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

int report_config_error(const ConfigurationError& e) {
  std::cerr << "calibr8: schema error at " << (e.path().empty() ? std::string("<root>") : e.path()) << ": "
            << e.what() << '\n';
  return schema_error;
}

}  // namespace

int cmd_run(const std::string& config_path, const CommonOptions& opts) {
  const unsigned threads = opts.threads ? opts.threads : default_threads();
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const ConfigurationError& e) {
    return report_config_error(e);
  }
  const std::string dir = opts.output ? *opts.output : cfg.output_dir;

  auto t0 = std::chrono::steady_clock::now();
  cfg.simulator->reset_evaluations();
  cfg.simulator->set_budget(cfg.budget);
  Json res = Json::object();
  RunOutput out;
  bool partial = false;
  std::string partial_msg;
  try {
    out = run_method(cfg, threads, res);
    partial = out.particles.meta.partial;
  } catch (const ConfigurationError& e) {
    return report_config_error(e);
  } catch (const BudgetExhausted& e) {
    partial = true;
    partial_msg = e.what();
    out.particles = ParticleSet::uniform(Matrix(0, static_cast<Eigen::Index>(cfg.space.dim())), cfg.method);
  } catch (const std::exception& e) {
    std::cerr << "calibr8: " << e.what() << '\n';
    return failure;
  }
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ParticleSet& p = out.particles;
  Json diag = out.diagnostics;
  diag["method"] = cfg.method;
  diag["n_sim_evals"] = cfg.simulator->evaluations();
  diag["budget"] = cfg.budget;
  diag["acceptance_rate"] = p.acceptance_rate();
  diag["ess"] = p.size() ? p.ess() : 0.0;
  diag["runtime_s"] = runtime;
  diag["partial"] = partial;
  diag["schedule"] = p.meta.schedule;
  diag["posterior"] = particles_summary(p);
  std::vector<std::string> warnings = p.meta.warnings;
  for (auto& w : model_warnings(cfg.observations)) warnings.push_back(w);
  if (!partial_msg.empty()) warnings.push_back("run stopped early: " + partial_msg);
  diag["warnings"] = warnings;

  Json resolved = cfg.resolved;
  resolved["method"] = {{cfg.method, res}};
  Json manifest = {{"tool", "calibr8"},
                   {"version", "0.1.0"},
                   {"config_file", fs::path(config_path).filename().string()},
                   {"config", cfg.raw},
                   {"resolved", resolved},
                   {"seed", cfg.seed},
                   {"outputs", Json::array({"particles.csv", "diagnostics.json", "manifest.json"})}};
  for (auto& [name, _] : out.extra_files) manifest["outputs"].push_back(name);

  try {
    ensure_dir(dir);
    io::write_file((fs::path(dir) / "particles.csv").string(), particles_csv(p, cfg.space.names()));
    io::write_file((fs::path(dir) / "diagnostics.json").string(), diag.dump(2) + "\n");
    io::write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    for (auto& [name, content] : out.extra_files) io::write_file((fs::path(dir) / name).string(), content);
  } catch (const std::exception& e) {
    std::cerr << "calibr8: " << e.what() << '\n';
    return failure;
  }
  if (partial) {
    std::cerr << "calibr8: evaluation budget of " << cfg.budget << " exhausted; partial results written to " << dir
              << '\n';
    return budget_exhausted;
  }
  return ok;
}

int cmd_predict(const std::string& config_path, const std::string& posterior_csv, const std::vector<double>& u_p,
                const CommonOptions& opts, std::size_t draws) {
  const unsigned threads = opts.threads ? opts.threads : default_threads();
  try {
    RunConfig cfg = load_run_config(config_path);
    std::ifstream in(posterior_csv);
    if (!in) throw ConfigurationError("cannot open posterior file '" + posterior_csv + "'", "posterior");
    io::ParticleFile pf;
    try {
      pf = io::read_particles_csv(in);
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(e.what(), "posterior." + e.path());
    }
    if (pf.names != cfg.space.names())
      throw ConfigurationError("parameter columns do not match the configured space", "posterior.header");
    if (pf.particles.size() == 0) throw ConfigurationError("posterior file has no rows", "posterior");
    ControlInput u{Eigen::Map<const Vector>(u_p.data(), static_cast<Eigen::Index>(u_p.size())), "u_p"};
    if (u.dim() != cfg.simulator->control_dim())
      throw ConfigurationError("expected " + std::to_string(cfg.simulator->control_dim()) + " control values", "u");
    if (draws == 0) throw ConfigurationError("must be positive", "draws");

    bool noise = true;
    if (cfg.raw.contains("predict")) {
      const Json& pj = cfg.raw["predict"];
      io::check_keys(pj, {"draws", "noise"}, "predict");
      if (pj.contains("draws")) draws = io::get_count(pj["draws"], "predict.draws");
      if (pj.contains("noise")) noise = io::get_bool(pj["noise"], "predict.noise");
    }
    const std::string dir = opts.output ? *opts.output : cfg.output_dir;
    PredictOptions po;
    po.draws = draws;
    po.add_noise = noise;
    po.seed = derive_seed(cfg.seed, stream::predict);
    po.threads = threads;
    PredictiveSample ps;
    try {
      ps = calibrated_predict(*cfg.simulator, pf.particles, u, cfg.observations, po);
    } catch (const ConfigurationError&) {
      throw;
    } catch (const Error& e) {
      std::cerr << "calibr8: " << e.what() << '\n';
      return failure;
    }
    std::vector<std::string> header;
    for (std::size_t k = 0; k < ps.outputs(); ++k) header.push_back("y_" + std::to_string(k));
    std::ostringstream csv;
    io::write_matrix_csv(csv, header, ps.draws);
    Json summary = {{"quantiles", {{"q05", io::to_json(ps.q05)}, {"q50", io::to_json(ps.q50)}, {"q95", io::to_json(ps.q95)}}},
                    {"coverage", nullptr},
                    {"draws", ps.size()},
                    {"control", io::to_json(u.values)},
                    {"source_ess", ps.source_ess},
                    {"warnings", ps.warnings}};
    ensure_dir(dir);
    io::write_file((fs::path(dir) / "predictive.csv").string(), csv.str());
    io::write_file((fs::path(dir) / "predictive_summary.json").string(), summary.dump(2) + "\n");
  } catch (const ConfigurationError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "calibr8: " << e.what() << '\n';
    return failure;
  }
  return ok;
}

int cmd_validate(const std::string& pred_csv, const std::string& y_test_file, const std::vector<double>& levels,
                 const CommonOptions& opts) {
  try {
    std::ifstream pin(pred_csv);
    if (!pin) throw ConfigurationError("cannot open '" + pred_csv + "'", "pred");
    io::MatrixFile pm;
    try {
      pm = io::read_matrix_csv(pin);
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(e.what(), "pred." + e.path());
    }
    std::ifstream yin(y_test_file);
    if (!yin) throw ConfigurationError("cannot open '" + y_test_file + "'", "y_test");
    io::MatrixFile ym;
    try {
      ym = io::read_matrix_csv(yin);
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(e.what(), "y_test." + e.path());
    }
    if (pm.values.rows() == 0) throw ConfigurationError("no predictive draws", "pred");
    Matrix yv = ym.values;
    Vector y = Eigen::Map<const Vector>(yv.data(), yv.size());  // one row or one column
    if (yv.rows() > 1 && yv.cols() > 1) throw ConfigurationError("expected a single row or column", "y_test");
    if (y.size() != pm.values.cols())
      throw ConfigurationError("y_test has " + std::to_string(y.size()) + " values but predictions have " +
                                   std::to_string(pm.values.cols()) + " outputs",
                               "y_test");
    for (double l : levels)
      if (!(l > 0 && l < 1)) throw ConfigurationError("levels must lie in (0, 1)", "levels");
    PredictiveSample ps;
    ps.draws = pm.values;
    HoldoutReport rep = holdout_validate(ps, y, levels);
    Json covered = Json::array();
    for (const auto& c : rep.covered) {
      Json row = Json::array();
      for (char v : c) row.push_back(v != 0);
      covered.push_back(row);
    }
    Json out99 = Json::array();
    for (char v : rep.outside_99) out99.push_back(v != 0);
    Json report = {{"levels", rep.levels},
                   {"coverage", io::to_json(rep.coverage)},
                   {"covered", covered},
                   {"crps", io::to_json(rep.crps)},
                   {"outside_99", out99},
                   {"n_draws", ps.size()},
                   {"reliable", rep.reliable},
                   {"warnings", rep.warnings}};
    fs::path dest = opts.output ? fs::path(*opts.output) : fs::path(pred_csv).parent_path();
    if (dest.empty()) dest = ".";
    ensure_dir(dest.string());
    io::write_file((dest / "validation.json").string(), report.dump(2) + "\n");
  } catch (const ConfigurationError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "calibr8: " << e.what() << '\n';
    return failure;
  }
  return ok;
}

int main(int argc, char** argv) {
  CLI::App app{"calibr8: calibration of black-box simulators"};
  app.require_subcommand(1);

  CommonOptions run_opts, pred_opts, val_opts;
  std::string run_config, pred_config, posterior, pred_file, ytest;
  std::vector<double> u, levels{0.5, 0.9};
  std::size_t draws = 1000;

  auto* run = app.add_subcommand("run", "run one calibration method from a JSON config");
  run->add_option("config", run_config, "config file")->required();
  run->add_option("--threads", run_opts.threads, "worker threads (default: all cores)");
  run->add_option("--output", run_opts.output, "output directory (overrides output_dir)");

  auto* pred = app.add_subcommand("predict", "forward-propagate a posterior to a new control input");
  pred->add_option("config", pred_config, "config file")->required();
  pred->add_option("posterior", posterior, "particle CSV")->required();
  pred->add_option("--u", u, "prediction-time control values")->delimiter(',');
  pred->add_option("--draws", draws, "number of predictive draws");
  pred->add_option("--threads", pred_opts.threads, "worker threads");
  pred->add_option("--output", pred_opts.output, "output directory");

  auto* val = app.add_subcommand("validate", "score predictive draws against held-out data");
  val->add_option("pred", pred_file, "predictive CSV")->required();
  val->add_option("ytest", ytest, "held-out observations CSV")->required();
  val->add_option("--levels", levels, "central interval levels")->delimiter(',');
  val->add_option("--output", val_opts.output, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? ok : schema_error;
  }
  if (*run) return cmd_run(run_config, run_opts);
  if (*pred) return cmd_predict(pred_config, posterior, u, pred_opts, draws);
  return cmd_validate(pred_file, ytest, levels, val_opts);
}

}  // namespace calibr8::cli

#include <algorithm>
#include <numeric>

#include "calibr8/calibrate.hpp"
#include "calibr8/error.hpp"
#include "calibr8/parallel.hpp"

namespace calibr8 {

std::size_t NroyReport::n_accepted() const {
  return static_cast<std::size_t>(std::count_if(accepted.begin(), accepted.end(), [](char c) { return c != 0; }));
}

Matrix NroyReport::nroy() const {
  Matrix out(static_cast<Eigen::Index>(n_accepted()), candidates.cols());
  Eigen::Index j = 0;
  for (std::size_t i = 0; i < accepted.size(); ++i)
    if (accepted[i]) out.row(j++) = candidates.row(static_cast<Eigen::Index>(i));
  return out;
}

namespace {

using Predictor = std::function<void(const Vector& x, std::size_t i, Vector& mean, Vector& var_code)>;

struct Setup {
  Vector var_obs, var_disc;
  Matrix candidates;
};

Setup prepare(const ObservationSet& obs, const ParameterSpace& space, const HistoryMatchOptions& o) {
  Setup s;
  const auto n = static_cast<Eigen::Index>(obs.size());
  s.var_obs = observation_variance(obs);
  s.var_disc = o.var_disc.size() ? o.var_disc : Vector::Zero(n);
  if (s.var_disc.size() != n) throw ParameterError("history_match: var_disc must have one entry per observation");
  if ((s.var_disc.array() < 0).any()) throw ParameterError("history_match: var_disc must be nonnegative");
  if (o.wave_count < 1) throw ParameterError("history_match: wave_count must be at least 1");
  if (o.candidates) {
    s.candidates = *o.candidates;
    if (s.candidates.cols() != static_cast<Eigen::Index>(space.dim()))
      throw ParameterError("history_match: candidate dimension mismatch");
  } else {
    std::size_t m = o.n_candidates ? o.n_candidates : 200 * space.dim();
    s.candidates = build_design(space, m, o.design, derive_seed(o.seed, stream::history, 0));
  }
  return s;
}

NroyReport score_wave(std::size_t wave, const Matrix& cand, const Predictor& predict, const ObservationSet& obs,
                      const Setup& s, const HistoryMatchOptions& o, std::size_t initial) {
  NroyReport r;
  r.wave = wave;
  r.tau = o.tau;
  r.candidates = cand;
  const std::size_t m = static_cast<std::size_t>(cand.rows());
  r.implausibility.resize(cand.rows());
  r.accepted.assign(m, 0);
  parallel_for(m, o.threads, [&](std::size_t i) {
    Vector mean, vc;
    predict(cand.row(static_cast<Eigen::Index>(i)).transpose(), i, mean, vc);
    double I = combined_implausibility(obs.y, mean, s.var_obs, s.var_disc, vc, o.combine);
    r.implausibility[static_cast<Eigen::Index>(i)] = I;
    r.accepted[i] = I < o.tau;
  });
  const std::size_t acc = r.n_accepted();
  r.retained_fraction = m ? static_cast<double>(acc) / static_cast<double>(m) : 0.0;
  r.retained_of_initial = initial ? static_cast<double>(acc) / static_cast<double>(initial) : 0.0;
  if (acc == 0) r.warnings.push_back("no candidate retained: the simulator may be unable to match the data");
  return r;
}

Predictor simulator_predictor(const BlackBoxSimulator& sim, const ObservationSet& obs, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  return [&sim, &obs, seed, n](const Vector& x, std::size_t i, Vector& mean, Vector& vc) {
    mean = apply_operator(obs.op, evaluate(sim, x, obs.control, derive_seed(seed, stream::history, i)));
    vc = Vector::Zero(n);
  };
}

Predictor emulator_predictor(const Emulator& em) {
  return [&em](const Vector& x, std::size_t, Vector& mean, Vector& vc) { em.predict(x, mean, vc); };
}

}  // namespace

std::vector<NroyReport> history_match(const BlackBoxSimulator& sim, const ObservationSet& obs,
                                      const ParameterSpace& space, const HistoryMatchOptions& opts) {
  Setup s = prepare(obs, space, opts);
  const auto initial = static_cast<std::size_t>(s.candidates.rows());
  std::vector<NroyReport> waves;
  Matrix cand = s.candidates;
  for (std::size_t w = 1; w <= opts.wave_count; ++w) {
    auto pred = simulator_predictor(sim, obs, derive_seed(opts.seed, stream::history, w));
    waves.push_back(score_wave(w, cand, pred, obs, s, opts, initial));
    waves.back().new_runs = static_cast<std::size_t>(cand.rows());
    cand = waves.back().nroy();
    if (cand.rows() == 0) break;
  }
  return waves;
}

std::vector<NroyReport> history_match(const Emulator& emulator, const BlackBoxSimulator& sim,
                                      const ObservationSet& obs, const ParameterSpace& space,
                                      const HistoryMatchOptions& opts) {
  if (emulator.outputs() != obs.size())
    throw ParameterError("history_match: emulator must have one output per observation");
  Setup s = prepare(obs, space, opts);
  const auto initial = static_cast<std::size_t>(s.candidates.rows());
  const auto n_out = static_cast<Eigen::Index>(obs.size());

  Emulator em = emulator;
  std::vector<NroyReport> waves;
  waves.push_back(score_wave(1, s.candidates, emulator_predictor(em), obs, s, opts, initial));

  for (std::size_t w = 2; w <= opts.wave_count; ++w) {
    const NroyReport& prev = waves.back();
    Matrix nroy = prev.nroy();
    if (nroy.rows() == 0) break;

    // Previous training runs that survive the previous wave.
    const Matrix& Xold = em.model(0).training_inputs();
    Matrix Yold(Xold.rows(), n_out);
    for (Eigen::Index j = 0; j < n_out; ++j) Yold.col(j) = em.model(static_cast<std::size_t>(j)).training_outputs();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < Xold.rows(); ++i) {
      Vector mean, vc;
      em.predict(Xold.row(i).transpose(), mean, vc);
      if (combined_implausibility(obs.y, mean, s.var_obs, s.var_disc, vc, opts.combine) < prev.tau) keep.push_back(i);
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(nroy.rows()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(opts.seed, stream::history, 1000 + w);
    std::shuffle(order.begin(), order.end(), rng);
    const auto runs = std::min<std::size_t>(opts.runs_per_wave, order.size());
    Matrix design(static_cast<Eigen::Index>(runs), nroy.cols());
    for (std::size_t i = 0; i < runs; ++i) design.row(static_cast<Eigen::Index>(i)) = nroy.row(order[i]);
    Ensemble ens = run_ensemble(sim, design, obs.control, derive_seed(opts.seed, stream::history, 2000 + w),
                                opts.threads);

    const auto total = static_cast<Eigen::Index>(keep.size() + runs);
    Matrix X(total, nroy.cols()), Y(total, n_out);
    Eigen::Index r = 0;
    for (auto i : keep) {
      X.row(r) = Xold.row(i);
      Y.row(r++) = Yold.row(i);
    }
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(runs); ++i) {
      X.row(r) = ens.inputs.row(i);
      Y.row(r++) = apply_operator(obs.op, ens.outputs.row(i).transpose()).transpose();
    }

    std::vector<std::string> notes;
    if (total >= 3) {
      GpFitOptions gpo = opts.gp;
      gpo.seed = derive_seed(opts.seed, stream::gp_fit, w);
      em = Emulator::fit(X, Y, gpo);
    } else {
      notes.push_back("too few runs inside the previous NROY set to refit; emulator kept");
    }
    waves.push_back(score_wave(w, nroy, emulator_predictor(em), obs, s, opts, initial));
    waves.back().new_runs = runs;
    for (auto& m : notes) waves.back().warnings.push_back(m);
  }
  return waves;
}

}  // namespace calibr8

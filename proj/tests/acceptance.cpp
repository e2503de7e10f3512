// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exits non-zero only when a criterion cannot be evaluated at all.

#include "latf/analysis.hpp"
#include "latf/flow.hpp"
#include "latf/hash.hpp"
#include "latf/io.hpp"
#include "latf/pipeline.hpp"
#include "latf/prior.hpp"
#include "latf/spib.hpp"
#include "latf/three_hole_constants.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef LATF_CONFIG_DIR
#define LATF_CONFIG_DIR "configs"
#endif

using namespace latf;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
  void note(const std::string& what) { lines.push_back("     " + what); }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::string cmp(double v, const char* op, double bound) { return fmt(v) + " " + op + " " + fmt(bound); }

void report(int id, const std::string& title, const Verdict& v, Clock::time_point start, double budget_s) {
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  std::cout << "criterion " << id << ' ' << (v.pass ? "PASS" : "FAIL") << ": " << title << " (" << fmt(elapsed, 3)
            << " s, budget " << fmt(budget_s, 3) << " s)\n";
  for (const auto& l : v.lines) std::cout << "    " << l << '\n';
  std::cout.flush();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// ---------------------------------------------------------------------------

Verdict math_kernels() {
  Verdict v;
  double worst = 0.0;
  for (double a : {0.5, 1.0, 1.5, 3.0, 7.5}) {
    for (double b : {0.5, 1.0, 2.0, 4.0}) worst = std::max(worst, std::abs(prior::kummer_m(a, b, 0.0) - 1.0));
  }
  v.check(worst <= 1e-12, "M(a,b,0) = 1, max abs error " + cmp(worst, "<=", 1e-12));
  worst = 0.0;
  for (double x : {1e-3, 0.1, 1.0, 5.0, 20.0, 50.0, 200.0}) {
    worst = std::max(worst, std::abs(prior::log_kummer_m(1.0, 1.0, x) - x) / x);
    if (x <= 50.0) worst = std::max(worst, std::abs(prior::kummer_m(1.0, 1.0, x) / std::exp(x) - 1.0));
  }
  v.check(worst <= 1e-12, "M(1,1,x) = e^x, max rel error " + cmp(worst, "<=", 1e-12));

  worst = 0.0;
  for (double tau : {0.0, 1.0, 2.0, 4.5}) {
    for (double t : {0.5, 1.0, 2.5}) {
      const double z = std::exp(prior::log_normalization(tau, t, 2));
      worst = std::max(worst, std::abs(z / testing::tilted_normalizer_2d(tau, t) - 1.0));
    }
  }
  v.check(worst <= 1e-6, "Z_{tau,T} vs 2D adaptive quadrature, max rel error " + cmp(worst, "<=", 1e-6));

  std::mt19937_64 rng(1);
  worst = 0.0;
  for (double tau : {0.0, 1.0, 2.0, 4.5}) {
    for (double t : {0.5, 1.0, 2.5}) {
      const prior::TiltedPrior p(tau, 2, t);
      const Eigen::MatrixXd z = testing::random_matrix(2, 1000, rng, 3.0);
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double a = p.log_density(z.col(j)), b = p.log_density_completed_square(z.col(j));
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
      }
    }
  }
  v.check(worst <= 1e-12, "tilted density, direct vs completed square, max error " + cmp(worst, "<=", 1e-12));
  return v;
}

Verdict flow_properties() {
  Verdict v;
  std::mt19937_64 rng(2);
  double round_trip = 0.0, log_det = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const flow::FlowModel f(2, 1 + trial % 6, {16, 16}, rng, flow::FlowInit::random);
    const Eigen::VectorXd u = testing::random_matrix(2, 1, rng, 2.0);
    const auto [z, ld] = f.forward(u);
    const auto [back, ild] = f.inverse(z);
    round_trip = std::max({round_trip, (back - u).cwiseAbs().maxCoeff(), std::abs(ld + ild)});
    Eigen::Matrix2d jac;
    const double h = 1e-6;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd a = u, b = u;
      a(k) += h;
      b(k) -= h;
      jac.col(k) = (f.forward(a).first - f.forward(b).first) / (2 * h);
    }
    const double num = std::log(std::abs(jac.determinant()));
    log_det = std::max(log_det, std::abs(num - ld) / std::max(1.0, std::abs(ld)));
  }
  v.check(round_trip < 1e-10, "round trip over 1e4 random (flow, point) draws, max error " + cmp(round_trip, "<", 1e-10));
  v.check(log_det < 1e-5, "log-det vs numerical Jacobian, max rel error " + cmp(log_det, "<", 1e-5));

  const flow::FlowModel id(2, 6, {16, 16}, rng);
  const Eigen::MatrixXd u = testing::random_matrix(2, 1000, rng, 3.0);
  const auto r = id.forward_batch(u);
  const bool exact = (r.points - u).cwiseAbs().maxCoeff() == 0.0 && r.log_det.cwiseAbs().maxCoeff() == 0.0 &&
                     (id.inverse_batch(u).points - u).cwiseAbs().maxCoeff() == 0.0;
  v.check(exact, "identity at initialisation is exact (forward, inverse, log-det)");
  return v;
}

Verdict samplers() {
  Verdict v;
  const std::size_t n = 100000;
  for (double tau : {0.0, 2.0, 4.5}) {
    const prior::TiltedPrior p(tau, 2, 1.0);
    const Eigen::MatrixXd exact = prior::sample_exact(p, n, 10 + static_cast<std::uint64_t>(tau * 10));
    const auto mh = prior::sample_metropolis(p, n, 20 + static_cast<std::uint64_t>(tau * 10));
    const Eigen::MatrixXd exact2 = prior::sample_exact(p, n, 30 + static_cast<std::uint64_t>(tau * 10));
    const auto grid = eval::HistogramGrid::covering(exact, mh.samples, 50);
    const double kl = eval::symmetric_kl(exact, mh.samples, grid);
    const double floor = eval::symmetric_kl(exact, exact2, grid);
    const double ks = testing::ks_statistic(testing::column_norms(exact), testing::column_norms(mh.samples));
    v.check(kl < 0.01, "tau=" + fmt(tau) + " Metropolis vs exact symmetric KL " + cmp(kl, "<", 0.01) +
                           " (exact vs exact at the same n: " + fmt(floor) + ")");
    v.check(ks < 0.01, "tau=" + fmt(tau) + " radius KS " + cmp(ks, "<", 0.01) + ", acceptance " + fmt(mh.acceptance_rate, 3));
  }
  for (int path = 0; path < 2; ++path) {
    double prev = -1.0;
    std::string trace;
    bool increasing = true;
    for (double t : {1.0, 2.5}) {
      const prior::TiltedPrior p(2.0, 2, t);
      const Eigen::MatrixXd s = path == 0 ? prior::sample_exact(p, n, 40) : prior::sample_metropolis(p, n, 41).samples;
      const auto r = testing::column_norms(s);
      const double m = mean(r);
      increasing = increasing && m > prev;
      prev = m;
      trace += " T=" + fmt(t) + ":" + fmt(m);
    }
    v.check(increasing, std::string(path == 0 ? "exact" : "Metropolis") + " mean radius increases with T at tau=2:" + trace);
  }
  return v;
}

Verdict gradients() {
  Verdict v;
  spib::TrainingConfig c;
  c.encoder_hidden = {8, 8};
  c.decoder_hidden = {8};
  c.flow_layers = 4;
  c.flow_hidden = {6, 6};
  c.beta = 0.3;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (double tau : {0.0, 1.0, 2.0, 4.5}) {
      std::mt19937_64 rng(seed * 100 + static_cast<std::uint64_t>(tau * 10));
      spib::LatfModel m = spib::make_model(3, 4, c, 1, seed);
      m.flow = flow::FlowModel(2, c.flow_layers, c.flow_hidden, rng, flow::FlowInit::random);
      for (auto& l : m.encoder.mean_net.layers()) l.bias = testing::random_matrix(l.bias.size(), 1, rng, 0.2);
      for (auto& l : m.decoder.logits_net.layers()) l.bias = testing::random_matrix(l.bias.size(), 1, rng, 0.2);
      m.encoder.log_sigma = -0.4;
      m.tau = tau;
      spib::Batch b;
      b.inputs = testing::random_matrix(3, 16, rng);
      b.noise = testing::random_matrix(2, 16, rng);
      std::uniform_int_distribution<int> pick(0, 3);
      for (int j = 0; j < 16; ++j) {
        b.targets.push_back(pick(rng));
        b.temperatures.push_back(j % 2 ? 2.5 : 1.0);
      }
      spib::ModelGradients g = spib::ModelGradients::zeros_like(m);
      spib::latf_loss(m, b, &g);
      auto params = m.parameter_blocks();
      auto grads = g.blocks();
      for (auto& p : params) checked += p.size();
      worst = std::max(worst, testing::max_relative_error(params, grads, [&] { return spib::latf_loss(m, b).total; },
                                                          1e-5, 1e-5));
    }
  }
  v.check(worst < 1e-4, "total loss vs central differences over " + std::to_string(checked) +
                            " parameters (encoder, log sigma, decoder, flow; 16 seeded 16-sample batches), max rel error " + cmp(worst, "<", 1e-4));
  return v;
}

// ---------------------------------------------------------------------------
// Three-hole benchmark and pathways

enum class Channel { none, upper, lower, mixed };

std::string to_string(Channel c) {
  switch (c) {
    case Channel::upper: return "upper";
    case Channel::lower: return "lower";
    case Channel::mixed: return "both";
    default: return "none";
  }
}

// Side of the barrier taken by points in the saddle region between the basins.
Channel channel_of(const std::vector<Eigen::Vector2d>& points) {
  bool up = false, down = false;
  for (const auto& p : points) {
    if (std::abs(p.x()) >= 0.5) continue;
    (p.y() > sim::three_hole::kChannelSplitY ? up : down) = true;
  }
  if (up && down) return Channel::mixed;
  return up ? Channel::upper : down ? Channel::lower : Channel::none;
}

Channel path_channel(const analysis::InterpolatedPath& p, const Eigen::MatrixXd& xy) {
  const std::size_t n = p.frames.size();
  std::vector<Eigen::Vector2d> mid;
  for (std::size_t w = n / 3; w < n - n / 3; ++w) mid.push_back(xy.col(static_cast<Eigen::Index>(p.frames[w])));
  return channel_of(mid);
}

struct ThreeHoleRun {
  bool ok = false;
  io::RunConfig config;
  pipeline::FeatureSet features;
  spib::TauSelection selection;
  std::size_t tilted = 0;  // index into the tau grid of the model used for pathways
  std::size_t flat = 0;
};

Verdict three_hole_benchmark(ThreeHoleRun& run, int jobs) {
  Verdict v;
  run.config = io::load_config(std::string(LATF_CONFIG_DIR) + "/threehole.cfg");
  run.config.training.tau_grid = {0.0, 1.0, 2.0, 3.0};
  const auto& cfg = run.config;
  const auto trajs = pipeline::simulate(cfg, jobs);
  v.check(trajs.size() == 1 && trajs[0].frame_count() == 200000,
          "simulated " + std::to_string(trajs[0].frame_count()) + " frames at kT=" + fmt(cfg.simulation.kT));
  run.features = pipeline::featurize(cfg, trajs);
  const spib::PairedDataset ds = pipeline::training_dataset(cfg, run.features);
  const auto& tc = cfg.training.model;
  run.selection = spib::select_tau(ds, tc, cfg.training.tau_grid, jobs, true);
  const auto& sel = run.selection;
  const int folds = ds.n_folds;

  std::set<int> state_counts;
  for (int f = 0; f < folds; ++f) {
    state_counts.insert(sel.stage1_models[static_cast<std::size_t>(f)].n_states);
    for (const auto& m : sel.models[static_cast<std::size_t>(f)]) state_counts.insert(m.n_states);
  }
  std::string counts;
  for (int s : state_counts) counts += " " + std::to_string(s);
  v.check(state_counts == std::set<int>{3}, "state counts over all folds and tau:" + counts + " (want exactly 3)");

  std::vector<double> vamp_kl, vamp_gmrq, latf_gmrq, stage1_gmrq;
  const auto best = spib::pick_tau(sel.tau_grid, sel.mean_kl);
  const auto zero = static_cast<std::size_t>(std::find(sel.tau_grid.begin(), sel.tau_grid.end(), 0.0) - sel.tau_grid.begin());
  const auto& ev = cfg.evaluation;
  const std::vector<Eigen::MatrixXd> desc{run.features.descriptors.front()};
  auto gmrq = [&](const spib::LatfModel& m) {
    return eval::gmrq_score(analysis::assign_trajectories(m, desc), ev.msm_lag, ev.gmrq_folds).mean;
  };
  for (int f = 0; f < folds; ++f) {
    spib::PairedDataset copy = ds;
    spib::TrainingConfig fc = tc;
    fc.seed = spib::fold_seed(tc.seed, f);
    const auto vamp = spib::vampprior_baseline_train(copy, fc, f);
    vamp_kl.push_back(vamp.kl);
    vamp_gmrq.push_back(gmrq(vamp.model.as_latf()));
    latf_gmrq.push_back(gmrq(sel.models[static_cast<std::size_t>(f)][best]));
    stage1_gmrq.push_back(gmrq(sel.stage1_models[static_cast<std::size_t>(f)]));
    std::string row = "fold " + std::to_string(f) + " KL:";
    for (std::size_t i = 0; i < sel.tau_grid.size(); ++i) {
      for (const auto& c : sel.cells) {
        if (c.fold == f && c.tau == sel.tau_grid[i]) row += " tau" + fmt(c.tau) + "=" + fmt(c.kl);
      }
    }
    v.note(row + " vampprior=" + fmt(vamp.kl) + " (" + std::to_string(vamp.model.n_states) + " states)");
  }
  std::string means;
  for (std::size_t i = 0; i < sel.tau_grid.size(); ++i) {
    means += " tau" + fmt(sel.tau_grid[i]) + "=" + fmt(sel.mean_kl[i]) + "+-" + fmt(sel.spread_kl[i], 2);
  }
  v.note("mean KL:" + means + " vampprior=" + fmt(mean(vamp_kl)));
  v.check(best != zero && sel.mean_kl[best] < sel.mean_kl[zero],
          "best-tau LaTF (tau=" + fmt(sel.tau_grid[best]) + ") < tau=0 LaTF: " + cmp(sel.mean_kl[best], "<", sel.mean_kl[zero]));
  v.check(sel.mean_kl[zero] < mean(vamp_kl), "tau=0 LaTF < VampPrior: " + cmp(sel.mean_kl[zero], "<", mean(vamp_kl)));
  v.check(mean(latf_gmrq) >= mean(stage1_gmrq),
          "GMRQ LaTF labels >= stage-1 labels: " + cmp(mean(latf_gmrq), ">=", mean(stage1_gmrq)) +
              " (VampPrior labels " + fmt(mean(vamp_gmrq)) + ")");

  run.flat = zero;
  run.tilted = best != zero ? best : static_cast<std::size_t>(std::find(sel.tau_grid.begin(), sel.tau_grid.end(), 2.0) -
                                                              sel.tau_grid.begin());
  run.ok = true;
  return v;
}

Verdict pathways(const ThreeHoleRun& run) {
  Verdict v;
  const Eigen::MatrixXd& xy = run.features.descriptors.front();
  const auto& tilted = run.selection.models[0][run.tilted];
  const auto& flat = run.selection.models[0][run.flat];
  const int waypoints = run.config.evaluation.waypoints;
  v.note("fold-0 models: tilted tau=" + fmt(tilted.tau) + ", flat tau=" + fmt(flat.tau));

  const auto bp = analysis::basin_paths(tilted, xy, 1.0, waypoints);
  auto where = [&](std::size_t frame) {
    return "(" + fmt(xy(0, static_cast<Eigen::Index>(frame)), 3) + ", " + fmt(xy(1, static_cast<Eigen::Index>(frame)), 3) + ")";
  };
  v.note("endpoints: state " + std::to_string(bp.source_state) + " at " + where(bp.source_frame) + ", state " +
         std::to_string(bp.sink_state) + " at " + where(bp.sink_frame));
  std::set<Channel> tilted_channels;
  for (const auto& p : bp.paths) {
    if (p.name == "slerp") continue;
    const Channel c = path_channel(p, xy);
    tilted_channels.insert(c);
    v.note(p.name + " channel: " + to_string(c));
  }
  const std::set<Channel> both{Channel::upper, Channel::lower};
  v.check(tilted_channels == both, "the two angle-radius paths traverse distinct channels");

  const auto fp = analysis::basin_paths(flat, xy, 1.0, waypoints);
  Channel slerp = Channel::none;
  for (const auto& p : fp.paths) {
    if (p.name == "slerp") slerp = path_channel(p, xy);
  }
  v.check(slerp == Channel::upper || slerp == Channel::lower, "tau=0 slerp path stays in one channel: " + to_string(slerp));

  // Every extracted pathway, bundled by the channel it crosses.
  const auto& ev = run.config.evaluation;
  const auto mt = analysis::microstate_tpt(tilted, {xy}, ev.microstates, ev.msm_lag, 1 << 20, run.config.featurize.seed);
  std::map<Channel, double> bundle_flux;
  std::map<Channel, int> bundle_size;
  for (const auto& p : mt.tpt.pathways) {
    std::vector<Eigen::Vector2d> pts;
    for (int s : p.states) pts.push_back(mt.centroids.col(s));
    const Channel c = channel_of(pts);
    bundle_flux[c] += p.flux;
    ++bundle_size[c];
  }
  std::vector<std::pair<double, Channel>> ranked;
  for (const auto& [c, f] : bundle_flux) ranked.emplace_back(f, c);
  std::sort(ranked.rbegin(), ranked.rend());
  std::set<Channel> tpt_channels;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < 2) tpt_channels.insert(ranked[i].second);
    v.note("TPT bundle " + to_string(ranked[i].second) + ": " + std::to_string(bundle_size[ranked[i].second]) +
           " pathways, flux fraction " + fmt(ranked[i].first / mt.tpt.total_flux, 3));
  }
  v.note("pathways extracted: " + std::to_string(mt.tpt.pathway_count) + ", decomposed flux fraction " +
         fmt(mt.tpt.decomposed_flux / mt.tpt.total_flux, 3));
  v.check(tpt_channels == both, "the two largest TPT pathway bundles (100 microstates) are the two channels");
  v.check(tpt_channels == tilted_channels, "TPT channels match the tilted-prior paths");
  return v;
}

// ---------------------------------------------------------------------------
// LJ7 temperature transfer

Verdict lj7_transfer(int jobs) {
  Verdict v;
  io::RunConfig cfg = io::load_config(std::string(LATF_CONFIG_DIR) + "/lj7.cfg");
  cfg.training.tau_grid = {0.0, 1.0, 2.0, 3.0};
  const auto trajs = pipeline::simulate(cfg, jobs);
  std::string frames;
  for (const auto& t : trajs) frames += " T" + fmt(t.temperature) + ":" + std::to_string(t.frame_count());
  v.note("frames:" + frames);
  const auto features = pipeline::featurize(cfg, trajs);
  const spib::PairedDataset ds = pipeline::training_dataset(cfg, features);
  std::string tags;
  for (double t : ds.temperature_tags()) tags += " " + fmt(t);
  v.note("training tags:" + tags);
  const auto& tc = cfg.training.model;
  const auto sel = spib::select_tau(ds, tc, cfg.training.tau_grid, jobs, true);

  std::string means;
  for (std::size_t i = 0; i < sel.tau_grid.size(); ++i) {
    means += " tau" + fmt(sel.tau_grid[i]) + "=" + fmt(sel.mean_kl[i]) + "+-" + fmt(sel.spread_kl[i], 2);
  }
  v.note("validation KL:" + means);
  const std::size_t best = spib::pick_tau(sel.tau_grid, sel.mean_kl);
  const std::size_t zero = 0, two = 2;
  const double slack = std::max(sel.spread_kl[best], sel.spread_kl[two]);
  v.check(sel.tau_grid[best] != 0.0 && sel.mean_kl[best] < sel.mean_kl[zero],
          "tau=0 loses: best tau=" + fmt(sel.tau_grid[best]) + ", " + cmp(sel.mean_kl[best], "<", sel.mean_kl[zero]));
  v.check(best == two || (sel.tau_grid[best] != 0.0 && sel.mean_kl[two] - sel.mean_kl[best] <= slack),
          "selected tau is 2 or within fold spread of tau=2: |" + fmt(sel.mean_kl[two]) + " - " + fmt(sel.mean_kl[best]) +
              "| <= " + fmt(slack));

  // Unseen temperatures: mean over the fold models.
  const int folds = ds.n_folds;
  std::vector<double> kl_best(features.temperatures.size(), 0.0), kl_zero(features.temperatures.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const auto seed = mix_seed(tc.seed, 900 + static_cast<std::uint64_t>(f));
    const auto a = analysis::temperature_kl(cfg, sel.models[static_cast<std::size_t>(f)][best], features, seed);
    const auto b = analysis::temperature_kl(cfg, sel.models[static_cast<std::size_t>(f)][zero], features, seed);
    for (std::size_t i = 0; i < a.size(); ++i) {
      kl_best[i] += a[i].kl / folds;
      kl_zero[i] += b[i].kl / folds;
    }
  }
  std::string row;
  for (std::size_t i = 0; i < features.temperatures.size(); ++i) {
    row += " T" + fmt(features.temperatures[i]) + ":" + fmt(kl_best[i], 3) + "/" + fmt(kl_zero[i], 3);
  }
  v.note("KL to MD, selected tau / tau=0:" + row);
  for (double t : {0.3, 0.4}) {
    const int i = pipeline::find_temperature(features, t);
    v.check(i >= 0 && kl_best[static_cast<std::size_t>(i)] < kl_zero[static_cast<std::size_t>(i)],
            "unseen T=" + fmt(t) + ": " + cmp(kl_best[static_cast<std::size_t>(i)], "<", kl_zero[static_cast<std::size_t>(i)]));
  }

  // Backmapping onto training frames.
  std::vector<sim::LJ7Features> pool_features;
  std::vector<Eigen::MatrixXd> pool_parts;
  for (double t : cfg.training_temperatures()) {
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      if (!pipeline::same_temperature(trajs[k].temperature, t)) continue;
      const auto x = sim::lj7_features(trajs[k]);
      pool_features.insert(pool_features.end(), x.begin(), x.end());
      pool_parts.push_back(features.descriptors[k]);
    }
  }
  Eigen::Index total = 0;
  for (const auto& p : pool_parts) total += p.cols();
  Eigen::MatrixXd pool(pool_parts.front().rows(), total);
  for (Eigen::Index off = 0; const auto& p : pool_parts) {
    pool.middleCols(off, p.cols()) = p;
    off += p.cols();
  }
  const std::size_t n = cfg.evaluation.n_samples;
  std::vector<double> g2(trajs.size(), 0.0), g3(trajs.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const auto& m = sel.models[static_cast<std::size_t>(f)][best];
    const gen::NearestNeighborIndex index(m.encode_mean(pool));
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      const auto g = gen::generate(m, pipeline::temperature_tag(cfg, trajs[k].temperature), n,
                                   mix_seed(tc.seed, 1000 + 10 * static_cast<std::uint64_t>(f) + k));
      for (std::size_t j : index.nearest(g.latent)) {
        g2[k] += pool_features[j].mu2 / static_cast<double>(n * folds);
        g3[k] += pool_features[j].mu3 / static_cast<double>(n * folds);
      }
    }
  }
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto md = sim::lj7_features(trajs[k]);
    double m2 = 0.0, m3 = 0.0, h2 = 0.0, h3 = 0.0;
    for (std::size_t j = 0; j < md.size(); ++j) {
      m2 += md[j].mu2, m3 += md[j].mu3;
      if (j < md.size() / 2) h2 += md[j].mu2, h3 += md[j].mu3;
    }
    const double half = static_cast<double>(md.size() / 2), rest = static_cast<double>(md.size()) - half;
    const double split2 = std::abs(h2 / half - (m2 - h2) / rest) / std::abs(m2 / static_cast<double>(md.size()));
    const double split3 = std::abs(h3 / half - (m3 - h3) / rest) / std::abs(m3 / static_cast<double>(md.size()));
    m2 /= static_cast<double>(md.size());
    m3 /= static_cast<double>(md.size());
    v.note("T=" + fmt(trajs[k].temperature) + " MD first vs second half, relative difference: mu2^2 " + fmt(split2, 3) +
           ", mu3^3 " + fmt(split3, 3));
    const double e2 = std::abs(g2[k] - m2) / std::abs(m2), e3 = std::abs(g3[k] - m3) / std::abs(m3);
    v.check(e2 <= 0.1 && e3 <= 0.1, "T=" + fmt(trajs[k].temperature) + " backmapped mu2^2 " + fmt(g2[k]) + " vs MD " +
                                        fmt(m2) + " (rel " + fmt(e2, 3) + "), mu3^3 " + fmt(g3[k]) + " vs MD " + fmt(m3) +
                                        " (rel " + fmt(e3, 3) + "), tolerance 0.1");
  }
  return v;
}

Verdict exclusions() {
  Verdict v;
  v.note("excluded: Chignolin optimal tau=2.5 and RMSD distributions (no all-atom MD at desk scale)");
  v.note("excluded: RNA tetraloop melting curve (no replica-exchange RNA data)");
  v.note("their machinery is exercised above: multi-temperature training and tau selection (7),");
  v.note("backmapping (6, 7), populations and pathways (5, 6)");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-8"};
  std::vector<int> only;
  int jobs = 1;
  app.add_option("--only", only, "Run only these criteria (6 implies 5)");
  app.add_option("--jobs", jobs, "Worker threads for training")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (std::find(only.begin(), only.end(), 6) != only.end()) only.push_back(5);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  int broken = 0;
  auto run = [&](int id, const std::string& title, double budget, auto&& body) {
    if (!wanted(id)) return;
    const auto start = Clock::now();
    try {
      report(id, title, body(), start, budget);
    } catch (const std::exception& e) {
      Verdict v;
      v.check(false, std::string("could not be evaluated: ") + e.what());
      report(id, title, v, start, budget);
      ++broken;
    }
  };

  run(1, "math kernels: Kummer series, normalizers, completed square", 60, math_kernels);
  run(2, "flow bijectivity and Jacobian", 60, flow_properties);
  run(3, "Metropolis vs exact sampler", 120, samplers);
  run(4, "loss gradients vs finite differences", 300, gradients);

  ThreeHoleRun three;
  run(5, "three-hole benchmark: 3 states, KL ordering, GMRQ ordering", 1800, [&] { return three_hole_benchmark(three, jobs); });
  run(6, "three-hole pathways: two channels, slerp single channel, TPT agreement", 300, [&] {
      if (!three.ok) throw std::runtime_error("criterion 5 run did not complete");
    return pathways(three);
  });
  run(7, "LJ7 temperature transfer: tau selection, unseen-T KL, backmapped moments", 3600, [&] { return lj7_transfer(jobs); });
  run(8, "paper claims excluded at desk scale (documented)", 1, exclusions);
  return broken == 0 ? 0 : 1;
}

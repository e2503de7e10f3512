// latf: command-line driver for the simulate -> featurize -> train ->
// select-tau -> generate -> interpolate -> evaluate -> tpt -> report chain.

#include "latf/analysis.hpp"
#include "latf/hash.hpp"
#include "latf/io.hpp"
#include "latf/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace latf;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> temperature;
  std::optional<double> tau;
  std::optional<std::size_t> n_samples;
  std::optional<int> jobs;
};

// Thrown for problems the user can fix by changing inputs; maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Run {
  io::RunConfig config;
  fs::path dir;
  fs::path config_path;
  int jobs = 1;
};

Run prepare(const Options& o) {
  Run r;
  r.config_path = o.config;
  r.config = io::load_config(o.config);
  io::RunConfig& c = r.config;
  if (o.seed) {
    c.simulation.seed = *o.seed;
    c.featurize.seed = *o.seed;
    c.training.model.seed = *o.seed;
  }
  if (o.tau) c.training.tau = *o.tau;
  if (o.n_samples) c.evaluation.n_samples = *o.n_samples;
  if (o.jobs) c.training.jobs = *o.jobs;
  c.resolve();
  r.jobs = c.training.jobs;

  if (!o.out.empty()) {
    r.dir = o.out;
  } else {
    const char* env = std::getenv("LATF_OUTPUT_ROOT");
    const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
    r.dir = root / (c.output_dir.empty() ? r.config_path.stem() : fs::path(c.output_dir));
  }
  fs::create_directories(r.dir);
  return r;
}

std::string T(double v) { return io::format_double(v); }

double chosen_temperature(const Options& o, const Run& r) {
  return o.temperature ? *o.temperature : r.config.reference_temperature();
}

spib::LatfModel load_model(const Run& r, const std::string& name = "model.ckpt") {
  const fs::path p = r.dir / name;
  if (!fs::exists(p)) throw UsageError(p.string() + " not found; run `train` first");
  return io::load_checkpoint(p, r.config.training.model.latent_dim);
}

pipeline::FeatureSet load_features(const Run& r) {
  if (pipeline::list_trajectories(r.dir).empty()) {
    throw UsageError("no trajectories in " + r.dir.string() + "; run `simulate` first");
  }
  for (const auto& p : pipeline::list_trajectories(r.dir)) {
    const double t = sim::read_trajectory(p).temperature;
    if (!fs::exists(pipeline::features_path(r.dir, t))) {
      throw UsageError("no features for T=" + T(t) + " in " + r.dir.string() + "; run `featurize` first");
    }
  }
  return pipeline::read_features(r.dir);
}

// Pooled descriptors of the training temperatures, in ascending temperature order.
Eigen::MatrixXd training_pool(const Run& r, const pipeline::FeatureSet& f) {
  std::vector<int> idx;
  Eigen::Index total = 0;
  for (double t : r.config.training_temperatures()) {
    const int i = pipeline::find_temperature(f, t);
    if (i < 0) throw UsageError("training temperature " + T(t) + " has no features");
    idx.push_back(i);
    total += f.descriptors[static_cast<std::size_t>(i)].cols();
  }
  Eigen::MatrixXd pool(f.descriptors.front().rows(), total);
  Eigen::Index off = 0;
  for (int i : idx) {
    const auto& d = f.descriptors[static_cast<std::size_t>(i)];
    pool.middleCols(off, d.cols()) = d;
    off += d.cols();
  }
  return pool;
}

std::vector<std::string> cells(const Eigen::VectorXd& v) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(T(v(i)));
  return out;
}

std::vector<std::string> columns(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

template <class V, class... Rest>
std::vector<V> join(std::vector<V> a, const Rest&... rest) {
  (a.insert(a.end(), rest.begin(), rest.end()), ...);
  return a;
}

// --------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
  Run r = prepare(o);
  const auto trajs = pipeline::simulate(r.config, r.jobs);
  std::vector<fs::path> outputs;
  for (const auto& t : trajs) {
    const fs::path p = pipeline::trajectory_path(r.dir, t.temperature);
    sim::write_trajectory(p, t);
    outputs.push_back(p);
    std::cout << "T=" << T(t.temperature) << " frames=" << t.frame_count() << " rejected=" << t.rejected_frames
              << " -> " << p.string() << '\n';
  }
  io::write_manifest(r.dir, "simulate", r.config, {r.config_path}, outputs);
  return 0;
}

int cmd_featurize(const Options& o) {
  Run r = prepare(o);
  const auto inputs = pipeline::list_trajectories(r.dir);
  if (inputs.empty()) throw UsageError("no trajectories in " + r.dir.string() + "; run `simulate` first");
  const auto f = pipeline::featurize(r.config, pipeline::read_trajectories(r.dir));
  pipeline::write_features(r.dir, f);
  std::vector<fs::path> outputs;
  for (double t : f.temperatures) {
    outputs.push_back(pipeline::features_path(r.dir, t));
    outputs.push_back(pipeline::labels_path(r.dir, t));
  }
  std::cout << "descriptor=" << f.descriptor << " dim=" << f.descriptors.front().rows()
            << " initial_states=" << f.centroids.cols() << " trajectories=" << f.temperatures.size() << '\n';
  io::write_manifest(r.dir, "featurize", r.config, join(std::vector<fs::path>{r.config_path}, inputs), outputs);
  return 0;
}

void write_metrics(const fs::path& path, const std::vector<spib::EpochMetrics>& metrics) {
  io::CsvWriter csv(path, {"stage", "round", "epoch", "total", "reconstruction", "log_prior", "log_det",
                           "encoder_log_density", "validation_reconstruction", "n_states", "rejected_steps"});
  for (const auto& m : metrics) {
    csv.row({std::to_string(m.stage), std::to_string(m.round), std::to_string(m.epoch), T(m.train.total),
             T(m.train.reconstruction), T(m.train.log_prior), T(m.train.log_det), T(m.train.encoder_log_density),
             T(m.validation_reconstruction), std::to_string(m.n_states), std::to_string(m.rejected_steps)});
  }
}

int cmd_train(const Options& o) {
  Run r = prepare(o);
  const auto f = load_features(r);
  spib::PairedDataset ds = pipeline::training_dataset(r.config, f);
  const auto& tc = r.config.training.model;
  auto s1 = spib::train_stage1(ds, tc);
  auto s2 = spib::train_stage2(s1.model, ds, tc, r.config.training.tau);
  const fs::path stage1 = r.dir / "stage1.ckpt", model = r.dir / "model.ckpt", metrics = r.dir / "training_metrics.csv";
  io::save_checkpoint(stage1, s1.model);
  io::save_checkpoint(model, s2.model);
  auto all = s1.metrics;
  all.insert(all.end(), s2.metrics.begin(), s2.metrics.end());
  write_metrics(metrics, all);
  std::vector<fs::path> outputs{stage1, model, metrics};
  for (std::size_t i = 0; i < f.temperatures.size(); ++i) {
    const fs::path p = r.dir / ("states_T" + T(f.temperatures[i]) + ".txt");
    io::write_labels(p, s2.model.assign_states(f.descriptors[i]));
    outputs.push_back(p);
  }
  std::cout << "states=" << s2.model.n_states << " tau=" << T(s2.model.tau) << " sigma=" << T(s2.model.encoder.sigma())
            << " relabel_rounds=" << s1.label_change_trace.size() << '\n';
  std::vector<fs::path> inputs{r.config_path};
  for (double t : f.temperatures) inputs.push_back(pipeline::features_path(r.dir, t));
  io::write_manifest(r.dir, "train", r.config, inputs, outputs);
  return 0;
}

int cmd_select_tau(const Options& o) {
  Run r = prepare(o);
  const auto f = load_features(r);
  const spib::PairedDataset ds = pipeline::training_dataset(r.config, f);
  const auto& tc = r.config.training.model;
  const auto sel = spib::select_tau(ds, tc, r.config.training.tau_grid, r.jobs);

  const fs::path cells_path = r.dir / "tau_cells.csv", summary = r.dir / "tau_summary.csv",
                 baselines = r.dir / "baselines.csv", best = r.dir / "best_tau.txt";
  const auto tags = ds.temperature_tags();
  {
    std::vector<std::string> kl_cols;
    for (double t : tags) kl_cols.push_back("kl_tag" + T(t));
    io::CsvWriter csv(cells_path, join(std::vector<std::string>{"tau", "fold", "kl", "validation_reconstruction"}, kl_cols));
    for (const auto& c : sel.cells) {
      std::vector<std::string> row{T(c.tau), std::to_string(c.fold), T(c.kl), T(c.validation_reconstruction)};
      for (double k : c.kl_per_temperature) row.push_back(T(k));
      csv.row(row);
    }
  }
  {
    io::CsvWriter csv(summary, {"tau", "mean_kl", "spread_kl"});
    for (std::size_t i = 0; i < sel.tau_grid.size(); ++i) {
      csv.row({T(sel.tau_grid[i]), T(sel.mean_kl[i]), T(sel.spread_kl[i])});
      std::cout << "tau=" << T(sel.tau_grid[i]) << " kl=" << T(sel.mean_kl[i]) << " +- " << T(sel.spread_kl[i]) << '\n';
    }
  }
  std::ofstream(best) << T(sel.best_tau) << '\n';
  std::cout << "best_tau=" << T(sel.best_tau) << '\n';
  {
    io::CsvWriter csv(baselines, {"fold", "stage1_kl", "vampprior_kl", "vampprior_states"});
    for (int fold = 0; fold < ds.n_folds; ++fold) {
      spib::PairedDataset copy = ds;
      spib::TrainingConfig fc = tc;
      fc.seed = spib::fold_seed(tc.seed, fold);
      const std::string s1 = T(sel.stage1_kl[static_cast<std::size_t>(fold)]);
      try {
        const auto v = spib::vampprior_baseline_train(copy, fc, fold);
        csv.row({std::to_string(fold), s1, T(v.kl), std::to_string(v.model.n_states)});
        std::cout << "fold=" << fold << " stage1_kl=" << s1 << " vampprior_kl=" << T(v.kl) << '\n';
      } catch (const std::runtime_error& e) {
        csv.row({std::to_string(fold), s1, "nan", "0"});
        std::cout << "fold=" << fold << " stage1_kl=" << s1 << " vampprior failed: " << e.what() << '\n';
      }
    }
  }
  io::write_manifest(r.dir, "select-tau", r.config, {r.config_path}, {cells_path, summary, baselines, best});
  return 0;
}

int cmd_generate(const Options& o) {
  Run r = prepare(o);
  const auto model = load_model(r);
  const double t = chosen_temperature(o, r);
  const double tag = pipeline::temperature_tag(r.config, t);
  const auto g = gen::generate(model, tag, r.config.evaluation.n_samples,
                               mix_seed(r.config.training.model.seed, fnv1a64("generate:" + T(t))));
  const fs::path ensemble = r.dir / ("ensemble_T" + T(t) + ".csv"), fes = r.dir / ("fes_T" + T(t) + ".csv");
  {
    const auto d = g.latent.rows();
    io::CsvWriter csv(ensemble, join(columns("z", d), columns("prior", d), std::vector<std::string>{"state", "log_likelihood"}));
    for (Eigen::Index i = 0; i < g.latent.cols(); ++i) {
      csv.row(join(cells(g.latent.col(i)), cells(g.prior_points.col(i)),
                   std::vector<std::string>{std::to_string(g.states[static_cast<std::size_t>(i)]), T(g.log_likelihood(i))}));
    }
  }
  std::vector<fs::path> outputs{ensemble};
  if (g.latent.rows() == 2) {
    const auto grid = eval::HistogramGrid::covering(g.latent, r.config.evaluation.bins);
    std::ofstream(fes) << eval::histogram_csv(eval::histogram2d(g.latent, grid, r.config.evaluation.alpha));
    outputs.push_back(fes);
  }
  std::cout << "T=" << T(t) << " tag=" << T(tag) << " samples=" << g.latent.cols() << " -> " << ensemble.string() << '\n';
  io::write_manifest(r.dir, "generate", r.config, {r.config_path, r.dir / "model.ckpt"}, outputs);
  return 0;
}

int cmd_interpolate(const Options& o) {
  Run r = prepare(o);
  const auto model = load_model(r);
  const auto f = load_features(r);
  const double t = chosen_temperature(o, r);
  const Eigen::MatrixXd pool = training_pool(r, f);
  const auto bp = analysis::basin_paths(model, pool, pipeline::temperature_tag(r.config, t), r.config.evaluation.waypoints);
  const fs::path out = r.dir / "paths.csv";
  const auto d = model.latent_dim;
  io::CsvWriter csv(out, join(std::vector<std::string>{"path", "waypoint"}, columns("prior", d), columns("z", d),
                              std::vector<std::string>{"frame"}, columns("x", pool.rows())));
  for (const auto& p : bp.paths) {
    for (Eigen::Index w = 0; w < p.prior_points.cols(); ++w) {
      const std::size_t frame = p.frames[static_cast<std::size_t>(w)];
      csv.row(join(std::vector<std::string>{p.name, std::to_string(w)}, cells(p.prior_points.col(w)), cells(p.latent.col(w)),
                   std::vector<std::string>{std::to_string(frame)}, cells(pool.col(static_cast<Eigen::Index>(frame)))));
    }
  }
  std::cout << "source_state=" << bp.source_state << " sink_state=" << bp.sink_state << " paths=" << bp.paths.size()
            << " -> " << out.string() << '\n';
  io::write_manifest(r.dir, "interpolate", r.config, {r.config_path, r.dir / "model.ckpt"}, {out});
  return 0;
}

int cmd_evaluate(const Options& o) {
  Run r = prepare(o);
  const auto model = load_model(r);
  const auto f = load_features(r);
  const auto& ev = r.config.evaluation;
  const std::uint64_t seed = mix_seed(r.config.training.model.seed, fnv1a64("evaluate"));
  std::vector<fs::path> outputs;

  const fs::path kl_path = r.dir / "evaluation_kl.csv";
  {
    io::CsvWriter csv(kl_path, {"temperature", "tag", "frames", "kl"});
    for (const auto& k : analysis::temperature_kl(r.config, model, f, seed)) {
      csv.row({T(k.temperature), T(k.tag), std::to_string(k.frames), T(k.kl)});
      std::cout << "T=" << T(k.temperature) << " kl=" << T(k.kl) << '\n';
    }
    outputs.push_back(kl_path);
  }

  std::vector<Eigen::MatrixXd> train_desc;
  for (double t : r.config.training_temperatures()) {
    train_desc.push_back(f.descriptors[static_cast<std::size_t>(pipeline::find_temperature(f, t))]);
  }
  const fs::path gmrq_path = r.dir / "gmrq.csv";
  {
    io::CsvWriter csv(gmrq_path, {"labels", "states", "mean", "spread"});
    auto score = [&](const std::string& name, const spib::LatfModel& m) {
      const auto g = eval::gmrq_score(analysis::assign_trajectories(m, train_desc), ev.msm_lag, ev.gmrq_folds);
      csv.row({name, std::to_string(m.n_states), T(g.mean), T(g.spread)});
      std::cout << "gmrq[" << name << "]=" << T(g.mean) << " +- " << T(g.spread) << '\n';
    };
    score("latf", model);
    if (fs::exists(r.dir / "stage1.ckpt")) score("stage1", load_model(r, "stage1.ckpt"));
    outputs.push_back(gmrq_path);
  }

  const fs::path pop_path = r.dir / "populations.csv";
  {
    io::CsvWriter csv(pop_path, {"temperature", "state", "mean", "stddev"});
    for (std::size_t i = 0; i < f.temperatures.size(); ++i) {
      const auto p = eval::bootstrap_populations(model.assign_states(f.descriptors[i]), model.n_states, 20, 100, seed);
      for (int s = 0; s < model.n_states; ++s) csv.row({T(f.temperatures[i]), std::to_string(s), T(p.mean(s)), T(p.stddev(s))});
    }
    outputs.push_back(pop_path);
  }

  if (r.config.system.kind == "lj7") {
    // Generated ensembles backmapped to training frames, compared with MD moment means.
    const fs::path mom_path = r.dir / "moments.csv";
    const auto trajs = pipeline::read_trajectories(r.dir);
    const Eigen::MatrixXd pool = training_pool(r, f);
    std::vector<sim::LJ7Features> pool_features;
    for (double t : r.config.training_temperatures()) {
      for (const auto& tr : trajs) {
        if (pipeline::same_temperature(tr.temperature, t)) {
          auto v = sim::lj7_features(tr);
          pool_features.insert(pool_features.end(), v.begin(), v.end());
        }
      }
    }
    if (pool_features.size() != static_cast<std::size_t>(pool.cols())) {
      throw std::runtime_error("evaluate: trajectory and feature frame counts differ");
    }
    gen::NearestNeighborIndex index(model.encode_mean(pool));
    io::CsvWriter csv(mom_path, {"temperature", "md_mu2", "md_mu3", "generated_mu2", "generated_mu3"});
    for (const auto& tr : trajs) {
      double md2 = 0, md3 = 0;
      const auto feats = sim::lj7_features(tr);
      for (const auto& x : feats) md2 += x.mu2, md3 += x.mu3;
      md2 /= static_cast<double>(feats.size());
      md3 /= static_cast<double>(feats.size());
      const auto g = gen::generate(model, pipeline::temperature_tag(r.config, tr.temperature), ev.n_samples,
                                   mix_seed(seed, fnv1a64("backmap:" + T(tr.temperature))));
      double g2 = 0, g3 = 0;
      for (std::size_t k : index.nearest(g.latent)) g2 += pool_features[k].mu2, g3 += pool_features[k].mu3;
      g2 /= static_cast<double>(g.latent.cols());
      g3 /= static_cast<double>(g.latent.cols());
      csv.row({T(tr.temperature), T(md2), T(md3), T(g2), T(g3)});
      std::cout << "T=" << T(tr.temperature) << " mu2 md=" << T(md2) << " gen=" << T(g2) << " mu3 md=" << T(md3)
                << " gen=" << T(g3) << '\n';
    }
    outputs.push_back(mom_path);
  }
  io::write_manifest(r.dir, "evaluate", r.config, {r.config_path, r.dir / "model.ckpt"}, outputs);
  return 0;
}

int cmd_tpt(const Options& o) {
  Run r = prepare(o);
  const auto model = load_model(r);
  const auto f = load_features(r);
  const auto& ev = r.config.evaluation;
  std::vector<Eigen::MatrixXd> desc;
  for (double t : r.config.training_temperatures()) {
    desc.push_back(f.descriptors[static_cast<std::size_t>(pipeline::find_temperature(f, t))]);
  }
  const auto mt = analysis::microstate_tpt(model, desc, ev.microstates, ev.msm_lag, ev.top_pathways, r.config.featurize.seed);
  const fs::path micro = r.dir / "microstates.csv", paths = r.dir / "tpt_pathways.csv";
  {
    io::CsvWriter csv(micro, join(std::vector<std::string>{"microstate", "macrostate", "active", "forward_committor"},
                                  columns("c", mt.centroids.rows())));
    for (Eigen::Index m = 0; m < mt.centroids.cols(); ++m) {
      const int a = mt.msm.index_of(static_cast<int>(m));
      csv.row(join(std::vector<std::string>{std::to_string(m), std::to_string(mt.macrostate[static_cast<std::size_t>(m)]),
                                            a >= 0 ? "1" : "0", a >= 0 ? T(mt.tpt.forward_committor(a)) : ""},
                   cells(mt.centroids.col(m))));
    }
  }
  {
    io::CsvWriter csv(paths, {"rank", "flux", "fraction", "microstates"});
    for (std::size_t i = 0; i < mt.tpt.pathways.size(); ++i) {
      const auto& p = mt.tpt.pathways[i];
      std::ostringstream s;
      for (std::size_t k = 0; k < p.states.size(); ++k) s << (k ? " " : "") << p.states[k];
      csv.row({std::to_string(i + 1), T(p.flux), T(p.flux / mt.tpt.total_flux), s.str()});
    }
  }
  std::cout << "source_state=" << mt.source_state << " sink_state=" << mt.sink_state << " total_flux=" << T(mt.tpt.total_flux)
            << " pathways=" << mt.tpt.pathway_count << '\n';
  io::write_manifest(r.dir, "tpt", r.config, {r.config_path, r.dir / "model.ckpt"}, {micro, paths});
  return 0;
}

int cmd_report(const Options& o) {
  Run r = prepare(o);
  const std::vector<std::string> tables{"tau_summary.csv", "baselines.csv", "evaluation_kl.csv", "gmrq.csv",
                                        "moments.csv", "tpt_pathways.csv"};
  std::ostringstream md;
  md << "# Run report: " << r.dir.string() << "\n\nconfig hash " << hex64(r.config.hash()) << "\n";
  std::vector<fs::path> inputs;
  for (const auto& name : tables) {
    const fs::path p = r.dir / name;
    if (!fs::exists(p)) continue;
    inputs.push_back(p);
    md << "\n## " << name << "\n\n";
    std::ifstream in(p);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      std::string row = "| ";
      for (char c : line) row += c == ',' ? std::string(" | ") : std::string(1, c);
      md << row << " |\n";
      if (header) {
        md << "|" ;
        for (std::size_t k = 0, n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; k < n; ++k) md << "---|";
        md << "\n";
        header = false;
      }
    }
  }
  if (inputs.empty()) throw UsageError("nothing to report in " + r.dir.string());
  const fs::path out = r.dir / "report.md";
  std::ofstream(out) << md.str();
  std::cout << md.str();
  io::write_manifest(r.dir, "report", r.config, inputs, {out});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent thermodynamic flows: simulation, training, generation and analysis"};
  app.require_subcommand(1);
  Options o;
  using Handler = int (*)(const Options&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"simulate", "Run Langevin dynamics and write trajectories", cmd_simulate},
      {"featurize", "Compute descriptors and initial k-means labels", cmd_featurize},
      {"train", "Train stage 1 (SPIB) and stage 2 (flow) at the configured tau", cmd_train},
      {"select-tau", "Cross-validate the tau grid and the VampPrior baseline", cmd_select_tau},
      {"generate", "Sample the trained model at a temperature", cmd_generate},
      {"interpolate", "Prior-space paths between the two dominant basins", cmd_interpolate},
      {"evaluate", "KL, GMRQ, populations (and LJ7 moments) of the trained model", cmd_evaluate},
      {"tpt", "Microstate MSM and transition path theory", cmd_tpt},
      {"report", "Collect result tables into report.md", cmd_report},
  };
  Handler chosen = nullptr;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override every seed in the configuration");
    sub->add_option("--out", o.out, "Run directory (default $LATF_OUTPUT_ROOT/<config>)");
    sub->add_option("--temperature", o.temperature, "Temperature (generate, interpolate)");
    sub->add_option("--tau", o.tau, "Tilt parameter (train)");
    sub->add_option("--n-samples", o.n_samples, "Generated samples per temperature");
    sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->callback([&chosen, fn = fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    return chosen(o);
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
}

#include "latf/analysis.hpp"

#include "latf/hash.hpp"
#include "latf/systems.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace latf::analysis {

std::vector<TemperatureKl> temperature_kl(const io::RunConfig& config, const spib::LatfModel& model,
                                          const pipeline::FeatureSet& features, std::uint64_t seed) {
  std::vector<TemperatureKl> out;
  for (std::size_t i = 0; i < features.temperatures.size(); ++i) {
    const double t = features.temperatures[i];
    const double tag = pipeline::temperature_tag(config, t);
    spib::PairedDataset one = spib::pair_dataset({{features.descriptors[i], features.labels[i], tag}}, 0, 1);
    const auto frames = one.frames();
    const double kl = spib::generation_kl(model, one, frames, config.training.model,
                                          mix_seed(seed, fnv1a64(io::format_double(t))))[0];
    out.push_back({t, tag, frames.size(), kl});
  }
  return out;
}

std::vector<std::vector<int>> assign_trajectories(const spib::LatfModel& model,
                                                  const std::vector<Eigen::MatrixXd>& descriptors) {
  std::vector<std::vector<int>> out;
  out.reserve(descriptors.size());
  for (const auto& d : descriptors) out.push_back(model.assign_states(d));
  return out;
}

std::pair<int, int> dominant_states(const std::vector<std::vector<int>>& labels, int n_states) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(n_states, 0)), 0);
  for (const auto& series : labels) {
    for (int s : series) {
      if (s >= 0 && s < n_states) ++counts[static_cast<std::size_t>(s)];
    }
  }
  std::vector<int> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  if (order.size() < 2 || counts[static_cast<std::size_t>(order[1])] == 0) {
    throw std::runtime_error("dominant_states: fewer than two populated states");
  }
  return {order[0], order[1]};
}

BasinPaths basin_paths(const spib::LatfModel& model, const Eigen::MatrixXd& descriptors, double temperature_tag,
                       int waypoints) {
  BasinPaths out;
  std::tie(out.source_state, out.sink_state) = dominant_states({model.assign_states(descriptors)}, model.n_states);
  const auto reps = gen::most_likely_per_state(model, descriptors, temperature_tag);
  auto frame_of = [&](int state) {
    for (const auto& r : reps) {
      if (r.state == state && r.frame) return *r.frame;
    }
    throw std::runtime_error("basin_paths: no frame decodes to state " + std::to_string(state));
  };
  out.source_frame = frame_of(out.source_state);
  out.sink_frame = frame_of(out.sink_state);

  const Eigen::MatrixXd encoded = model.encode_mean(descriptors);
  Eigen::MatrixXd ends(encoded.rows(), 2);
  ends.col(0) = encoded.col(static_cast<Eigen::Index>(out.source_frame));
  ends.col(1) = encoded.col(static_cast<Eigen::Index>(out.sink_frame));
  const Eigen::MatrixXd prior_ends = model.to_prior_space(ends).points;

  struct Variant {
    const char* name;
    gen::Interpolation kind;
    gen::Arc arc;
  };
  const Variant variants[] = {
      {"angle_radius_shorter", gen::Interpolation::angle_radius, gen::Arc::shorter},
      {"angle_radius_longer", gen::Interpolation::angle_radius, gen::Arc::longer},
      {"slerp", gen::Interpolation::slerp, gen::Arc::shorter},
  };
  gen::NearestNeighborIndex index(encoded);
  for (const auto& v : variants) {
    if (v.kind == gen::Interpolation::angle_radius && model.latent_dim != 2) continue;
    InterpolatedPath p;
    p.name = v.name;
    p.prior_points = gen::interpolate_path({prior_ends.col(0), prior_ends.col(1), waypoints, v.kind, v.arc});
    p.latent = gen::map_path_to_latent(model, p.prior_points);
    p.frames = index.nearest(p.latent);
    out.paths.push_back(std::move(p));
  }
  return out;
}

MicrostateTpt microstate_tpt(const spib::LatfModel& model, const std::vector<Eigen::MatrixXd>& descriptors,
                             int microstates, int lag, int top_k, std::uint64_t seed) {
  if (descriptors.empty()) throw std::invalid_argument("microstate_tpt: no trajectories");
  Eigen::Index total = 0;
  for (const auto& d : descriptors) total += d.cols();
  Eigen::MatrixXd pooled(descriptors.front().rows(), total);
  Eigen::Index offset = 0;
  for (const auto& d : descriptors) {
    pooled.middleCols(offset, d.cols()) = d;
    offset += d.cols();
  }

  MicrostateTpt out;
  sim::KMeansResult km = sim::kmeans(pooled, microstates, seed);
  out.centroids = km.centroids;
  const auto macro = assign_trajectories(model, descriptors);
  std::tie(out.source_state, out.sink_state) = dominant_states(macro, model.n_states);

  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(microstates, model.n_states);
  offset = 0;
  for (std::size_t t = 0; t < descriptors.size(); ++t) {
    const auto n = static_cast<std::size_t>(descriptors[t].cols());
    std::vector<int> series(km.labels.begin() + offset, km.labels.begin() + offset + static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) ++votes(series[i], macro[t][i]);
    out.microstates.push_back(std::move(series));
    offset += static_cast<Eigen::Index>(n);
  }
  out.macrostate.assign(static_cast<std::size_t>(microstates), -1);
  for (int m = 0; m < microstates; ++m) {
    Eigen::Index best = 0;
    if (votes.row(m).maxCoeff(&best) > 0) out.macrostate[static_cast<std::size_t>(m)] = static_cast<int>(best);
  }

  out.msm = eval::build_msm(out.microstates, lag);
  std::vector<int> source, sink;
  for (int m = 0; m < microstates; ++m) {
    if (out.msm.index_of(m) < 0) continue;
    if (out.macrostate[static_cast<std::size_t>(m)] == out.source_state) source.push_back(m);
    if (out.macrostate[static_cast<std::size_t>(m)] == out.sink_state) sink.push_back(m);
  }
  if (source.empty() || sink.empty()) {
    throw std::runtime_error("microstate_tpt: source or sink state has no active microstate");
  }
  out.tpt = eval::tpt_paths(out.msm, source, sink, top_k);
  return out;
}

}  // namespace latf::analysis

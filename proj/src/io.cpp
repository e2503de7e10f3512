#include "latf/io.hpp"

#include "binary_io.hpp"
#include "latf/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace latf::io {

ConfigError::ConfigError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& v) {
  const std::string s = trim(v);
  if (s.empty()) throw std::invalid_argument("expected a number, got an empty value");
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(out)) throw std::invalid_argument("expected a finite number, got '" + s + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& v) {
  const std::string s = trim(v);
  Int out{};
  const char* end = s.data() + s.size();
  // Accept scientific shorthand such as 1e7 when it denotes an integer.
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc() && ptr == end) return out;
  const double d = parse_double(s);
  if (d != std::floor(d) || std::abs(d) > 9.0e18) throw std::invalid_argument("expected an integer, got '" + s + "'");
  if constexpr (std::is_unsigned_v<Int>) {
    if (d < 0) throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<Int>(d);
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(parse_int<int>(item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, double>) {
      out += format_double(v[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += v[i];
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Entry {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LATF_DOUBLE(sec, name, field)                                                  \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }, \
        [](const RunConfig& c) { return format_double(c.field); }}
#define LATF_INT(sec, name, field, type)                                                    \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_int<type>(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define LATF_OPT_DOUBLE(sec, name, field)                                              \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }, \
        [](const RunConfig& c) { return c.field ? format_double(*c.field) : std::string(); }}
#define LATF_OPT_INT(sec, name, field)                                                          \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_int<std::int64_t>(v); }, \
        [](const RunConfig& c) { return c.field ? std::to_string(*c.field) : std::string(); }}
#define LATF_DOUBLES(sec, name, field)                                                      \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_double_list(v); }, \
        [](const RunConfig& c) { return join(c.field); }}
#define LATF_INTS(sec, name, field)                                                      \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = parse_int_list(v); }, \
        [](const RunConfig& c) { return join(c.field); }}
#define LATF_STRING(sec, name, field)                                             \
  Entry{sec, name, [](RunConfig& c, const std::string& v) { c.field = trim(v); }, \
        [](const RunConfig& c) { return c.field; }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      LATF_STRING("system", "kind", system.kind),
      Entry{"system", "trajectories",
            [](RunConfig& c, const std::string& v) { c.system.trajectories = split_list(v); },
            [](const RunConfig& c) { return join(c.system.trajectories); }},

      LATF_INT("simulation", "seed", simulation.seed, std::uint64_t),
      LATF_DOUBLE("simulation", "kT", simulation.kT),
      LATF_DOUBLES("simulation", "temperatures", simulation.temperatures),
      LATF_OPT_DOUBLE("simulation", "friction", simulation.friction),
      LATF_OPT_DOUBLE("simulation", "timestep", simulation.timestep),
      LATF_OPT_INT("simulation", "n_steps", simulation.n_steps),
      LATF_OPT_INT("simulation", "stride", simulation.stride),
      LATF_DOUBLE("simulation", "confinement_radius", simulation.confinement_radius),
      LATF_DOUBLE("simulation", "confinement_k", simulation.confinement_k),
      LATF_DOUBLE("simulation", "evaporation_radius", simulation.evaporation_radius),

      LATF_STRING("featurize", "descriptor", featurize.descriptor),
      LATF_INT("featurize", "initial_states", featurize.initial_states, int),
      LATF_INT("featurize", "seed", featurize.seed, std::uint64_t),

      LATF_DOUBLE("training", "beta", training.model.beta),
      LATF_INT("training", "latent_dim", training.model.latent_dim, int),
      LATF_INTS("training", "encoder_hidden", training.model.encoder_hidden),
      LATF_INTS("training", "decoder_hidden", training.model.decoder_hidden),
      LATF_INT("training", "flow_layers", training.model.flow_layers, int),
      LATF_INTS("training", "flow_hidden", training.model.flow_hidden),
      LATF_INT("training", "batch_size", training.model.batch_size, int),
      LATF_DOUBLE("training", "learning_rate", training.model.learning_rate),
      LATF_INT("training", "stage1_epochs_per_round", training.model.stage1_epochs_per_round, int),
      LATF_INT("training", "max_rounds", training.model.max_rounds, int),
      LATF_DOUBLE("training", "relabel_threshold", training.model.relabel_threshold),
      LATF_DOUBLE("training", "stage1_lr_decay", training.model.stage1_lr_decay),
      LATF_INT("training", "stage2_epochs", training.model.stage2_epochs, int),
      LATF_INT("training", "seed", training.model.seed, std::uint64_t),
      LATF_INT("training", "vamp_pseudo_inputs", training.model.vamp_pseudo_inputs, int),
      LATF_INT("training", "vamp_epochs_per_round", training.model.vamp_epochs_per_round, int),
      LATF_INT("training", "kl_samples", training.model.kl_samples, std::size_t),
      LATF_INT("training", "lag", training.lag, int),
      LATF_INT("training", "folds", training.folds, int),
      LATF_DOUBLE("training", "tau", training.tau),
      LATF_DOUBLES("training", "tau_grid", training.tau_grid),
      LATF_DOUBLES("training", "train_temperatures", training.train_temperatures),
      LATF_INT("training", "jobs", training.jobs, int),

      LATF_INT("evaluation", "bins", evaluation.bins, int),
      LATF_DOUBLE("evaluation", "alpha", evaluation.alpha),
      LATF_INT("evaluation", "msm_lag", evaluation.msm_lag, int),
      LATF_INT("evaluation", "gmrq_folds", evaluation.gmrq_folds, int),
      LATF_INT("evaluation", "microstates", evaluation.microstates, int),
      LATF_INT("evaluation", "waypoints", evaluation.waypoints, int),
      LATF_INT("evaluation", "top_pathways", evaluation.top_pathways, int),
      LATF_INT("evaluation", "n_samples", evaluation.n_samples, std::size_t),

      LATF_STRING("output", "dir", output_dir),
  };
  return entries;
}

#undef LATF_DOUBLE
#undef LATF_INT
#undef LATF_OPT_DOUBLE
#undef LATF_OPT_INT
#undef LATF_DOUBLES
#undef LATF_INTS
#undef LATF_STRING

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(0, message);
}

}  // namespace

void RunConfig::resolve() {
  check(system.kind == "three-hole" || system.kind == "lj7" || system.kind == "external",
        "[system] kind must be three-hole, lj7 or external (got '" + system.kind + "')");
  if (system.kind == "three-hole") {
    if (!simulation.friction) simulation.friction = 0.5;
    if (!simulation.timestep) simulation.timestep = 1e-3;
    if (!simulation.n_steps) simulation.n_steps = 50'000'000;
    if (!simulation.stride) simulation.stride = 50;
    if (featurize.descriptor.empty()) featurize.descriptor = "xy";
    check(simulation.kT > 0.0, "[simulation] kT must be positive");
  } else if (system.kind == "lj7") {
    if (!simulation.friction) simulation.friction = 0.1;
    if (!simulation.timestep) simulation.timestep = 0.005;
    if (!simulation.n_steps) simulation.n_steps = 10'000'000;
    if (!simulation.stride) simulation.stride = 100;
    if (simulation.temperatures.empty()) simulation.temperatures = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    if (featurize.descriptor.empty()) featurize.descriptor = "coordination";
    for (double t : simulation.temperatures) check(t > 0.0, "[simulation] temperatures must be positive");
  } else {
    check(!system.trajectories.empty(), "[system] trajectories is required for external systems");
    if (!simulation.friction) simulation.friction = 1.0;
    if (!simulation.timestep) simulation.timestep = 1e-3;
    if (!simulation.n_steps) simulation.n_steps = 0;
    if (!simulation.stride) simulation.stride = 1;
    if (featurize.descriptor.empty()) featurize.descriptor = "raw";
  }
  static const std::set<std::string> descriptors{"xy", "coordination", "moments", "raw"};
  check(descriptors.count(featurize.descriptor) == 1,
        "[featurize] descriptor must be xy, coordination, moments or raw (got '" + featurize.descriptor + "')");
  check(*simulation.friction > 0.0, "[simulation] friction must be positive");
  check(*simulation.timestep > 0.0, "[simulation] timestep must be positive");
  check(*simulation.stride >= 1, "[simulation] stride must be >= 1");
  check(*simulation.n_steps >= 0, "[simulation] n_steps must be >= 0");
  check(featurize.initial_states >= 2, "[featurize] initial_states must be >= 2");
  check(training.lag >= 0, "[training] lag must be >= 0");
  check(training.folds >= 1, "[training] folds must be >= 1");
  check(training.tau >= 0.0, "[training] tau must be >= 0");
  for (double t : training.tau_grid) check(t >= 0.0, "[training] tau_grid values must be >= 0");
  check(training.model.beta >= 0.0, "[training] beta must be >= 0");
  check(training.model.latent_dim >= 1, "[training] latent_dim must be >= 1");
  check(training.model.batch_size >= 1, "[training] batch_size must be >= 1");
  check(training.model.learning_rate > 0.0, "[training] learning_rate must be positive");
  check(training.jobs >= 1, "[training] jobs must be >= 1");
  for (double t : training.train_temperatures) check(t > 0.0, "[training] train_temperatures must be positive");
  check(evaluation.bins >= 1, "[evaluation] bins must be >= 1");
  check(evaluation.alpha >= 0.0, "[evaluation] alpha must be >= 0");
  check(evaluation.msm_lag >= 1, "[evaluation] msm_lag must be >= 1");
  check(evaluation.gmrq_folds >= 2, "[evaluation] gmrq_folds must be >= 2");
  check(evaluation.microstates >= 2, "[evaluation] microstates must be >= 2");
  check(evaluation.waypoints >= 2, "[evaluation] waypoints must be >= 2");
  training.model.kl_bins = evaluation.bins;
  training.model.kl_alpha = evaluation.alpha;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  std::string section;
  for (const Entry& e : registry()) {
    if (e.section != section) {
      if (!section.empty()) out << '\n';
      section = e.section;
      out << '[' << section << "]\n";
    }
    out << e.key << " = " << e.get(*this) << '\n';
  }
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(resolved_text()); }

std::vector<double> RunConfig::simulated_temperatures() const {
  if (system.kind == "three-hole") return {simulation.kT};
  if (system.kind == "lj7") return simulation.temperatures;
  return {};
}

std::vector<double> RunConfig::training_temperatures() const {
  return training.train_temperatures.empty() ? simulated_temperatures() : training.train_temperatures;
}

double RunConfig::reference_temperature() const {
  const std::vector<double> t = training_temperatures();
  return t.empty() ? 1.0 : *std::min_element(t.begin(), t.end());
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, const Entry*> lookup;
  std::set<std::string> sections;
  for (const Entry& e : registry()) {
    lookup[e.section + "." + e.key] = &e;
    sections.insert(e.section);
  }
  RunConfig config;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash_pos = raw.find('#');
    const std::string s = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (sections.count(section) == 0) throw ConfigError(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) throw ConfigError(line, "key '" + key + "' appears before any [section]");
    const auto it = lookup.find(section + "." + key);
    if (it == lookup.end()) throw ConfigError(line, "unknown key '" + key + "' in section [" + section + "]");
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(line, "duplicate key '" + key + "' in section [" + section + "]");
    }
    try {
      it->second->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line, "key '" + key + "': " + e.what());
    }
  }
  config.resolve();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'A', 'T', 'F', 'C', 'K', 'P', 'T'};

using json = nlohmann::json;

json net_shape(const nn::DenseNet& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"activation", nn::to_string(l.activation)}});
  }
  return layers;
}

nn::DenseNet net_from_shape(const json& layers) {
  if (!layers.is_array() || layers.empty()) throw std::runtime_error("checkpoint: malformed network description");
  std::vector<int> widths{layers.front().at("in").get<int>()};
  for (const auto& l : layers) {
    if (l.at("in").get<int>() != widths.back()) throw std::runtime_error("checkpoint: inconsistent layer widths");
    widths.push_back(l.at("out").get<int>());
  }
  const nn::Activation hidden = layers.size() > 1
                                    ? nn::activation_from_string(layers.front().at("activation").get<std::string>())
                                    : nn::Activation::identity;
  const nn::Activation output = nn::activation_from_string(layers.back().at("activation").get<std::string>());
  nn::DenseNet net(widths, hidden, output);
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
    net.layers()[k].activation = nn::activation_from_string(layers[k].at("activation").get<std::string>());
  }
  return net;
}

struct NamedBlock {
  std::string name;
  std::span<double> data;
};

void net_blocks(const std::string& prefix, nn::DenseNet& net, std::vector<NamedBlock>& out) {
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    auto& l = net.layers()[k];
    out.push_back({prefix + "." + std::to_string(k) + ".weight",
                   {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
    out.push_back({prefix + "." + std::to_string(k) + ".bias", {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
  }
}

std::vector<NamedBlock> model_blocks(spib::LatfModel& m) {
  std::vector<NamedBlock> out;
  net_blocks("encoder", m.encoder.mean_net, out);
  out.push_back({"encoder.log_sigma", {&m.encoder.log_sigma, 1}});
  net_blocks("decoder", m.decoder.logits_net, out);
  for (std::size_t k = 0; k < m.flow.layer_count(); ++k) {
    net_blocks("flow." + std::to_string(k) + ".scale", m.flow.layers()[k].scale, out);
    net_blocks("flow." + std::to_string(k) + ".shift", m.flow.layers()[k].shift, out);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const spib::LatfModel& model_in) {
  spib::LatfModel model = model_in;
  json h;
  h["format"] = "latf-checkpoint";
  h["tool_version"] = kToolVersion;
  h["latent_dim"] = model.latent_dim;
  h["input_dim"] = model.input_dim();
  h["n_states"] = model.n_states;
  h["beta"] = model.beta;
  h["tau"] = model.tau;
  h["lag"] = model.lag;
  h["temperature_tags"] = model.temperature_tags;
  h["state_history"] = model.state_history;
  h["config_hash"] = hex64(model.config_hash);
  h["encoder"] = net_shape(model.encoder.mean_net);
  h["decoder"] = net_shape(model.decoder.logits_net);
  json flow_layers = json::array();
  for (const auto& l : model.flow.layers()) {
    flow_layers.push_back({{"parity", l.parity}, {"scale", net_shape(l.scale)}, {"shift", net_shape(l.shift)}});
  }
  h["flow"] = {{"dim", model.flow.layer_count() ? model.flow.dim() : model.latent_dim}, {"layers", flow_layers}};
  const std::vector<NamedBlock> blocks = model_blocks(model);
  json names = json::array();
  for (const auto& b : blocks) names.push_back({{"name", b.name}, {"count", b.data.size()}});
  h["blocks"] = names;

  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& b : blocks) {
    detail::write_le<std::uint64_t>(out, b.data.size());
    detail::write_le_doubles(out, b.data);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

spib::LatfModel load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_latent_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  detail::LittleEndianReader r(in, "checkpoint " + path.string());
  if (r.read_string(8) != std::string(kCheckpointMagic, 8)) r.fail("bad magic");
  const auto version = r.read<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto header_len = r.read<std::uint64_t>();
  if (header_len > (1ULL << 26)) r.fail("implausible header length " + std::to_string(header_len));
  const std::uint64_t header_at = r.offset();
  const std::string header = r.read_string(header_len);
  json h;
  spib::LatfModel m;
  try {
    h = json::parse(header);
    m.latent_dim = h.at("latent_dim").get<int>();
    if (expected_latent_dim && m.latent_dim != *expected_latent_dim) {
      throw std::invalid_argument("checkpoint " + path.string() + " has latent dimension " +
                                  std::to_string(m.latent_dim) + ", pipeline expects " +
                                  std::to_string(*expected_latent_dim));
    }
    m.n_states = h.at("n_states").get<int>();
    m.beta = h.at("beta").get<double>();
    m.tau = h.at("tau").get<double>();
    m.lag = h.at("lag").get<int>();
    m.temperature_tags = h.at("temperature_tags").get<std::vector<double>>();
    m.state_history = h.at("state_history").get<std::vector<int>>();
    m.config_hash = std::stoull(h.at("config_hash").get<std::string>(), nullptr, 16);
    m.encoder.mean_net = net_from_shape(h.at("encoder"));
    m.decoder.logits_net = net_from_shape(h.at("decoder"));
    const json& fl = h.at("flow").at("layers");
    std::mt19937_64 unused(0);
    if (!fl.empty()) m.flow = flow::FlowModel(h.at("flow").at("dim").get<int>(), 0, {}, unused);
    for (const auto& l : fl) {
      flow::CouplingLayer layer;
      layer.parity = l.at("parity").get<int>();
      layer.scale = net_from_shape(l.at("scale"));
      layer.shift = net_from_shape(l.at("shift"));
      m.flow.layers().push_back(std::move(layer));
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": malformed header at byte offset " +
                             std::to_string(header_at) + ": " + e.what());
  }
  if (m.encoder.mean_net.output_dim() != m.latent_dim || m.decoder.logits_net.input_dim() != m.latent_dim ||
      m.decoder.logits_net.output_dim() != m.n_states) {
    throw std::runtime_error("checkpoint " + path.string() + ": component dimensions are inconsistent");
  }
  std::vector<NamedBlock> blocks = model_blocks(m);
  const json& listed = h.at("blocks");
  if (listed.size() != blocks.size()) r.fail("header lists " + std::to_string(listed.size()) + " blocks, model needs " + std::to_string(blocks.size()));
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (listed[k].at("name").get<std::string>() != blocks[k].name) r.fail("unexpected block " + listed[k].at("name").get<std::string>());
    const auto count = r.read<std::uint64_t>();
    if (count != blocks[k].data.size()) {
      r.fail("block " + blocks[k].name + " has " + std::to_string(count) + " values, expected " +
             std::to_string(blocks[k].data.size()));
    }
    r.read_doubles(blocks[k].data);
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after last block");
  return m;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int p = 6; p < 17; ++p) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path, std::ios::trunc), columns_(columns.size()), path_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  row(columns);
  rows_ = 0;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw std::logic_error("csv " + path_.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  ++rows_;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = fnv1a64("");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs) {
  {
    std::ofstream cfg(dir / "config.resolved", std::ios::trunc);
    cfg << "# config hash " << hex64(config.hash()) << '\n' << config.resolved_text();
  }
  json m;
  m["tool"] = "latf";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["config_hash"] = hex64(config.hash());
  m["resolved_config"] = "config.resolved";
  auto entries = [](const std::vector<std::filesystem::path>& paths) {
    json a = json::array();
    for (const auto& p : paths) {
      a.push_back({{"path", p.string()}, {"fnv1a64", std::filesystem::exists(p) ? hex64(file_hash(p)) : "missing"}});
    }
    return a;
  };
  m["inputs"] = entries(inputs);
  m["outputs"] = entries(outputs);
  std::ofstream out(dir / ("manifest-" + command + ".json"), std::ios::trunc);
  out << m.dump(2) << '\n';
}

void write_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (int v : labels) out << v << '\n';
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<int> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_int<int>(line));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": not an integer label");
    }
  }
  return out;
}

}  // namespace latf::io

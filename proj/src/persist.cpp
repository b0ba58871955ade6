#include "gridstab/persist.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridstab/error.hpp"
#include "gridstab/log.hpp"

namespace gridstab {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, what + ": " + e.what());
  }
}

void check_header(const json& j, const std::string& kind, const std::string& what) {
  if (!j.is_object() || !j.contains("format_version")) fail(ErrorCode::Format, what + ": missing format_version");
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kFormatVersion)
    fail(ErrorCode::Format, what + ": unsupported format_version " + j["format_version"].dump());
  if (!j.contains("kind") || j["kind"] != kind) fail(ErrorCode::Format, what + ": expected kind '" + kind + "'");
}

ojson header(const std::string& kind) {
  ojson j;
  j["format_version"] = kFormatVersion;
  j["kind"] = kind;
  return j;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    fail(ErrorCode::Format, "bad 64-bit hash '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) fail(ErrorCode::Format, what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, what + ": field '" + key + "': " + e.what());
  }
}

// Reads known keys of one config section and rejects the rest.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) fail(ErrorCode::Format, "config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (!node_ || std::uncaught_exceptions()) return;
    for (const auto& item : node_->items())
      if (!seen_.count(item.key())) fail(ErrorCode::Format, "unknown config key '" + name_ + "." + item.key() + "'");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, "config key '" + name_ + "." + key + "': " + e.what());
    }
  }
  const json* raw(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

const char* encoder_name(GlobalEncoder e) { return e == GlobalEncoder::RawCnn ? "raw_cnn" : "stats_mlp"; }
GlobalEncoder encoder_from(const std::string& s) {
  if (s == "stats_mlp") return GlobalEncoder::StatsMlp;
  if (s == "raw_cnn") return GlobalEncoder::RawCnn;
  fail(ErrorCode::Format, "unknown global_encoder '" + s + "'");
}
const char* pool_name(PoolKind p) { return p == PoolKind::Max ? "max" : "mean"; }
PoolKind pool_from(const std::string& s) {
  if (s == "mean") return PoolKind::Mean;
  if (s == "max") return PoolKind::Max;
  fail(ErrorCode::Format, "unknown pool '" + s + "'");
}
const char* loss_name(nn::LossForm f) { return f == nn::LossForm::PaperForm ? "paper_form" : "binary"; }
nn::LossForm loss_from(const std::string& s) {
  if (s == "binary") return nn::LossForm::Binary;
  if (s == "paper_form") return nn::LossForm::PaperForm;
  fail(ErrorCode::Format, "unknown loss '" + s + "'");
}

ojson model_config_json(const ModelConfig& m) {
  ojson j;
  j["global_encoder"] = encoder_name(m.global_encoder);
  j["gcn_layers"] = m.gcn_layers;
  j["gcn_hidden"] = m.gcn_hidden;
  j["pool"] = pool_name(m.pool);
  j["embed_dim"] = m.embed_dim;
  j["global_hidden"] = m.global_hidden;
  j["id_hidden"] = m.id_hidden;
  j["mlp_hidden"] = m.mlp_hidden;
  j["cnn_channels"] = m.cnn_channels;
  j["cnn_kernel"] = m.cnn_kernel;
  j["final_gcn_relu"] = m.final_gcn_relu;
  j["loss"] = loss_name(m.loss);
  j["seed"] = m.seed;
  return j;
}

void read_model_config(const json& root, ModelConfig& m) {
  Section s(root, "model");
  std::string encoder = encoder_name(m.global_encoder), pool = pool_name(m.pool), loss = loss_name(m.loss);
  s.get("global_encoder", encoder);
  s.get("gcn_layers", m.gcn_layers);
  s.get("gcn_hidden", m.gcn_hidden);
  s.get("pool", pool);
  s.get("embed_dim", m.embed_dim);
  s.get("global_hidden", m.global_hidden);
  s.get("id_hidden", m.id_hidden);
  s.get("mlp_hidden", m.mlp_hidden);
  s.get("cnn_channels", m.cnn_channels);
  s.get("cnn_kernel", m.cnn_kernel);
  s.get("final_gcn_relu", m.final_gcn_relu);
  s.get("loss", loss);
  s.get("seed", m.seed);
  m.global_encoder = encoder_from(encoder);
  m.pool = pool_from(pool);
  m.loss = loss_from(loss);
}

ojson feature_list_json(const std::vector<GlobalFeature>& features) {
  ojson a = ojson::array();
  for (const auto& f : features) {
    ojson e;
    e["quantity"] = to_string(f.quantity);
    e["stat"] = to_string(f.stat);
    e["region"] = f.region;
    a.push_back(std::move(e));
  }
  return a;
}

std::vector<GlobalFeature> feature_list_from(const json& a, const std::string& what) {
  if (!a.is_array()) fail(ErrorCode::Format, what + " must be an array");
  std::vector<GlobalFeature> out;
  for (const auto& e : a) {
    if (!e.is_object() || e.size() != 3) fail(ErrorCode::Format, what + ": entries need quantity, stat and region");
    GlobalFeature f{};
    try {
      f.quantity = quantity_from_string(get_as<std::string>(e, "quantity", what));
      f.stat = stat_kind_from_string(get_as<std::string>(e, "stat", what));
    } catch (const Error& err) {
      fail(ErrorCode::Format, what + ": " + err.what());
    }
    f.region = get_as<int>(e, "region", what);
    out.push_back(f);
  }
  return out;
}

ojson config_json(const RunConfig& c) {
  ojson j = header("run_config");
  ojson& s = j["synth"];
  s["n_bus"] = c.synth.n_bus;
  s["days"] = c.synth.days;
  s["slots_per_day"] = c.synth.slots_per_day;
  s["seed"] = c.synth.seed;
  s["target_unstable_rate"] = c.synth.target_unstable_rate;
  s["oracle_weights"] = {{"local_overload", c.synth.oracle_weights.local_overload},
                         {"global_stress", c.synth.oracle_weights.global_stress},
                         {"latent", c.synth.oracle_weights.latent}};
  s["noise_amplitude"] = c.synth.noise_amplitude;
  s["n_regions"] = c.synth.n_regions;
  s["chord_ratio"] = c.synth.chord_ratio;
  s["weak_fraction"] = c.synth.weak_fraction;

  ojson& f = j["features"];
  f["global"] = c.features.global.empty() ? ojson("full") : feature_list_json(c.features.global);
  f["local_nodes"] = c.features.local_nodes;
  f["node_features"] = c.features.node_features;
  f["threads"] = c.features.threads;

  j["model"] = model_config_json(c.model);

  ojson& t = j["train"];
  t["epochs"] = c.train.epochs;
  t["batch_size"] = c.train.batch_size;
  t["seed"] = c.train.seed;
  t["balance"] = c.train.balance;

  ojson& v = j["svm"];
  v["c"] = c.svm.c;
  v["epochs"] = c.svm.epochs;
  v["eta0"] = c.svm.eta0;
  v["seed"] = c.svm.seed;

  ojson& e = j["eval"];
  e["target_kkd"] = c.eval.target_kkd;
  e["calib_fraction"] = c.eval.calib_fraction;
  e["threshold"] = c.eval.threshold ? ojson(*c.eval.threshold) : ojson(nullptr);
  e["day"] = c.eval.day;
  return j;
}

}  // namespace

// ---- run config --------------------------------------------------------------------

void RunConfig::validate() const {
  synth.validate();
  if (features.local_nodes != kLocalNodes)
    fail(ErrorCode::InvalidArgument, "features.local_nodes must be " + std::to_string(kLocalNodes));
  if (features.node_features != kNodeFeatureDim)
    fail(ErrorCode::InvalidArgument, "features.node_features must be " + std::to_string(kNodeFeatureDim));
  feature_spec().validate();
  model.validate();
  if (train.epochs < 1 || train.batch_size < 1) fail(ErrorCode::InvalidArgument, "train.epochs and train.batch_size must be >= 1");
  if (!(svm.c > 0.0) || svm.epochs < 1 || !(svm.eta0 > 0.0))
    fail(ErrorCode::InvalidArgument, "svm.c, svm.epochs and svm.eta0 must be positive");
  if (!(eval.target_kkd >= 0.0 && eval.target_kkd <= 100.0))
    fail(ErrorCode::InvalidArgument, "eval.target_kkd must lie in [0, 100]");
  if (!(eval.calib_fraction > 0.0 && eval.calib_fraction < 1.0))
    fail(ErrorCode::InvalidArgument, "eval.calib_fraction must lie in (0, 1)");
  if (eval.threshold && !(*eval.threshold >= 0.0 && *eval.threshold <= 1.0))
    fail(ErrorCode::InvalidArgument, "eval.threshold must lie in [0, 1]");
  if (eval.day < 0) fail(ErrorCode::InvalidArgument, "eval.day must be >= 0");
}

GlobalFeatureSpec RunConfig::feature_spec() const {
  if (features.global.empty()) return GlobalFeatureSpec::full(synth.n_regions);
  GlobalFeatureSpec spec;
  spec.features = features.global;
  for (const auto& f : spec.features)
    if (f.region < kWholeGrid || f.region >= synth.n_regions)
      fail(ErrorCode::InvalidArgument, "feature region " + std::to_string(f.region) + " out of range");
  return spec;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.model = model;
  e.train = train;
  e.train.target_kkd = eval.target_kkd;
  e.svm = svm;
  e.target_kkd = eval.target_kkd;
  e.calib_fraction = eval.calib_fraction;
  e.threshold = eval.threshold;
  return e;
}

RunConfig parse_run_config(const std::string& text) {
  const json root = parse_json(text, "config");
  if (!root.is_object()) fail(ErrorCode::Format, "config must be a JSON object");
  static const std::set<std::string> sections{"format_version", "kind", "synth", "features", "model",
                                              "train", "svm", "eval"};
  for (const auto& item : root.items())
    if (!sections.count(item.key())) fail(ErrorCode::Format, "unknown config key '" + item.key() + "'");
  if (root.contains("format_version") &&
      (!root["format_version"].is_number_integer() || root["format_version"].get<int>() != kFormatVersion))
    fail(ErrorCode::Format, "config: unsupported format_version " + root["format_version"].dump());
  if (root.contains("kind") && root["kind"] != "run_config") fail(ErrorCode::Format, "config: expected kind 'run_config'");

  RunConfig c;
  {
    Section s(root, "synth");
    s.get("n_bus", c.synth.n_bus);
    s.get("days", c.synth.days);
    s.get("slots_per_day", c.synth.slots_per_day);
    s.get("seed", c.synth.seed);
    s.get("target_unstable_rate", c.synth.target_unstable_rate);
    if (const json* w = s.raw("oracle_weights")) {
      const json wrapped{{"oracle_weights", *w}};
      Section ws(wrapped, "synth.oracle_weights");
      ws.get("local_overload", c.synth.oracle_weights.local_overload);
      ws.get("global_stress", c.synth.oracle_weights.global_stress);
      ws.get("latent", c.synth.oracle_weights.latent);
    }
    s.get("noise_amplitude", c.synth.noise_amplitude);
    s.get("n_regions", c.synth.n_regions);
    s.get("chord_ratio", c.synth.chord_ratio);
    s.get("weak_fraction", c.synth.weak_fraction);
  }
  {
    Section s(root, "features");
    if (const json* g = s.raw("global")) {
      if (g->is_string()) {
        if (*g != "full") fail(ErrorCode::Format, "features.global must be \"full\" or a list");
      } else {
        c.features.global = feature_list_from(*g, "features.global");
        if (c.features.global.empty()) fail(ErrorCode::Format, "features.global must not be empty");
      }
    }
    s.get("local_nodes", c.features.local_nodes);
    s.get("node_features", c.features.node_features);
    s.get("threads", c.features.threads);
  }
  read_model_config(root, c.model);
  {
    Section s(root, "train");
    s.get("epochs", c.train.epochs);
    s.get("batch_size", c.train.batch_size);
    s.get("seed", c.train.seed);
    s.get("balance", c.train.balance);
  }
  {
    Section s(root, "svm");
    s.get("c", c.svm.c);
    s.get("epochs", c.svm.epochs);
    s.get("eta0", c.svm.eta0);
    s.get("seed", c.svm.seed);
  }
  {
    Section s(root, "eval");
    s.get("target_kkd", c.eval.target_kkd);
    s.get("calib_fraction", c.eval.calib_fraction);
    if (const json* t = s.raw("threshold"); t && !t->is_null()) {
      if (!t->is_number()) fail(ErrorCode::Format, "eval.threshold must be a number or null");
      c.eval.threshold = t->get<double>();
    }
    s.get("day", c.eval.day);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path)); }

std::string dump_run_config(const RunConfig& c) { return config_json(c).dump(2) + "\n"; }

// ---- network / dataset ---------------------------------------------------------------

std::string network_json(const Network& net) {
  ojson j = header("network");
  ojson buses = ojson::array();
  for (const auto& b : net.buses) {
    ojson o;
    o["id"] = b.id;
    o["voltage_mag"] = b.voltage_mag;
    o["voltage_ang"] = b.voltage_ang;
    o["p_gen"] = b.p_gen;
    o["q_gen"] = b.q_gen;
    o["p_load"] = b.p_load;
    o["q_load"] = b.q_load;
    o["gen_pf"] = b.gen_pf;
    o["load_pf"] = b.load_pf;
    o["q_cap"] = b.q_cap;
    o["q_reactor"] = b.q_reactor;
    o["degree"] = b.degree;
    o["region"] = b.region;
    o["p_gen_max"] = b.p_gen_max;
    buses.push_back(std::move(o));
  }
  ojson elements = ojson::array();
  for (const auto& e : net.elements) {
    ojson o;
    o["id"] = e.id;
    o["kind"] = to_string(e.kind);
    o["from_bus"] = e.from_bus;
    o["to_bus"] = e.to_bus;
    o["p_flow"] = e.p_flow;
    o["q_flow"] = e.q_flow;
    o["rating"] = e.rating;
    o["reactance"] = e.reactance;
    elements.push_back(std::move(o));
  }
  j["buses"] = std::move(buses);
  j["elements"] = std::move(elements);
  return j.dump() + "\n";
}

Network parse_network(const std::string& text) {
  const json j = parse_json(text, "network");
  check_header(j, "network", "network");
  const std::string what = "network";
  Network net;
  for (const auto& o : get_as<json>(j, "buses", what)) {
    Bus b;
    b.id = get_as<int>(o, "id", what);
    b.voltage_mag = get_as<double>(o, "voltage_mag", what);
    b.voltage_ang = get_as<double>(o, "voltage_ang", what);
    b.p_gen = get_as<double>(o, "p_gen", what);
    b.q_gen = get_as<double>(o, "q_gen", what);
    b.p_load = get_as<double>(o, "p_load", what);
    b.q_load = get_as<double>(o, "q_load", what);
    b.gen_pf = get_as<double>(o, "gen_pf", what);
    b.load_pf = get_as<double>(o, "load_pf", what);
    b.q_cap = get_as<double>(o, "q_cap", what);
    b.q_reactor = get_as<double>(o, "q_reactor", what);
    b.degree = get_as<int>(o, "degree", what);
    b.region = get_as<int>(o, "region", what);
    if (o.contains("p_gen_max")) b.p_gen_max = get_as<double>(o, "p_gen_max", what);
    net.buses.push_back(b);
  }
  for (const auto& o : get_as<json>(j, "elements", what)) {
    Element e;
    e.id = get_as<int>(o, "id", what);
    e.kind = element_kind_from_string(get_as<std::string>(o, "kind", what));
    e.from_bus = get_as<int>(o, "from_bus", what);
    e.to_bus = get_as<int>(o, "to_bus", what);
    e.p_flow = get_as<double>(o, "p_flow", what);
    e.q_flow = get_as<double>(o, "q_flow", what);
    e.rating = get_as<double>(o, "rating", what);
    if (o.contains("reactance")) e.reactance = get_as<double>(o, "reactance", what);
    net.elements.push_back(e);
  }
  return net;
}

void save_dataset(const Dataset& ds, const RunConfig& config, const fs::path& dir) {
  RunConfig stored = config;
  stored.synth = ds.config;
  write_file(dir / "config.json", dump_run_config(stored));
  write_file(dir / "network.json", network_json(ds.network));

  std::string text;
  {
    ojson h = header("snapshots");
    h["count"] = ds.snapshots.size();
    h["bus_count"] = ds.network.bus_count();
    h["element_count"] = ds.network.element_count();
    text += h.dump() + "\n";
  }
  for (const auto& s : ds.snapshots) {
    ojson o;
    o["day"] = s.day;
    o["slot"] = s.slot;
    o["bus_states"] = s.bus_states;
    o["element_states"] = s.element_states;
    text += o.dump() + "\n";
  }
  write_file(dir / "snapshots.jsonl", text);

  text.clear();
  {
    ojson h = header("faults");
    h["count"] = ds.faults.size();
    text += h.dump() + "\n";
  }
  for (const auto& f : ds.faults) {
    ojson o;
    o["day"] = f.day;
    o["slot"] = f.slot;
    o["element_id"] = f.element_id;
    o["label"] = f.label == Label::Unstable ? "unstable" : "stable";
    text += o.dump() + "\n";
  }
  write_file(dir / "faults.jsonl", text);
}

namespace {

// Splits a JSONL file into its header and body lines.
std::vector<std::string> jsonl_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(std::move(line));
  if (lines.empty()) fail(ErrorCode::Format, path.string() + ": empty file");
  return lines;
}

Label label_from(const std::string& s, const std::string& what) {
  if (s == "stable") return Label::Stable;
  if (s == "unstable") return Label::Unstable;
  fail(ErrorCode::Format, what + ": unknown label '" + s + "'");
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.config = load_run_config(dir / "config.json").synth;
  ds.network = parse_network(read_file(dir / "network.json"));
  const auto issues = validate_network(ds.network);
  if (!issues.empty()) fail(ErrorCode::Structure, "network.json: " + issues.front().message);

  const std::string snap_what = (dir / "snapshots.jsonl").string();
  auto lines = jsonl_lines(dir / "snapshots.jsonl");
  const json h = parse_json(lines[0], snap_what);
  check_header(h, "snapshots", snap_what);
  const auto count = get_as<std::size_t>(h, "count", snap_what);
  if (count != lines.size() - 1) fail(ErrorCode::Format, snap_what + ": snapshot count mismatch");
  if (get_as<std::size_t>(h, "bus_count", snap_what) != ds.network.bus_count() ||
      get_as<std::size_t>(h, "element_count", snap_what) != ds.network.element_count())
    fail(ErrorCode::Format, snap_what + ": does not match network.json");
  ds.snapshots.reserve(count);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json o = parse_json(lines[i], snap_what);
    Snapshot s;
    s.day = get_as<int>(o, "day", snap_what);
    s.slot = get_as<int>(o, "slot", snap_what);
    s.bus_states = get_as<std::vector<double>>(o, "bus_states", snap_what);
    s.element_states = get_as<std::vector<double>>(o, "element_states", snap_what);
    if (s.bus_states.size() != ds.network.bus_count() * kBusStateDim ||
        s.element_states.size() != 2 * ds.network.element_count())
      fail(ErrorCode::Format, snap_what + ": snapshot " + std::to_string(i - 1) + " has the wrong size");
    const std::size_t expect = i - 1;
    if (static_cast<std::size_t>(s.day) * ds.config.slots_per_day + s.slot != expect)
      fail(ErrorCode::Format, snap_what + ": snapshots must be day-major and complete");
    lines[i].clear();
    ds.snapshots.push_back(std::move(s));
  }
  if (ds.snapshots.size() != static_cast<std::size_t>(ds.config.days) * ds.config.slots_per_day)
    fail(ErrorCode::Format, snap_what + ": expected days x slots_per_day snapshots");

  const std::string fault_what = (dir / "faults.jsonl").string();
  lines = jsonl_lines(dir / "faults.jsonl");
  const json fh = parse_json(lines[0], fault_what);
  check_header(fh, "faults", fault_what);
  if (get_as<std::size_t>(fh, "count", fault_what) != lines.size() - 1)
    fail(ErrorCode::Format, fault_what + ": fault count mismatch");
  ds.faults.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json o = parse_json(lines[i], fault_what);
    FaultSample f;
    f.day = get_as<int>(o, "day", fault_what);
    f.slot = get_as<int>(o, "slot", fault_what);
    f.element_id = get_as<int>(o, "element_id", fault_what);
    f.label = label_from(get_as<std::string>(o, "label", fault_what), fault_what);
    if (!ds.network.is_faultable(f.element_id))
      fail(ErrorCode::Format, fault_what + ": element " + std::to_string(f.element_id) + " is not an AC line");
    ds.faults.push_back(f);
  }
  return ds;
}

// ---- features ----------------------------------------------------------------------

void save_features(const FeatureSet& f, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  {
    ojson h = header("features");
    h["spec"] = feature_list_json(f.spec.features);
    h["spec_hash"] = hex64(f.spec_hash);
    h["n_elements"] = f.n_elements;
    h["slots_per_day"] = f.slots_per_day;
    h["local_nodes"] = kLocalNodes;
    h["node_features"] = kNodeFeatureDim;
    h["snapshots"] = f.global.size();
    h["samples"] = f.samples.size();
    h["has_raw"] = f.has_raw();
    out << h.dump() << '\n';
  }
  for (std::size_t i = 0; i < f.global.size(); ++i) {
    ojson o;
    o["record"] = "snapshot";
    o["index"] = i;
    o["global_vec"] = f.global[i];
    if (f.has_raw()) {
      const Matrix& r = f.raw[i];
      o["raw_rows"] = r.rows();
      o["raw"] = std::vector<double>(r.data(), r.data() + r.size());
    }
    out << o.dump() << '\n';
  }
  for (std::size_t i = 0; i < f.samples.size(); ++i) {
    const auto& s = f.samples[i];
    const LocalGraph g = f.local_graph(i);
    ojson o;
    o["record"] = "sample";
    o["fault_key"] = std::to_string(s.day) + ":" + std::to_string(s.slot) + ":" + std::to_string(s.element_id);
    o["snapshot"] = s.snapshot;
    o["global_vec"] = f.global.at(s.snapshot);
    ojson adj = ojson::array();
    for (const auto& [a, b] : g.edges) adj.push_back({a, b});
    o["local_adj"] = std::move(adj);
    o["local_feat"] = std::vector<double>(g.node_features.data(), g.node_features.data() + g.node_features.size());
    o["mask"] = g.node_mask;
    o["bus_ids"] = g.bus_ids;
    o["element_id"] = s.element_id;
    o["label"] = s.label == Label::Unstable ? "unstable" : "stable";
    out << o.dump() << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

FeatureSet load_features(const fs::path& path) {
  const std::string what = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + what);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Format, what + ": empty file");
  const json h = parse_json(line, what);
  check_header(h, "features", what);
  if (get_as<int>(h, "local_nodes", what) != kLocalNodes || get_as<int>(h, "node_features", what) != kNodeFeatureDim)
    fail(ErrorCode::Format, what + ": local layout does not match this build");

  FeatureSet f;
  f.spec.features = feature_list_from(get_as<json>(h, "spec", what), what + " spec");
  f.spec_hash = parse_hex64(get_as<std::string>(h, "spec_hash", what));
  if (f.spec_hash != f.spec.hash()) fail(ErrorCode::Format, what + ": spec_hash does not match the stored spec");
  f.n_elements = get_as<int>(h, "n_elements", what);
  f.slots_per_day = get_as<int>(h, "slots_per_day", what);
  const auto n_snap = get_as<std::size_t>(h, "snapshots", what);
  const auto n_samples = get_as<std::size_t>(h, "samples", what);
  const bool has_raw = get_as<bool>(h, "has_raw", what);

  f.global.resize(n_snap);
  if (has_raw) f.raw.resize(n_snap);
  for (std::size_t i = 0; i < n_snap; ++i) {
    if (!std::getline(in, line)) fail(ErrorCode::Format, what + ": truncated snapshot records");
    const json o = parse_json(line, what);
    if (o.value("record", "") != "snapshot" || get_as<std::size_t>(o, "index", what) != i)
      fail(ErrorCode::Format, what + ": expected snapshot record " + std::to_string(i));
    f.global[i] = get_as<std::vector<double>>(o, "global_vec", what);
    if (f.global[i].size() != f.spec.size()) fail(ErrorCode::Format, what + ": global vector length mismatch");
    if (has_raw) {
      const auto rows = get_as<Eigen::Index>(o, "raw_rows", what);
      const auto flat = get_as<std::vector<double>>(o, "raw", what);
      if (rows < 1 || static_cast<std::size_t>(rows) * kBusStateDim != flat.size())
        fail(ErrorCode::Format, what + ": raw matrix shape mismatch");
      f.raw[i] = Eigen::Map<const Matrix>(flat.data(), rows, kBusStateDim);
    }
  }

  std::vector<LocalGraph> graphs;
  graphs.reserve(n_samples);
  f.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (!std::getline(in, line)) fail(ErrorCode::Format, what + ": truncated sample records");
    const json o = parse_json(line, what);
    if (o.value("record", "") != "sample") fail(ErrorCode::Format, what + ": expected a sample record");
    SampleMeta m;
    const auto key = get_as<std::string>(o, "fault_key", what);
    if (std::sscanf(key.c_str(), "%d:%d:%d", &m.day, &m.slot, &m.element_id) != 3)
      fail(ErrorCode::Format, what + ": bad fault_key '" + key + "'");
    if (get_as<int>(o, "element_id", what) != m.element_id) fail(ErrorCode::Format, what + ": fault_key/element_id mismatch");
    m.label = label_from(get_as<std::string>(o, "label", what), what);
    m.snapshot = get_as<int>(o, "snapshot", what);
    if (m.snapshot < 0 || static_cast<std::size_t>(m.snapshot) >= n_snap)
      fail(ErrorCode::Format, what + ": snapshot reference out of range");
    if (get_as<std::vector<double>>(o, "global_vec", what) != f.global[m.snapshot])
      fail(ErrorCode::Format, what + ": sample global_vec differs from its snapshot record");

    LocalGraph g;
    g.fault_element_id = m.element_id;
    g.bus_ids = get_as<std::vector<int>>(o, "bus_ids", what);
    g.node_mask = get_as<std::vector<std::uint8_t>>(o, "mask", what);
    const auto feat = get_as<std::vector<double>>(o, "local_feat", what);
    if (g.node_mask.size() != kLocalNodes || feat.size() != static_cast<std::size_t>(kLocalNodes) * kNodeFeatureDim ||
        g.bus_ids.size() > static_cast<std::size_t>(kLocalNodes))
      fail(ErrorCode::Format, what + ": local graph shape mismatch");
    g.node_features = Eigen::Map<const Matrix>(feat.data(), kLocalNodes, kNodeFeatureDim);
    for (const auto& e : get_as<json>(o, "local_adj", what)) {
      if (!e.is_array() || e.size() != 2) fail(ErrorCode::Format, what + ": local_adj entries are pairs");
      const int a = e[0].get<int>(), b = e[1].get<int>();
      if (a < 0 || b < 0 || a >= g.real_nodes() || b >= g.real_nodes() || a == b)
        fail(ErrorCode::Format, what + ": local_adj index out of range");
      g.edges.emplace_back(a, b);
    }
    graphs.push_back(std::move(g));
    f.samples.push_back(m);
  }
  if (std::getline(in, line) && !line.empty()) fail(ErrorCode::Format, what + ": trailing records");
  f.local = std::make_shared<StoredLocalSource>(std::move(graphs));
  return f;
}

// ---- checkpoints --------------------------------------------------------------------

std::string checkpoint_json(const Model& model, const nn::AdamState* adam) {
  ojson j = header("checkpoint");
  j["variant"] = to_string(model.variant());
  j["config"] = model_config_json(model.config());
  j["dims"] = {{"global_dim", model.global_dim()}, {"n_elements", model.n_elements()}, {"n_bus", model.n_bus()}};
  j["feature_spec_hash"] = hex64(model.feature_hash);
  j["threshold"] = model.threshold;
  ojson layers = ojson::array();
  for (const auto& p : model.params().all()) {
    ojson l;
    l["name"] = p.name;
    l["shape"] = p.value.shape;
    l["values"] = p.value.data;
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  const Normalizer& n = model.normalizer();
  j["normalizer"] = {{"global_mean", n.global_mean}, {"global_scale", n.global_scale},
                     {"node_mean", n.node_mean},     {"node_scale", n.node_scale},
                     {"raw_mean", n.raw_mean},       {"raw_scale", n.raw_scale}};
  if (adam) {
    ojson a;
    a["step"] = adam->step;
    a["lr"] = adam->config.lr;
    a["beta1"] = adam->config.beta1;
    a["beta2"] = adam->config.beta2;
    a["eps"] = adam->config.eps;
    ojson m = ojson::array(), v = ojson::array();
    for (const auto& t : adam->m) m.push_back(t.data);
    for (const auto& t : adam->v) v.push_back(t.data);
    a["m"] = std::move(m);
    a["v"] = std::move(v);
    j["adam"] = std::move(a);
  }
  return j.dump() + "\n";
}

Model parse_checkpoint(const std::string& text, nn::AdamState* adam) {
  const std::string what = "checkpoint";
  const json j = parse_json(text, what);
  check_header(j, "checkpoint", what);
  ModelVariant variant;
  try {
    variant = variant_from_string(get_as<std::string>(j, "variant", what));
  } catch (const Error& e) {
    fail(ErrorCode::Format, what + ": " + e.what());
  }
  ModelConfig config;
  read_model_config(json{{"model", get_as<json>(j, "config", what)}}, config);
  config.validate();
  const json dims = get_as<json>(j, "dims", what);
  Model model(variant, config, get_as<int>(dims, "global_dim", what), get_as<int>(dims, "n_elements", what),
              get_as<int>(dims, "n_bus", what));
  model.feature_hash = parse_hex64(get_as<std::string>(j, "feature_spec_hash", what));
  model.threshold = get_as<double>(j, "threshold", what);

  auto& params = model.params().all();
  const json layers = get_as<json>(j, "layers", what);
  if (!layers.is_array() || layers.size() != params.size())
    fail(ErrorCode::Format, what + ": expected " + std::to_string(params.size()) + " layers");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const json& l = layers[k];
    if (get_as<std::string>(l, "name", what) != params[k].name)
      fail(ErrorCode::Format, what + ": layer " + std::to_string(k) + " should be '" + params[k].name + "'");
    if (get_as<std::vector<std::size_t>>(l, "shape", what) != params[k].value.shape)
      fail(ErrorCode::Format, what + ": shape mismatch for '" + params[k].name + "'");
    auto values = get_as<std::vector<double>>(l, "values", what);
    if (values.size() != params[k].value.size())
      fail(ErrorCode::Format, what + ": value count mismatch for '" + params[k].name + "'");
    params[k].value.data = std::move(values);
  }

  const json n = get_as<json>(j, "normalizer", what);
  Normalizer& norm = model.normalizer();
  norm.global_mean = get_as<std::vector<double>>(n, "global_mean", what);
  norm.global_scale = get_as<std::vector<double>>(n, "global_scale", what);
  norm.node_mean = get_as<std::vector<double>>(n, "node_mean", what);
  norm.node_scale = get_as<std::vector<double>>(n, "node_scale", what);
  norm.raw_mean = get_as<std::vector<double>>(n, "raw_mean", what);
  norm.raw_scale = get_as<std::vector<double>>(n, "raw_scale", what);
  if (norm.global_mean.size() != norm.global_scale.size() || norm.node_mean.size() != norm.node_scale.size() ||
      norm.raw_mean.size() != norm.raw_scale.size())
    fail(ErrorCode::Format, what + ": normalizer mean/scale lengths differ");

  if (adam) {
    *adam = nn::AdamState{};
    if (j.contains("adam")) {
      const json& a = j["adam"];
      adam->step = get_as<long>(a, "step", what);
      adam->config.lr = get_as<double>(a, "lr", what);
      adam->config.beta1 = get_as<double>(a, "beta1", what);
      adam->config.beta2 = get_as<double>(a, "beta2", what);
      adam->config.eps = get_as<double>(a, "eps", what);
      const json m = get_as<json>(a, "m", what), v = get_as<json>(a, "v", what);
      if (!m.empty() || !v.empty()) {
        if (m.size() != params.size() || v.size() != params.size())
          fail(ErrorCode::Format, what + ": adam moment count mismatch");
        for (std::size_t k = 0; k < params.size(); ++k) {
          nn::Tensor tm(params[k].value.shape), tv(params[k].value.shape);
          tm.data = m[k].get<std::vector<double>>();
          tv.data = v[k].get<std::vector<double>>();
          if (tm.data.size() != params[k].value.size() || tv.data.size() != params[k].value.size())
            fail(ErrorCode::Format, what + ": adam moment shape mismatch for '" + params[k].name + "'");
          adam->m.push_back(std::move(tm));
          adam->v.push_back(std::move(tv));
        }
      }
    }
  }
  return model;
}

void save_checkpoint(const Model& model, const fs::path& path, const nn::AdamState* adam) {
  write_file(path, checkpoint_json(model, adam));
}

Model load_checkpoint(const fs::path& path, nn::AdamState* adam) { return parse_checkpoint(read_file(path), adam); }

// ---- files ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace gridstab

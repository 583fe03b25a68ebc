#include "ctrlab/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ctrlab/numeric.hpp"

namespace ctrlab {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string key(const std::string& k) const {
    return path_.empty() ? k : path_ + "." + k;
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  Section child(const std::string& k) {
    if (!has(k)) return Section(empty_object(), key(k));
    return Section(raw(k), key(k));
  }

  double real(const std::string& k, double def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_number()) throw ConfigError(key(k), "expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& k, std::int64_t def) {
    if (!has(k)) return def;
    return as_integer(raw(k), key(k));
  }

  std::int64_t required_integer(const std::string& k) {
    if (!has(k)) throw ConfigError(key(k), "required");
    return as_integer(raw(k), key(k));
  }

  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_boolean()) throw ConfigError(key(k), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& k, const std::string& def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_string()) throw ConfigError(key(k), "expected a string");
    return v.get<std::string>();
  }

  const json& array(const std::string& k) {
    if (!has(k)) throw ConfigError(key(k), "required");
    const json& v = raw(k);
    if (!v.is_array()) throw ConfigError(key(k), "expected an array");
    return v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigError(key(it.key()), "unknown key");
  }

  const std::string& where() const { return path_; }

  static std::int64_t as_integer(const json& v, const std::string& where) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e18)
        return static_cast<std::int64_t>(d);
    }
    throw ConfigError(where, "expected an integer");
  }

 private:
  static const json& empty_object() {
    static const json e = json::object();
    return e;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::uint64_t nonneg(std::int64_t v, const std::string& key) {
  if (v < 0) throw ConfigError(key, "must be >= 0");
  return static_cast<std::uint64_t>(v);
}

ModelArch parse_model(Section s) {
  ModelArch m;
  const std::string kind = s.text("kind", "linear");
  if (kind == "linear")
    m.kind = ArchKind::linear;
  else if (kind == "mlp")
    m.kind = ArchKind::mlp;
  else
    throw ConfigError(s.key("kind"), "expected \"linear\" or \"mlp\"");
  m.hash.dimension = nonneg(s.integer("dimension", 1024), s.key("dimension"));
  m.hash.salt = nonneg(s.integer("salt", 0), s.key("salt"));
  const std::int64_t hidden =
      s.integer("hidden", m.kind == ArchKind::mlp ? 8 : 0);
  if (hidden < 0 || hidden > std::numeric_limits<std::uint32_t>::max())
    throw ConfigError(s.key("hidden"), "out of range");
  m.hidden = static_cast<std::uint32_t>(hidden);
  s.finish();
  try {
    m.validate();
  } catch (const ConfigError& e) {
    const std::string& k = e.key();
    const auto dot = k.find('.');
    throw ConfigError(dot == std::string::npos ? s.where() : s.key(k.substr(dot + 1)),
                      std::string(e.what()).substr(k.size() + 2));
  }
  return m;
}

StreamSpec parse_stream(Section s) {
  StreamSpec d;
  const auto u32 = [&](const std::string& k, std::uint32_t def) {
    const std::int64_t v = s.integer(k, def);
    if (v < 0 || v > std::numeric_limits<std::uint32_t>::max())
      throw ConfigError(s.key(k), "out of range");
    return static_cast<std::uint32_t>(v);
  };
  d.n_fields = u32("n_fields", d.n_fields);
  d.vocab_per_field = u32("vocab_per_field", d.vocab_per_field);
  d.zipf_exponent = s.real("zipf_exponent", d.zipf_exponent);
  d.base_ctr = s.real("base_ctr", d.base_ctr);
  d.drift_period = s.integer("drift_period", d.drift_period);
  d.drift_magnitude = s.real("drift_magnitude", d.drift_magnitude);
  d.ground_truth_dim = nonneg(
      s.integer("ground_truth_dim", static_cast<std::int64_t>(d.ground_truth_dim)),
      s.key("ground_truth_dim"));
  d.weight_scale = s.real("weight_scale", d.weight_scale);
  s.finish();
  d.validate();
  return d;
}

SamplerPolicy parse_sampler(Section s) {
  SamplerPolicy p;
  const std::string signal = s.text("signal", "uniform_negative");
  const double rate = s.real("rate", 1.0);
  if (signal == "uniform_negative")
    p.signal = UniformNegative{rate};
  else if (signal == "low_loss")
    p.signal = LowLoss{rate, s.real("loss_threshold", 0.0)};
  else if (signal == "count_uncertainty")
    p.signal = CountUncertainty{rate, s.real("count_scale", 1.0)};
  else
    throw ConfigError(s.key("signal"),
                      "expected uniform_negative, low_loss or count_uncertainty");
  const std::string schedule = s.text("schedule", "continuous");
  if (schedule == "continuous") {
    p.schedule = Continuous{};
  } else if (schedule == "cutoff") {
    if (!s.has("t_cut")) throw ConfigError(s.key("t_cut"), "required for cutoff");
    p.schedule = Cutoff{s.integer("t_cut", 0)};
  } else {
    throw ConfigError(s.key("schedule"), "expected continuous or cutoff");
  }
  s.finish();
  return p;
}

DistillPolicy policy_from_name(const std::string& name, double alpha,
                               const std::string& key) {
  DistillPolicy p;
  p.alpha = alpha;
  if (name == "none") {
    p.schedule = NoDistill{};
  } else if (name == "continuous") {
    p.schedule = ContinuousDistill{};
  } else if (name.rfind("cutover-", 0) == 0) {
    const std::string f = name.substr(8);
    char* end = nullptr;
    const double v = std::strtod(f.c_str(), &end);
    if (f.empty() || end != f.c_str() + f.size())
      throw ConfigError(key, "bad cutover fraction in \"" + name + "\"");
    p.schedule = Cutover{v};
  } else {
    throw ConfigError(key, "expected none, continuous or cutover-<fraction>, got \"" +
                               name + "\"");
  }
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(key, e.what());
  }
  return p;
}

DistillPolicy parse_distill_policy(Section s) {
  const double alpha = s.real("alpha", 0.5);
  const std::string sched = s.text("schedule", "none");
  std::string name = sched;
  if (sched == "cutover") name = "cutover-" + format_real(s.real("fraction", 0.8));
  const DistillPolicy p = policy_from_name(name, alpha, s.key("schedule"));
  s.finish();
  return p;
}

TrialConfig parse_trial(Section s) {
  TrialConfig c;
  c.hist_start = s.integer("hist_start", 0);
  c.hist_end = s.required_integer("hist_end");
  c.online_end = s.integer("online_end", c.hist_end);
  c.model = parse_model(s.child("model"));
  c.learning_rate = s.real("learning_rate", c.learning_rate);
  c.sampler = parse_sampler(s.child("sampler"));
  c.distill = parse_distill_policy(s.child("distill"));
  c.window = s.integer("window", c.window);
  c.timestamps_per_day = s.integer("timestamps_per_day", c.window);
  {
    Section conv = s.child("convergence");
    c.conv_epsilon = conv.real("epsilon", c.conv_epsilon);
    const std::int64_t k = conv.integer("patience", c.conv_patience);
    if (k < 1 || k > 1'000'000)
      throw ConfigError(conv.key("patience"), "must be in [1, 1e6]");
    c.conv_patience = static_cast<int>(k);
    conv.finish();
  }
  c.cost.kappa = s.real("cost_kappa", c.cost.kappa);
  const std::int64_t fw = s.integer("final_windows", 0);
  if (fw < 0 || fw > 1'000'000'000)
    throw ConfigError(s.key("final_windows"), "must be in [0, 1e9]");
  c.final_windows = static_cast<int>(fw);
  c.trace_decisions = s.boolean("trace_decisions", false);
  s.finish();
  return c;
}

ScheduleKind parse_schedule_kind(const json& v, const std::string& key) {
  if (v == "continuous") return ScheduleKind::continuous;
  if (v == "cutoff") return ScheduleKind::cutoff;
  throw ConfigError(key, "expected \"continuous\" or \"cutoff\"");
}

std::vector<double> real_list(const json& arr, const std::string& key) {
  std::vector<double> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number())
      throw ConfigError(key + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(arr[i].get<double>());
  }
  return out;
}

void parse_downsampling(Section s, ExperimentFile& f) {
  DownsamplingSpec& d = f.downsampling;
  d.rates = real_list(s.array("rates"), s.key("rates"));
  if (s.has("schedules")) {
    d.schedules.clear();
    const json& arr = s.array("schedules");
    for (std::size_t i = 0; i < arr.size(); ++i)
      d.schedules.push_back(parse_schedule_kind(
          arr[i], s.key("schedules") + "[" + std::to_string(i) + "]"));
  }
  d.cutoff_fraction = s.real("cutoff_fraction", d.cutoff_fraction);
  d.baseline_start = s.integer("baseline_start", 0);
  s.finish();
}

void parse_distill(Section s, ExperimentFile& f) {
  DistillExperimentSpec& d = f.distill.spec;
  {
    Section t = s.child("teacher");
    if (!s.has("teacher")) throw ConfigError(t.where(), "required");
    d.teacher.arch = parse_model(t.child("model"));
    d.teacher.start = t.integer("start", 0);
    d.teacher.learning_rate = t.real("learning_rate", kDefaultLearningRate);
    if (t.has("checkpoint")) f.distill.teacher_checkpoint = t.text("checkpoint", "");
    t.finish();
  }
  const json& starts = s.array("start_dates");
  for (std::size_t i = 0; i < starts.size(); ++i)
    d.start_dates.push_back(Section::as_integer(
        starts[i], s.key("start_dates") + "[" + std::to_string(i) + "]"));
  const double alpha = s.real("alpha", 0.5);
  const json& pols = s.array("policies");
  for (std::size_t i = 0; i < pols.size(); ++i) {
    const std::string key = s.key("policies") + "[" + std::to_string(i) + "]";
    if (!pols[i].is_string()) throw ConfigError(key, "expected a string");
    d.policies.push_back(policy_from_name(pols[i].get<std::string>(), alpha, key));
  }
  d.epsilon = s.real("epsilon", f.trial.conv_epsilon);
  s.finish();
}

void parse_isocompute(Section s, ExperimentFile& f) {
  IsoSection& d = f.isocompute;
  d.budgets = real_list(s.array("budgets"), s.key("budgets"));
  if (d.budgets.empty()) throw ConfigError(s.key("budgets"), "must not be empty");
  const json& models = s.array("models");
  for (std::size_t i = 0; i < models.size(); ++i)
    d.models.push_back(parse_model(
        Section(models[i], s.key("models") + "[" + std::to_string(i) + "]")));
  const std::string knob = s.text("knob", "rate");
  if (knob == "rate")
    d.knob = IsoKnob::rate;
  else if (knob == "history")
    d.knob = IsoKnob::history;
  else
    throw ConfigError(s.key("knob"), "expected \"rate\" or \"history\"");
  d.min_examples = s.integer("min_examples", 0);
  s.finish();
}

// Re-keys validation errors raised by library types ("trial.window" etc.)
// so every message names a path in the document.
template <typename F>
void with_prefix(const std::string& prefix, F&& f) {
  try {
    f();
  } catch (const BudgetError&) {
    throw;
  } catch (const ConfigError& e) {
    const std::string& k = e.key();
    if (k == prefix || k.rfind(prefix + ".", 0) == 0) throw;
    throw ConfigError(prefix + "." + k,
                      std::string(e.what()).substr(k.size() + 2));
  }
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single: return "single";
    case ExperimentKind::downsampling: return "downsampling";
    case ExperimentKind::distill: return "distill";
    case ExperimentKind::isocompute: return "isocompute";
  }
  return "single";
}

void ExperimentFile::set_seed(std::uint64_t s) {
  seed = s;
  stream.seed = s;
  trial.seed = s;
  downsampling.base.seed = s;
  distill.spec.base.seed = s;
  distill.spec.teacher.seed = s;
}

std::vector<IsoComputeSpec> ExperimentFile::iso_specs() const {
  std::vector<IsoComputeSpec> out;
  for (double b : isocompute.budgets) {
    IsoComputeSpec s;
    s.budget = b;
    s.sizes = isocompute.models;
    s.base = trial;
    s.min_examples = isocompute.min_examples;
    s.knob = isocompute.knob;
    out.push_back(s);
  }
  return out;
}

void ExperimentFile::validate() const {
  if (parallelism < 1) throw ConfigError("parallelism", "must be >= 1");
  stream.validate();
  with_prefix("trial", [&] { trial.validate(); });
  switch (kind) {
    case ExperimentKind::single:
      if (trial.distill.enabled())
        throw ConfigError("trial.distill",
                          "single runs have no teacher; use kind \"distill\"");
      break;
    case ExperimentKind::downsampling:
      with_prefix("downsampling", [&] { downsampling.validate(); });
      break;
    case ExperimentKind::distill:
      with_prefix("distill", [&] { distill.spec.validate(); });
      break;
    case ExperimentKind::isocompute:
      for (const IsoComputeSpec& s : iso_specs())
        with_prefix("isocompute", [&] { s.validate(); });
      if (isocompute.models.size() < 3)
        throw ConfigError("isocompute.models", "a sweep needs at least 3 sizes");
      break;
  }
}

ExperimentFile parse_experiment(const std::string& text,
                                const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto p = msg.find("parse error");
    if (p != std::string::npos) msg = msg.substr(p);
    throw ConfigError(origin, msg);
  }
  Section root(doc, "");
  ExperimentFile f;
  const std::string kind = root.text("kind", "");
  if (kind == "single")
    f.kind = ExperimentKind::single;
  else if (kind == "downsampling")
    f.kind = ExperimentKind::downsampling;
  else if (kind == "distill")
    f.kind = ExperimentKind::distill;
  else if (kind == "isocompute")
    f.kind = ExperimentKind::isocompute;
  else
    throw ConfigError("kind",
                      "expected single, downsampling, distill or isocompute");

  const std::int64_t seed = root.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed", "must be >= 0");
  const std::int64_t par = root.integer("parallelism", 1);
  if (par < 1 || par > 4096) throw ConfigError("parallelism", "must be in [1, 4096]");
  f.parallelism = static_cast<int>(par);
  f.output_dir = root.text("output_dir", "");
  if (!root.has("stream")) throw ConfigError("stream", "required");
  f.stream = parse_stream(root.child("stream"));
  if (!root.has("trial")) throw ConfigError("trial", "required");
  f.trial = parse_trial(root.child("trial"));

  const std::string section = to_string(f.kind);
  for (const char* other : {"downsampling", "distill", "isocompute"})
    if (section != other && root.has(other))
      throw ConfigError(other, "section does not apply to kind \"" + section + "\"");
  if (f.kind != ExperimentKind::single && !root.has(section))
    throw ConfigError(section, "required for kind \"" + section + "\"");

  f.downsampling.base = f.trial;
  f.distill.spec.base = f.trial;
  switch (f.kind) {
    case ExperimentKind::single: break;
    case ExperimentKind::downsampling: parse_downsampling(root.child(section), f); break;
    case ExperimentKind::distill: parse_distill(root.child(section), f); break;
    case ExperimentKind::isocompute: parse_isocompute(root.child(section), f); break;
  }
  root.finish();
  f.set_seed(static_cast<std::uint64_t>(seed));
  f.validate();
  return f;
}

ExperimentFile load_experiment(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path, "cannot open config file");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_experiment(ss.str(), path);
}

json model_to_json(const ModelArch& m) {
  return {{"kind", m.kind == ArchKind::linear ? "linear" : "mlp"},
          {"dimension", m.hash.dimension},
          {"salt", m.hash.salt},
          {"hidden", m.hidden},
          {"param_count", m.param_count()}};
}

namespace {

json sampler_to_json(const SamplerPolicy& p) {
  json j;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        j["rate"] = s.rate;
        if constexpr (std::is_same_v<S, UniformNegative>) {
          j["signal"] = "uniform_negative";
        } else if constexpr (std::is_same_v<S, LowLoss>) {
          j["signal"] = "low_loss";
          j["loss_threshold"] = s.loss_threshold;
        } else {
          j["signal"] = "count_uncertainty";
          j["count_scale"] = s.count_scale;
        }
      },
      p.signal);
  if (const auto* c = std::get_if<Cutoff>(&p.schedule)) {
    j["schedule"] = "cutoff";
    j["t_cut"] = c->t_cut;
  } else {
    j["schedule"] = "continuous";
  }
  return j;
}

json trial_to_json(const TrialConfig& c) {
  return {{"hist_start", c.hist_start},
          {"hist_end", c.hist_end},
          {"online_end", c.online_end},
          {"model", model_to_json(c.model)},
          {"learning_rate", c.learning_rate},
          {"sampler", sampler_to_json(c.sampler)},
          {"distill", {{"alpha", c.distill.alpha}, {"policy", c.distill.describe()}}},
          {"window", c.window},
          {"timestamps_per_day", c.timestamps_per_day},
          {"convergence", {{"epsilon", c.conv_epsilon}, {"patience", c.conv_patience}}},
          {"cost_kappa", c.cost.kappa},
          {"final_windows", c.final_windows},
          {"trace_decisions", c.trace_decisions}};
}

}  // namespace

json config_echo(const ExperimentFile& f) {
  const StreamSpec& s = f.stream;
  json j = {{"kind", to_string(f.kind)},
            {"seed", f.seed},
            {"stream",
             {{"n_fields", s.n_fields},
              {"vocab_per_field", s.vocab_per_field},
              {"zipf_exponent", s.zipf_exponent},
              {"base_ctr", s.base_ctr},
              {"drift_period", s.drift_period},
              {"drift_magnitude", s.drift_magnitude},
              {"ground_truth_dim", s.ground_truth_dim},
              {"weight_scale", s.weight_scale}}},
            {"trial", trial_to_json(f.trial)}};
  switch (f.kind) {
    case ExperimentKind::single: break;
    case ExperimentKind::downsampling: {
      const DownsamplingSpec& d = f.downsampling;
      json sched = json::array();
      for (ScheduleKind k : d.schedules) sched.push_back(to_string(k));
      j["downsampling"] = {{"rates", d.rates},
                           {"schedules", sched},
                           {"cutoff_fraction", d.cutoff_fraction},
                           {"baseline_start", d.baseline_start}};
      break;
    }
    case ExperimentKind::distill: {
      const DistillExperimentSpec& d = f.distill.spec;
      json pols = json::array();
      for (const DistillPolicy& p : d.policies) pols.push_back(p.describe());
      json teacher = {{"model", model_to_json(d.teacher.arch)},
                      {"start", d.teacher.start},
                      {"learning_rate", d.teacher.learning_rate}};
      if (f.distill.teacher_checkpoint)
        teacher["checkpoint"] = *f.distill.teacher_checkpoint;
      j["distill"] = {{"teacher", teacher},
                      {"start_dates", d.start_dates},
                      {"policies", pols},
                      {"alpha", d.policies.front().alpha},
                      {"epsilon", d.epsilon}};
      break;
    }
    case ExperimentKind::isocompute: {
      json models = json::array();
      for (const ModelArch& m : f.isocompute.models) models.push_back(model_to_json(m));
      j["isocompute"] = {{"budgets", f.isocompute.budgets},
                         {"models", models},
                         {"knob", f.isocompute.knob == IsoKnob::rate ? "rate" : "history"},
                         {"min_examples", f.isocompute.min_examples}};
      break;
    }
  }
  return j;
}

}  // namespace ctrlab

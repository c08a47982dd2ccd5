#include <set>

#include "cotscope/pipeline.hpp"
#include "io.hpp"

#ifndef COTSCOPE_VERSION
#define COTSCOPE_VERSION "0.0.0"
#endif

namespace cotscope {

std::string version_string() { return std::string("cotscope ") + COTSCOPE_VERSION; }

namespace {

using io::json;

// Typed access to one config object with field-path error messages.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  ~Fields() = default;

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(path_ + "." + it.key() + ": unknown field");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string sub(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const auto* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ValidationError(sub(key) + ": wrong type");
      }
    }
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) throw ValidationError(sub(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void count(const std::string& key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw ValidationError(sub(key) + ": expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = (base / s).lexically_normal();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ContinuationTemplate parse_template(const json& j, const std::string& path) {
  Fields f(j, path);
  ContinuationTemplate t;
  f.get("user", t.user);
  f.get("assistant_prefill", t.assistant_prefill);
  f.reject_unknown();
  return t;
}

json template_json(const ContinuationTemplate& t) {
  return {{"user", t.user}, {"assistant_prefill", t.assistant_prefill}};
}

std::map<Selector, Direction> parse_direction_set(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  std::map<Selector, Direction> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    Selector s;
    try {
      s = parse_selector(it.key());
    } catch (const ValidationError&) {
      throw ValidationError(path + "." + it.key() + ": unknown selector");
    }
    if (!it->is_string()) throw ValidationError(path + "." + it.key() + ": expected \"lower\" or \"higher\"");
    try {
      out[s] = parse_direction(it->get<std::string>());
    } catch (const ValidationError&) {
      throw ValidationError(path + "." + it.key() + ": expected \"lower\" or \"higher\"");
    }
  }
  return out;
}

json direction_set_json(const std::map<Selector, Direction>& m) {
  json j = json::object();
  for (const auto& [s, d] : m) j[std::string(to_string(s))] = to_string(d);
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (questions.empty()) throw ValidationError("config.questions: required");
  if (traces.empty()) throw ValidationError("config.traces: required");
  if (cache_dir.empty()) throw ValidationError("config.cache_dir: required");
  if (max_concurrency == 0) throw ValidationError("config.max_concurrency: must be positive");
  if (retry.max_attempts < 1) throw ValidationError("config.retry.max_attempts: must be at least 1");
  if (min_rows == 0) throw ValidationError("config.thresholds.min_rows: must be positive");
  if (bootstrap_replicates < 2) throw ValidationError("config.thresholds.bootstrap_replicates: must be at least 2");
  if (pool_size == 0) throw ValidationError("config.thresholds.pool_size: must be positive");
  if (continuations == 0) throw ValidationError("config.thresholds.continuations: must be positive");
  if (entropy_samples == 0) throw ValidationError("config.entropy.samples: must be positive");
  if (entropy_fractions.size() < 2) throw ValidationError("config.entropy.fractions: need at least two checkpoints");
  for (std::size_t i = 0; i < entropy_fractions.size(); ++i) {
    const double f = entropy_fractions[i];
    if (!(f >= 0.0 && f < 1.0))
      throw ValidationError("config.entropy.fractions[" + std::to_string(i) + "]: must lie in [0, 1)");
  }
  if (entropy_fractions.front() != 0.0) throw ValidationError("config.entropy.fractions[0]: must be 0");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(judge.temperature) || !unit(judge.top_p)) throw ValidationError("config.models.judge: sampling out of range");
  if (!unit(extractor.temperature) || !unit(extractor.top_p))
    throw ValidationError("config.models.extractor: sampling out of range");
  if (!unit(continuation.temperature)) throw ValidationError("config.continuation.temperature: must lie in [0, 1]");
  if (!unit(continuation.top_p)) throw ValidationError("config.continuation.top_p: must lie in [0, 1]");
  if (!(sigma_floor > 0.0)) throw ValidationError("config.glmm.sigma_floor: must be positive");
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  Fields root(doc, "config");
  root.path("questions", c.questions, base_dir);
  root.path("traces", c.traces, base_dir);
  root.path("out_dir", c.out_dir, base_dir);
  root.path("cache_dir", c.cache_dir, base_dir);
  {
    std::filesystem::path kw;
    root.path("keywords", kw, base_dir);
    if (!kw.empty()) c.keywords = kw;
  }
  root.get("offline", c.offline);
  root.get("endpoint", c.endpoint);
  root.get("api_key_env", c.api_key_env);
  root.count("max_concurrency", c.max_concurrency);
  root.get("seed", c.seed);
  root.get("spearman", c.spearman);

  if (const auto* r = root.find("retry")) {
    Fields f(*r, "config.retry");
    int attempts = c.retry.max_attempts;
    std::size_t base = static_cast<std::size_t>(c.retry.base_delay.count());
    std::size_t cap = static_cast<std::size_t>(c.retry.max_delay.count());
    f.get("max_attempts", attempts);
    f.count("base_delay_ms", base);
    f.count("max_delay_ms", cap);
    f.reject_unknown();
    c.retry.max_attempts = attempts;
    c.retry.base_delay = std::chrono::milliseconds(base);
    c.retry.max_delay = std::chrono::milliseconds(cap);
  }
  if (const auto* m = root.find("models")) {
    Fields f(*m, "config.models");
    if (const auto* j = f.find("judge")) {
      Fields g(*j, "config.models.judge");
      g.get("model_id", c.judge.model_id);
      g.number("temperature", c.judge.temperature);
      g.number("top_p", c.judge.top_p);
      g.count("context_window", c.judge.context_window);
      g.reject_unknown();
    }
    if (const auto* j = f.find("extractor")) {
      Fields g(*j, "config.models.extractor");
      g.get("model_id", c.extractor.model_id);
      g.number("temperature", c.extractor.temperature);
      g.number("top_p", c.extractor.top_p);
      g.reject_unknown();
    }
    f.get("summary", c.summary_model);
    f.reject_unknown();
  }
  if (const auto* j = root.find("continuation")) {
    Fields f(*j, "config.continuation");
    f.get("model_id", c.continuation.model_id);
    f.number("temperature", c.continuation.temperature);
    f.number("top_p", c.continuation.top_p);
    if (const auto* mt = f.find("max_tokens")) {
      if (!mt->is_number_integer()) throw ValidationError("config.continuation.max_tokens: expected an integer");
      c.continuation.max_tokens = mt->get<int>();
    }
    if (const auto* t = f.find("template")) c.continuation.default_template = parse_template(*t, "config.continuation.template");
    if (const auto* pm = f.find("per_model")) {
      if (!pm->is_object()) throw ValidationError("config.continuation.per_model: expected an object");
      for (auto it = pm->begin(); it != pm->end(); ++it)
        c.continuation.per_model[it.key()] = parse_template(*it, "config.continuation.per_model." + it.key());
    }
    f.reject_unknown();
  }
  if (const auto* d = root.find("directions")) {
    Fields f(*d, "config.directions");
    if (const auto* def = f.find("defaults")) {
      for (const auto& [s, dir] : parse_direction_set(*def, "config.directions.defaults")) c.directions.defaults[s] = dir;
    }
    if (const auto* pm = f.find("per_model")) {
      if (!pm->is_object()) throw ValidationError("config.directions.per_model: expected an object");
      c.directions.per_model.clear();
      for (auto it = pm->begin(); it != pm->end(); ++it)
        c.directions.per_model[it.key()] = parse_direction_set(*it, "config.directions.per_model." + it.key());
    }
    f.reject_unknown();
  }
  if (const auto* t = root.find("thresholds")) {
    Fields f(*t, "config.thresholds");
    f.count("min_rows", c.min_rows);
    f.count("bootstrap_replicates", c.bootstrap_replicates);
    f.count("pool_size", c.pool_size);
    f.count("continuations", c.continuations);
    f.count("context_window", c.judge.context_window);
    f.reject_unknown();
  }
  if (const auto* g = root.find("glmm")) {
    Fields f(*g, "config.glmm");
    f.number("sigma_floor", c.sigma_floor);
    f.reject_unknown();
  }
  if (const auto* e = root.find("entropy")) {
    Fields f(*e, "config.entropy");
    f.get("fractions", c.entropy_fractions);
    f.count("samples", c.entropy_samples);
    if (const auto* mt = f.find("max_traces")) {
      if (!mt->is_number_integer() || mt->get<long long>() < 0)
        throw ValidationError("config.entropy.max_traces: expected a non-negative integer");
      c.entropy_max_traces = mt->get<std::size_t>();
    }
    f.reject_unknown();
  }
  if (const auto* e = root.find("edit")) {
    Fields f(*e, "config.edit");
    f.get("only_incorrect", c.edit_only_incorrect);
    f.reject_unknown();
  }
  root.find("version");  // written by run_config_json; accepted and ignored
  root.reject_unknown();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  return parse_run_config(text, std::filesystem::absolute(path).parent_path());
}

std::string run_config_json(const RunConfig& c) {
  json j;
  j["version"] = version_string();
  j["questions"] = c.questions.generic_string();
  j["traces"] = c.traces.generic_string();
  j["cache_dir"] = c.cache_dir.generic_string();
  j["keywords"] = c.keywords ? json(c.keywords->generic_string()) : json(nullptr);
  j["offline"] = c.offline;
  j["endpoint"] = c.endpoint;
  j["api_key_env"] = c.api_key_env;
  j["max_concurrency"] = c.max_concurrency;
  j["retry"] = {{"max_attempts", c.retry.max_attempts},
                {"base_delay_ms", c.retry.base_delay.count()},
                {"max_delay_ms", c.retry.max_delay.count()}};
  j["seed"] = c.seed;
  j["spearman"] = c.spearman;
  j["models"] = {{"judge",
                  {{"model_id", c.judge.model_id}, {"temperature", c.judge.temperature}, {"top_p", c.judge.top_p},
                   {"context_window", c.judge.context_window}}},
                 {"extractor",
                  {{"model_id", c.extractor.model_id},
                   {"temperature", c.extractor.temperature},
                   {"top_p", c.extractor.top_p}}},
                 {"summary", c.summary_model}};
  json per_model = json::object();
  for (const auto& [m, t] : c.continuation.per_model) per_model[m] = template_json(t);
  j["continuation"] = {{"model_id", c.continuation.model_id},
                       {"temperature", c.continuation.temperature},
                       {"top_p", c.continuation.top_p},
                       {"max_tokens", c.continuation.max_tokens ? json(*c.continuation.max_tokens) : json(nullptr)},
                       {"template", template_json(c.continuation.default_template)},
                       {"per_model", per_model}};
  json dir_pm = json::object();
  for (const auto& [m, set] : c.directions.per_model) dir_pm[m] = direction_set_json(set);
  j["directions"] = {{"defaults", direction_set_json(c.directions.defaults)}, {"per_model", dir_pm}};
  j["thresholds"] = {{"min_rows", c.min_rows},
                     {"bootstrap_replicates", c.bootstrap_replicates},
                     {"pool_size", c.pool_size},
                     {"continuations", c.continuations}};
  j["glmm"] = {{"sigma_floor", c.sigma_floor}};
  j["entropy"] = {{"fractions", c.entropy_fractions},
                  {"samples", c.entropy_samples},
                  {"max_traces", c.entropy_max_traces ? json(*c.entropy_max_traces) : json(nullptr)}};
  j["edit"] = {{"only_incorrect", c.edit_only_incorrect}};
  return j.dump(2) + "\n";
}

}  // namespace cotscope

#include "icogs/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace icogs {

namespace {

using nlohmann::json;

const char* mode_name(InitMode m) { return m == InitMode::kPerturbed ? "perturbed" : "random_depth"; }

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return {
      {"dataset", c.dataset},
      {"output", c.output},
      {"image_size", c.image_size},
      {"features", c.features},
      {"init",
       {{"mode", mode_name(c.init.mode)},
        {"points", c.init.points},
        {"noise", c.init.noise},
        {"depth_min", c.init.depth_min},
        {"depth_max", c.init.depth_max}}},
      {"lambda_mpc", t.lambda_mpc},
      {"lambda_smooth", t.lambda_smooth},
      {"lambda_app", t.lambda_app},
      {"lambda_consis", t.lambda_consis},
      {"lambda_dssim", t.lambda_dssim},
      {"total_iters", t.total_iters},
      {"stage2_start", t.stage2_start},
      {"stage3_start", t.stage3_start},
      {"k", t.k},
      {"m", t.m},
      {"tau_factor", t.tau_factor},
      {"alpha_edge", t.alpha_edge},
      {"virtual_radius", t.virtual_radius},
      {"n_virtual", t.n_virtual},
      {"cycle_filter", t.cycle_filter},
      {"seed", t.seed},
      {"deterministic", t.deterministic},
      {"threads", t.threads},
      {"log_every", t.log_every},
      {"densify", t.densify},
      {"densify_every", t.densify_every},
      {"densify_until", t.densify_until},
      {"densify_grad", t.densify_thresholds.grad},
      {"densify_scale", t.densify_thresholds.scale},
      {"densify_min_opacity", t.densify_thresholds.min_opacity},
      {"kernel_dilation", t.render.kernel_dilation},
      {"lr",
       {{"position", t.lr.position},
        {"position_final", t.lr.position_final},
        {"opacity", t.lr.opacity},
        {"scale", t.lr.scale},
        {"rotation", t.lr.rotation},
        {"color", t.lr.color}}},
  };
}

void merge(json& base, const json& user, const std::string& prefix, std::vector<std::string>& unknown) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      unknown.push_back(key);
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it->is_object()) throw ConfigError("config key '" + key + "' must be an object");
      merge(slot, *it, key, unknown);
    } else {
      slot = *it;
    }
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string key = spec.substr(0, eq), text = spec.substr(eq + 1);
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key in override: " + key);
    node = &(*node)[part];
  }
  if (node->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  *node = value;
}

template <typename T>
T field(const json& doc, const std::string& path) {
  const json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  try {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (node->is_number_float()) {
        const double d = node->get<double>();
        if (d != static_cast<double>(static_cast<T>(d))) throw ConfigError("config key '" + path + "' must be an integer");
        return static_cast<T>(d);
      }
      if (!node->is_number_integer()) throw ConfigError("config key '" + path + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (node->is_number_integer() && !node->is_number_unsigned())
          throw ConfigError("config key '" + path + "' must be non-negative");
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!node->is_boolean()) throw ConfigError("config key '" + path + "' must be true or false");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!node->is_number()) throw ConfigError("config key '" + path + "' must be a number");
    } else {
      if (!node->is_string()) throw ConfigError("config key '" + path + "' must be a string");
    }
    return node->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + path + "': " + e.what());
  }
}

RunConfig from_json(const json& d) {
  RunConfig c;
  c.dataset = field<std::string>(d, "dataset");
  c.output = field<std::string>(d, "output");
  c.image_size = field<int>(d, "image_size");
  c.features = field<std::string>(d, "features");
  const std::string mode = field<std::string>(d, "init.mode");
  if (mode == "perturbed") c.init.mode = InitMode::kPerturbed;
  else if (mode == "random_depth") c.init.mode = InitMode::kRandomDepth;
  else throw ConfigError("config key 'init.mode' must be 'perturbed' or 'random_depth', got '" + mode + "'");
  c.init.points = field<int>(d, "init.points");
  c.init.noise = field<double>(d, "init.noise");
  c.init.depth_min = field<double>(d, "init.depth_min");
  c.init.depth_max = field<double>(d, "init.depth_max");
  TrainConfig& t = c.train;
  t.lambda_mpc = field<double>(d, "lambda_mpc");
  t.lambda_smooth = field<double>(d, "lambda_smooth");
  t.lambda_app = field<double>(d, "lambda_app");
  t.lambda_consis = field<double>(d, "lambda_consis");
  t.lambda_dssim = field<double>(d, "lambda_dssim");
  t.total_iters = field<int>(d, "total_iters");
  t.stage2_start = field<int>(d, "stage2_start");
  t.stage3_start = field<int>(d, "stage3_start");
  t.k = field<int>(d, "k");
  t.m = field<int>(d, "m");
  t.tau_factor = field<double>(d, "tau_factor");
  t.alpha_edge = field<double>(d, "alpha_edge");
  t.virtual_radius = field<double>(d, "virtual_radius");
  t.n_virtual = field<int>(d, "n_virtual");
  t.cycle_filter = field<bool>(d, "cycle_filter");
  t.seed = field<uint64_t>(d, "seed");
  t.deterministic = field<bool>(d, "deterministic");
  t.threads = field<int>(d, "threads");
  t.log_every = field<int>(d, "log_every");
  t.densify = field<bool>(d, "densify");
  t.densify_every = field<int>(d, "densify_every");
  t.densify_until = field<int>(d, "densify_until");
  t.densify_thresholds.grad = field<double>(d, "densify_grad");
  t.densify_thresholds.scale = field<double>(d, "densify_scale");
  t.densify_thresholds.min_opacity = field<double>(d, "densify_min_opacity");
  t.render.kernel_dilation = field<double>(d, "kernel_dilation");
  t.lr.position = field<double>(d, "lr.position");
  t.lr.position_final = field<double>(d, "lr.position_final");
  t.lr.opacity = field<double>(d, "lr.opacity");
  t.lr.scale = field<double>(d, "lr.scale");
  t.lr.rotation = field<double>(d, "lr.rotation");
  t.lr.color = field<double>(d, "lr.color");

  if (c.init.points < 1) throw ConfigError("config key 'init.points' must be >= 1");
  if (c.init.noise < 0) throw ConfigError("config key 'init.noise' must be >= 0");
  if (c.image_size < 0) throw ConfigError("config key 'image_size' must be >= 0");
  if (t.render.kernel_dilation < 0) throw ConfigError("config key 'kernel_dilation' must be >= 0");
  t.validate();
  return c;
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  json user;
  try {
    user = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json doc = to_json(RunConfig{});
  std::vector<std::string> unknown;
  merge(doc, user, "", unknown);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_run_config("", overrides);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string dump_run_config(const RunConfig& config) { return to_json(config).dump(2); }

} // namespace icogs

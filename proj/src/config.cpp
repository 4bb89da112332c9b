#include "bas/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace bas {

namespace {

using json = nlohmann::ordered_json;

json defaults_json() {
  RunConfig d;
  json j;
  j["seed"] = d.seed;
  j["dataset"] = {{"num_classes", d.dataset.num_classes},
                  {"train_samples", d.dataset.train_samples},
                  {"eval_samples", d.dataset.eval_samples},
                  {"image_size", d.dataset.image_size},
                  {"mode", d.dataset.mode},
                  {"objects_min", d.dataset.objects_min},
                  {"objects_max", d.dataset.objects_max},
                  {"clutter", d.dataset.clutter},
                  {"textured", d.dataset.textured},
                  {"fine_grained", d.dataset.fine_grained},
                  {"occlusion", d.dataset.occlusion},
                  {"min_area_frac", d.dataset.min_area_frac},
                  {"max_area_frac", d.dataset.max_area_frac},
                  {"seed", d.dataset.seed}};
  json blocks = json::array();
  for (const auto& b : d.model.blocks) blocks.push_back({b.channels, b.stride});
  j["model"] = {{"num_classes", d.model.num_classes},
                {"input_size", d.model.input_size},
                {"blocks", blocks},
                {"generator_stage", d.model.generator_stage},
                {"legacy_relu", d.model.legacy_relu},
                {"agnostic_head", d.model.agnostic_head}};
  j["train"] = {{"alpha", d.train.weights.alpha},
                {"beta", d.train.weights.beta},
                {"lambda", d.train.weights.lambda},
                {"epsilon", d.train.weights.epsilon},
                {"lr_init", d.train.lr_init},
                {"momentum", d.train.momentum},
                {"rho", d.train.rho},
                {"weight_decay", d.train.weight_decay},
                {"epochs", d.train.epochs},
                {"batch_size", d.train.batch_size},
                {"mode", d.train.mode},
                {"flip", d.train.flip},
                {"crop", d.train.crop},
                {"seed", d.train.seed}};
  j["eval"] = {{"k", d.eval.k},
               {"theta_box", d.eval.theta_box},
               {"theta_bg", d.eval.theta_bg},
               {"deltas", d.eval.deltas},
               {"strict_iou", d.eval.strict_iou},
               {"force_include_gt", d.eval.force_include_gt},
               {"combine", d.eval.combine}};
  j["explore"] = {{"n_min", d.explore.n_min},
                  {"n_max", d.explore.n_max},
                  {"bins", d.explore.bins},
                  {"split", d.explore.split}};
  j["search"] = {{"grid", d.search.grid}, {"split", d.search.split}};
  return j;
}

// Merge `user` into `base`, collecting the dotted paths the user touched and
// rejecting keys the schema does not know.
void merge_into(json& base, const json& user, const std::string& prefix,
                std::set<std::string>& touched) {
  if (!user.is_object())
    throw std::invalid_argument("config: expected an object at \"" +
                                (prefix.empty() ? "<root>" : prefix) + "\"");
  for (const auto& [key, val] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw std::invalid_argument("config: unknown key \"" + path + "\"");
    if (base[key].is_object()) {
      merge_into(base[key], val, path, touched);
    } else {
      base[key] = val;
      touched.insert(path);
    }
  }
}

void apply_override(json& base, const std::string& spec, std::set<std::string>& touched) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("config: override \"" + spec + "\" is not key=value");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json* cur = &base;
  size_t pos = 0;
  std::string walked;
  while (true) {
    size_t dot = key.find('.', pos);
    std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    walked = walked.empty() ? part : walked + "." + part;
    if (!cur->contains(part))
      throw std::invalid_argument("config: unknown key \"" + walked + "\"");
    cur = &(*cur)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (cur->is_object())
    throw std::invalid_argument("config: key \"" + key + "\" is a section, not a value");
  json parsed = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  *cur = parsed.is_discarded() ? json(raw) : parsed;
  touched.insert(key);
}

template <typename T>
T get_as(const json& j, const std::string& path) {
  const json* cur = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string part = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    cur = &cur->at(part);
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  try {
    return cur->get<T>();
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key \"" + path + "\" has the wrong type (value " +
                                cur->dump() + ")");
  }
}

}  // namespace

RunConfig load_run_config(const std::optional<std::string>& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_flag) {
  json j = defaults_json();
  std::set<std::string> touched;

  if (config_path) {
    std::ifstream is(*config_path);
    if (!is) throw std::invalid_argument("config: cannot open \"" + *config_path + "\"");
    json user = json::parse(is, nullptr, /*allow_exceptions=*/false);
    if (user.is_discarded())
      throw std::invalid_argument("config: \"" + *config_path + "\" is not valid JSON");
    merge_into(j, user, "", touched);
  }
  for (const auto& o : overrides) apply_override(j, o, touched);
  if (seed_flag) {
    j["seed"] = *seed_flag;
    touched.insert("seed");
  }

  // Cross-section fallbacks for keys the user left alone.
  if (!touched.count("model.num_classes")) j["model"]["num_classes"] = j["dataset"]["num_classes"];
  if (!touched.count("model.input_size")) j["model"]["input_size"] = j["dataset"]["image_size"];
  if (!touched.count("dataset.seed")) j["dataset"]["seed"] = j["seed"];
  if (!touched.count("train.seed")) j["train"]["seed"] = j["seed"];
  if (!touched.count("train.beta"))
    j["train"]["beta"] = get_as<double>(j, "train.alpha") + get_as<double>(j, "train.lambda");

  RunConfig cfg;
  cfg.seed = get_as<uint64_t>(j, "seed");
  cfg.dataset.num_classes = get_as<int>(j, "dataset.num_classes");
  cfg.dataset.train_samples = get_as<int>(j, "dataset.train_samples");
  cfg.dataset.eval_samples = get_as<int>(j, "dataset.eval_samples");
  cfg.dataset.image_size = get_as<int>(j, "dataset.image_size");
  cfg.dataset.mode = get_as<std::string>(j, "dataset.mode");
  cfg.dataset.objects_min = get_as<int>(j, "dataset.objects_min");
  cfg.dataset.objects_max = get_as<int>(j, "dataset.objects_max");
  cfg.dataset.clutter = get_as<int>(j, "dataset.clutter");
  cfg.dataset.textured = get_as<bool>(j, "dataset.textured");
  cfg.dataset.fine_grained = get_as<bool>(j, "dataset.fine_grained");
  cfg.dataset.occlusion = get_as<bool>(j, "dataset.occlusion");
  cfg.dataset.min_area_frac = get_as<double>(j, "dataset.min_area_frac");
  cfg.dataset.max_area_frac = get_as<double>(j, "dataset.max_area_frac");
  cfg.dataset.seed = get_as<uint64_t>(j, "dataset.seed");

  cfg.model.num_classes = get_as<int>(j, "model.num_classes");
  cfg.model.input_size = get_as<int>(j, "model.input_size");
  cfg.model.blocks.clear();
  const json& blocks = j["model"]["blocks"];
  if (!blocks.is_array() || blocks.empty())
    throw std::invalid_argument("config: key \"model.blocks\" must be a non-empty array");
  for (const auto& b : blocks) {
    if (!b.is_array() || b.size() != 2)
      throw std::invalid_argument("config: entries of \"model.blocks\" must be [channels, stride]");
    cfg.model.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
  }
  cfg.model.generator_stage = get_as<int>(j, "model.generator_stage");
  cfg.model.legacy_relu = get_as<bool>(j, "model.legacy_relu");
  cfg.model.agnostic_head = get_as<bool>(j, "model.agnostic_head");

  cfg.train.weights.alpha = get_as<double>(j, "train.alpha");
  cfg.train.weights.beta = get_as<double>(j, "train.beta");
  cfg.train.weights.lambda = get_as<double>(j, "train.lambda");
  cfg.train.weights.epsilon = get_as<double>(j, "train.epsilon");
  cfg.train.lr_init = get_as<double>(j, "train.lr_init");
  cfg.train.momentum = get_as<double>(j, "train.momentum");
  cfg.train.rho = get_as<double>(j, "train.rho");
  cfg.train.weight_decay = get_as<double>(j, "train.weight_decay");
  cfg.train.epochs = get_as<int>(j, "train.epochs");
  cfg.train.batch_size = get_as<int>(j, "train.batch_size");
  cfg.train.mode = get_as<std::string>(j, "train.mode");
  cfg.train.flip = get_as<bool>(j, "train.flip");
  cfg.train.crop = get_as<bool>(j, "train.crop");
  cfg.train.seed = get_as<uint64_t>(j, "train.seed");

  cfg.eval.k = get_as<int>(j, "eval.k");
  cfg.eval.theta_box = get_as<double>(j, "eval.theta_box");
  cfg.eval.theta_bg = get_as<double>(j, "eval.theta_bg");
  cfg.eval.deltas = get_as<std::vector<double>>(j, "eval.deltas");
  cfg.eval.strict_iou = get_as<bool>(j, "eval.strict_iou");
  cfg.eval.force_include_gt = get_as<bool>(j, "eval.force_include_gt");
  cfg.eval.combine = get_as<std::string>(j, "eval.combine");

  cfg.explore.n_min = get_as<int>(j, "explore.n_min");
  cfg.explore.n_max = get_as<int>(j, "explore.n_max");
  cfg.explore.bins = get_as<int>(j, "explore.bins");
  cfg.explore.split = get_as<std::string>(j, "explore.split");

  cfg.search.grid = get_as<int>(j, "search.grid");
  cfg.search.split = get_as<std::string>(j, "search.split");
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
  json j = defaults_json();
  j["seed"] = cfg.seed;
  j["dataset"]["num_classes"] = cfg.dataset.num_classes;
  j["dataset"]["train_samples"] = cfg.dataset.train_samples;
  j["dataset"]["eval_samples"] = cfg.dataset.eval_samples;
  j["dataset"]["image_size"] = cfg.dataset.image_size;
  j["dataset"]["mode"] = cfg.dataset.mode;
  j["dataset"]["objects_min"] = cfg.dataset.objects_min;
  j["dataset"]["objects_max"] = cfg.dataset.objects_max;
  j["dataset"]["clutter"] = cfg.dataset.clutter;
  j["dataset"]["textured"] = cfg.dataset.textured;
  j["dataset"]["fine_grained"] = cfg.dataset.fine_grained;
  j["dataset"]["occlusion"] = cfg.dataset.occlusion;
  j["dataset"]["min_area_frac"] = cfg.dataset.min_area_frac;
  j["dataset"]["max_area_frac"] = cfg.dataset.max_area_frac;
  j["dataset"]["seed"] = cfg.dataset.seed;
  json blocks = json::array();
  for (const auto& b : cfg.model.blocks) blocks.push_back({b.channels, b.stride});
  j["model"]["num_classes"] = cfg.model.num_classes;
  j["model"]["input_size"] = cfg.model.input_size;
  j["model"]["blocks"] = blocks;
  j["model"]["generator_stage"] = cfg.model.generator_stage;
  j["model"]["legacy_relu"] = cfg.model.legacy_relu;
  j["model"]["agnostic_head"] = cfg.model.agnostic_head;
  j["train"]["alpha"] = cfg.train.weights.alpha;
  j["train"]["beta"] = cfg.train.weights.beta;
  j["train"]["lambda"] = cfg.train.weights.lambda;
  j["train"]["epsilon"] = cfg.train.weights.epsilon;
  j["train"]["lr_init"] = cfg.train.lr_init;
  j["train"]["momentum"] = cfg.train.momentum;
  j["train"]["rho"] = cfg.train.rho;
  j["train"]["weight_decay"] = cfg.train.weight_decay;
  j["train"]["epochs"] = cfg.train.epochs;
  j["train"]["batch_size"] = cfg.train.batch_size;
  j["train"]["mode"] = cfg.train.mode;
  j["train"]["flip"] = cfg.train.flip;
  j["train"]["crop"] = cfg.train.crop;
  j["train"]["seed"] = cfg.train.seed;
  j["eval"]["k"] = cfg.eval.k;
  j["eval"]["theta_box"] = cfg.eval.theta_box;
  j["eval"]["theta_bg"] = cfg.eval.theta_bg;
  j["eval"]["deltas"] = cfg.eval.deltas;
  j["eval"]["strict_iou"] = cfg.eval.strict_iou;
  j["eval"]["force_include_gt"] = cfg.eval.force_include_gt;
  j["eval"]["combine"] = cfg.eval.combine;
  j["explore"]["n_min"] = cfg.explore.n_min;
  j["explore"]["n_max"] = cfg.explore.n_max;
  j["explore"]["bins"] = cfg.explore.bins;
  j["explore"]["split"] = cfg.explore.split;
  j["search"]["grid"] = cfg.search.grid;
  j["search"]["split"] = cfg.search.split;
  return j.dump(2);
}

}  // namespace bas

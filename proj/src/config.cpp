#include "heatcorr/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace heatcorr {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCategory::config, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing "# ..." comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

// Net count of unclosed [ and { outside string literals.
int open_brackets(const std::string& s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (in_string) continue;
    if (s[i] == '[' || s[i] == '{') ++depth;
    if (s[i] == ']' || s[i] == '}') --depth;
  }
  return depth;
}

json parse_value(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    // Bare words are accepted as strings; anything that looks structured must be valid JSON.
    if (text.find_first_of("[]{}\",") == std::string::npos && !text.empty()) return text;
    config_error(where + ": cannot parse value '" + text + "'");
  }
}

void set_key(json& root, const std::string& dotted, json value, const std::string& where) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size()) {
    config_error(where + ": key '" + dotted + "' must be written as section.key or inside a [section]");
  }
  root[dotted.substr(0, dot)][dotted.substr(dot + 1)] = std::move(value);
}

json parse_text(const std::string& text) {
  json root = json::object();
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = "config line " + std::to_string(lineno);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_error(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) config_error(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) config_error(where + ": missing key");
    // Arrays and objects may continue over following lines until their brackets close.
    std::string more;
    while (open_brackets(value) > 0 && std::getline(is, more)) {
      ++lineno;
      value += " " + trim(strip_comment(more));
    }
    set_key(root, section.empty() || key.find('.') != std::string::npos ? key : section + "." + key,
            parse_value(value, where), where);
  }
  return root;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

bool is_mesh_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".off" || ext == ".ply";
}

// A directory expands to its mesh files in name order; an array lists files.
std::vector<fs::path> mesh_list(const json& v, const fs::path& base, const std::string& key) {
  std::vector<fs::path> out;
  auto add = [&](const std::string& entry) {
    const fs::path p = resolve(base, entry);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && is_mesh_file(e.path())) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) config_error(key + ": directory " + p.string() + " has no .off/.ply meshes");
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.push_back(p);
    }
  };
  if (v.is_string()) {
    add(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) config_error(key + ": entries must be strings");
      add(e.get<std::string>());
    }
  } else {
    config_error(key + ": expected a path or an array of paths");
  }
  return out;
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    config_error(key + ": wrong value type (" + v.dump() + ")");
  }
}

void apply(RunConfig& c, const json& root, const fs::path& base) {
  static const std::set<std::string> known = {
      "data.train", "data.val", "data.test_pairs", "spectral.basis_size", "descriptor.kind", "descriptor.bins",
      "descriptor.radius_fraction", "descriptor.external_dir", "network.layers", "network.seed",
      "optimizer.learning_rate", "optimizer.beta1", "optimizer.beta2", "optimizer.epsilon", "optimizer.ridge",
      "schedule.kind", "schedule.stages", "schedule.total_iterations", "training.subsample",
      "training.validation_every", "training.checkpoint_every", "training.max_vertices", "training.time_samples",
      "runtime.cache_dir", "runtime.output_dir", "runtime.threads"};
  for (const auto& [section, entries] : root.items()) {
    if (!entries.is_object()) config_error("config: '" + section + "' is not a section");
    for (const auto& [key, value] : entries.items()) {
      const std::string full = section + "." + key;
      if (!known.count(full)) config_error("unknown config key '" + full + "'");
      if (full == "data.train") c.train_meshes = mesh_list(value, base, full);
      else if (full == "data.val") c.val_meshes = mesh_list(value, base, full);
      else if (full == "data.test_pairs") {
        if (!value.is_array()) config_error(full + ": expected an array of [source, target, ground_truth]");
        c.test_pairs.clear();
        for (const auto& p : value) {
          if (!p.is_array() || p.size() < 2 || p.size() > 3) {
            config_error(full + ": each entry is [source, target] or [source, target, ground_truth]");
          }
          TestPair tp{resolve(base, get_as<std::string>(p[0], full)), resolve(base, get_as<std::string>(p[1], full)),
                      {}};
          if (p.size() == 3) {
            const auto gt = get_as<std::string>(p[2], full);
            if (gt != "identity") tp.ground_truth = resolve(base, gt);
          }
          c.test_pairs.push_back(tp);
        }
      } else if (full == "spectral.basis_size") c.basis_size = get_as<Index>(value, full);
      else if (full == "descriptor.kind") {
        const auto k = get_as<std::string>(value, full);
        if (k == "shot") c.descriptor_source = DescriptorSource::shot;
        else if (k == "external") c.descriptor_source = DescriptorSource::external;
        else config_error(full + ": expected \"shot\" or \"external\"");
      } else if (full == "descriptor.bins") c.shot.bins = get_as<int>(value, full);
      else if (full == "descriptor.radius_fraction") c.shot.radius_fraction = get_as<double>(value, full);
      else if (full == "descriptor.external_dir") c.external_descriptor_dir = resolve(base, get_as<std::string>(value, full));
      else if (full == "network.layers") c.layers = get_as<int>(value, full);
      else if (full == "network.seed") c.seed = get_as<std::uint64_t>(value, full);
      else if (full == "optimizer.learning_rate") c.learning_rate = get_as<double>(value, full);
      else if (full == "optimizer.beta1") c.beta1 = get_as<double>(value, full);
      else if (full == "optimizer.beta2") c.beta2 = get_as<double>(value, full);
      else if (full == "optimizer.epsilon") c.epsilon = get_as<double>(value, full);
      else if (full == "optimizer.ridge") c.ridge = get_as<double>(value, full);
      else if (full == "schedule.kind") c.schedule_kind = parse_schedule_kind(get_as<std::string>(value, full));
      else if (full == "schedule.stages") {
        c.stages.clear();
        if (value.is_string() && value.get<std::string>() == "auto") continue;
        if (!value.is_array()) config_error(full + ": expected \"auto\" or [[start_iteration, time], ...]");
        for (const auto& s : value) {
          if (!s.is_array() || s.size() != 2) config_error(full + ": each stage is [start_iteration, time]");
          c.stages.push_back({get_as<std::int64_t>(s[0], full), get_as<double>(s[1], full)});
        }
      } else if (full == "schedule.total_iterations") c.total_iterations = get_as<std::int64_t>(value, full);
      else if (full == "training.subsample") {
        c.subsample = value.is_string() && value.get<std::string>() == "auto" ? 0 : get_as<Index>(value, full);
      } else if (full == "training.validation_every") c.validation_every = get_as<std::int64_t>(value, full);
      else if (full == "training.checkpoint_every") c.checkpoint_every = get_as<std::int64_t>(value, full);
      else if (full == "training.max_vertices") c.max_train_vertices = get_as<Index>(value, full);
      else if (full == "training.time_samples") c.time_samples = get_as<Index>(value, full);
      else if (full == "runtime.cache_dir") c.cache_dir = resolve(base, get_as<std::string>(value, full));
      else if (full == "runtime.output_dir") c.output_dir = resolve(base, get_as<std::string>(value, full));
      else if (full == "runtime.threads") c.threads = get_as<unsigned>(value, full);
    }
  }
}

std::vector<std::string> path_strings(const std::vector<fs::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

}  // namespace

Index effective_subsample(const RunConfig& config, Index n_vertices) {
  if (config.subsample > 0) return std::min(config.subsample, n_vertices);
  return n_vertices <= kSubsampleAutoLimit ? n_vertices : kSubsampleAutoSize;
}

std::string RunConfig::snapshot() const {
  json j;
  j["data"]["train"] = path_strings(train_meshes);
  j["data"]["val"] = path_strings(val_meshes);
  j["data"]["test_pairs"] = json::array();
  for (const auto& p : test_pairs) {
    j["data"]["test_pairs"].push_back({p.source.string(), p.target.string(),
                                       p.ground_truth.empty() ? std::string("identity") : p.ground_truth.string()});
  }
  j["spectral"]["basis_size"] = basis_size;
  j["descriptor"]["kind"] = descriptor_source == DescriptorSource::shot ? "shot" : "external";
  j["descriptor"]["bins"] = shot.bins;
  j["descriptor"]["radius_fraction"] = shot.radius_fraction;
  j["descriptor"]["external_dir"] = external_descriptor_dir.string();
  j["network"]["layers"] = layers;
  j["network"]["seed"] = seed;
  j["optimizer"] = {{"learning_rate", learning_rate}, {"beta1", beta1}, {"beta2", beta2},
                    {"epsilon", epsilon}, {"ridge", ridge}};
  j["schedule"]["kind"] = to_string(schedule_kind);
  if (stages.empty()) {
    j["schedule"]["stages"] = "auto";
  } else {
    j["schedule"]["stages"] = json::array();
    for (const auto& s : stages) j["schedule"]["stages"].push_back({s.start_iteration, s.time});
  }
  j["schedule"]["total_iterations"] = total_iterations;
  j["training"] = {{"subsample", subsample},
                   {"validation_every", validation_every},
                   {"checkpoint_every", checkpoint_every},
                   {"max_vertices", max_train_vertices},
                   {"time_samples", time_samples}};
  j["runtime"] = {{"cache_dir", cache_dir.string()}, {"output_dir", output_dir.string()}, {"threads", threads}};
  return j.dump();
}

void RunConfig::validate(bool check_paths) const {
  if (basis_size < 1) config_error("spectral.basis_size must be >= 1");
  if (shot.bins < 2) config_error("descriptor.bins must be >= 2");
  if (!(shot.radius_fraction > 0.0 && shot.radius_fraction < 1.0)) {
    config_error("descriptor.radius_fraction must lie in (0, 1)");
  }
  if (descriptor_source == DescriptorSource::external && external_descriptor_dir.empty()) {
    config_error("descriptor.external_dir is required when descriptor.kind = \"external\"");
  }
  if (layers < 1) config_error("network.layers must be >= 1");
  if (!(learning_rate > 0.0)) config_error("optimizer.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    config_error("optimizer.beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) config_error("optimizer.epsilon must be positive");
  if (!(ridge >= 0.0)) config_error("optimizer.ridge must be nonnegative");
  if (total_iterations < 1) config_error("schedule.total_iterations must be >= 1");
  if (!stages.empty()) Schedule{schedule_kind, stages, total_iterations}.validate();
  if (schedule_kind == ScheduleKind::geodesic && stages.size() > 1) {
    config_error("schedule.stages: a geodesic schedule has a single stage");
  }
  if (subsample < 0) config_error("training.subsample must be >= 0 (0 = auto)");
  if (validation_every < 1 || checkpoint_every < 1) {
    config_error("training.validation_every and checkpoint_every must be >= 1");
  }
  if (max_train_vertices < 3) config_error("training.max_vertices must be >= 3");
  if (time_samples < 1) config_error("training.time_samples must be >= 1");
  if (check_paths) {
    auto need = [](const fs::path& p, const std::string& what) {
      if (!fs::exists(p)) config_error(what + " does not exist: " + p.string());
    };
    for (const auto& p : train_meshes) need(p, "training mesh");
    for (const auto& p : val_meshes) need(p, "validation mesh");
    for (const auto& p : test_pairs) {
      need(p.source, "test source mesh");
      need(p.target, "test target mesh");
      if (!p.ground_truth.empty()) need(p.ground_truth, "ground-truth file");
    }
    if (descriptor_source == DescriptorSource::external) need(external_descriptor_dir, "descriptor.external_dir");
  }
}

RunConfig parse_config(const std::string& text, const fs::path& base_dir, const std::vector<std::string>& overrides) {
  json root = parse_text(text);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) config_error("override '" + o + "' must look like section.key=value");
    set_key(root, trim(o.substr(0, eq)), parse_value(trim(o.substr(eq + 1)), "override '" + o + "'"),
            "override '" + o + "'");
  }
  RunConfig c;
  c.cache_dir = base_dir / "cache";
  c.output_dir = base_dir / "out";
  apply(c, root, base_dir);
  if (c.schedule_kind == ScheduleKind::geodesic && c.stages.empty()) c.stages = {{0, 0.0}};
  return c;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::io, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path(), overrides);
}

}  // namespace heatcorr

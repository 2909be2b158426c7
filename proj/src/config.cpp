#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "icgmvs/pipeline.hpp"

namespace icgmvs {

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> out;
  std::string section;
  std::size_t pos = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;
  while (pos < text.size()) {
    const std::size_t line_start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_start);
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("empty section name", line_start);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_start);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_start);
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw UsageError(key + ": '" + v + "' is not a number");
  return d;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  if (v.empty() || v[0] == '-') throw UsageError(key + ": '" + v + "' is not a non-negative integer");
  const unsigned long long d = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0' || errno == ERANGE) throw UsageError(key + ": '" + v + "' is not a non-negative integer");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": '" + v + "' is not a boolean");
}

template <typename T, typename Parse>
std::array<T, kNumStages> parse_list(const std::string& key, const std::string& v, Parse parse) {
  std::array<T, kNumStages> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (n >= kNumStages) throw UsageError(key + ": expected " + std::to_string(kNumStages) + " values");
    out[n++] = static_cast<T>(parse(key, b == std::string::npos ? std::string() : item.substr(b, e - b + 1)));
  }
  if (n != kNumStages) throw UsageError(key + ": expected " + std::to_string(kNumStages) + " values");
  return out;
}

template <typename T>
std::string join(const std::array<T, kNumStages>& a) {
  std::ostringstream s;
  s.precision(17);
  for (std::size_t i = 0; i < a.size(); ++i) s << (i ? "," : "") << a[i];
  return s.str();
}

struct Key {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

// Shortest decimal form that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

#define ICG_SIZE_KEY(NAME, FIELD)                                                                        \
  Key {                                                                                                  \
    NAME, [](PipelineConfig& c, const std::string& v) { c.FIELD = static_cast<std::size_t>(parse_u64(NAME, v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.FIELD); }                                   \
  }
#define ICG_REAL_KEY(NAME, FIELD)                                                                     \
  Key {                                                                                               \
    NAME, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); },           \
        [](const PipelineConfig& c) { return num(c.FIELD); }                                          \
  }
#define ICG_BOOL_KEY(NAME, FIELD)                                                                     \
  Key {                                                                                               \
    NAME, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },             \
        [](const PipelineConfig& c) { return std::string(c.FIELD ? "true" : "false"); }              \
  }
#define ICG_SIZE_LIST_KEY(NAME, FIELD)                                                                \
  Key {                                                                                               \
    NAME, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_list<std::size_t>(NAME, v, parse_u64); }, \
        [](const PipelineConfig& c) { return join(c.FIELD); }                                         \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      Key{"seed", [](PipelineConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
          [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      Key{"threads", [](PipelineConfig& c, const std::string& v) { c.threads = static_cast<int>(parse_u64("threads", v)); },
          [](const PipelineConfig& c) { return std::to_string(c.threads); }},
      Key{"checkpoint", [](PipelineConfig& c, const std::string& v) { c.checkpoint = v; },
          [](const PipelineConfig& c) { return c.checkpoint; }},
      ICG_SIZE_LIST_KEY("network.depth_counts", network.depth_counts),
      ICG_SIZE_LIST_KEY("network.groups", network.groups),
      ICG_SIZE_LIST_KEY("network.channels", network.channels),
      ICG_REAL_KEY("network.temperature", network.temperature),
      ICG_SIZE_KEY("network.num_prev", network.num_prev),
      ICG_SIZE_KEY("network.num_curr", network.num_curr),
      ICG_SIZE_KEY("network.reduction", network.reduction),
      ICG_SIZE_KEY("network.regularizer_base", network.regularizer_base),
      ICG_BOOL_KEY("network.intra_view_fusion", network.intra_view_fusion),
      ICG_BOOL_KEY("network.cross_view_aggregation", network.cross_view_aggregation),
      ICG_REAL_KEY("train.learning_rate", train.learning_rate),
      ICG_SIZE_KEY("train.epochs", train.epochs),
      ICG_SIZE_KEY("train.iterations", train.iterations),
      ICG_SIZE_KEY("train.batch_size", train.batch_size),
      Key{"train.stage_weights",
          [](PipelineConfig& c, const std::string& v) {
            c.train.stage_weights = parse_list<double>("train.stage_weights", v, parse_double);
          },
          [](const PipelineConfig& c) { return join(c.train.stage_weights); }},
      ICG_REAL_KEY("train.beta1", train.beta1),
      ICG_REAL_KEY("train.beta2", train.beta2),
      ICG_REAL_KEY("train.adam_eps", train.adam_eps),
      ICG_REAL_KEY("fusion.conf_thresh", fusion.conf_thresh),
      ICG_REAL_KEY("fusion.thresh_c", fusion.thresh_c),
      ICG_REAL_KEY("fusion.thresh_d", fusion.thresh_d),
      ICG_SIZE_KEY("fusion.min_consistent_views", fusion.min_consistent_views),
      ICG_BOOL_KEY("fusion.dynamic", fusion.dynamic),
      ICG_BOOL_KEY("fusion.average_points", fusion.average_points),
      Key{"data.dataset", [](PipelineConfig& c, const std::string& v) { c.data.dataset = v; },
          [](const PipelineConfig& c) { return c.data.dataset; }},
      ICG_SIZE_KEY("data.num_views", data.num_views),
      ICG_SIZE_KEY("synth.num_scenes", data.synth.num_scenes),
      ICG_SIZE_KEY("synth.views_per_scene", data.synth.views_per_scene),
      ICG_SIZE_KEY("synth.height", data.synth.height),
      ICG_SIZE_KEY("synth.width", data.synth.width),
      ICG_SIZE_KEY("synth.num_objects", data.synth.scene.num_objects),
      ICG_BOOL_KEY("synth.textureless_patch", data.synth.scene.textureless_patch),
      ICG_REAL_KEY("synth.radius", data.synth.rig.radius),
      ICG_REAL_KEY("synth.arc_deg", data.synth.rig.arc_deg),
      ICG_REAL_KEY("synth.focal_scale", data.synth.rig.focal_scale),
      ICG_REAL_KEY("eval.outlier_cap", eval.outlier_cap),
      ICG_REAL_KEY("eval.tau", eval.tau),
  };
  return table;
}

#undef ICG_SIZE_KEY
#undef ICG_REAL_KEY
#undef ICG_BOOL_KEY
#undef ICG_SIZE_LIST_KEY

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& entries) {
  for (const auto& [name, value] : entries) {
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (k.name == name) match = &k;
    if (!match) {
      std::string valid;
      for (const auto& k : keys()) valid += "\n  " + k.name;
      throw UsageError("unknown config key '" + name + "'; valid keys:" + valid);
    }
    match->set(cfg, value);
  }
  cfg.data.synth.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  std::map<std::string, std::string> entries;
  try {
    entries = parse_ini(read_file(path));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  apply_config(cfg, entries);
  cfg.validate();
  return cfg;
}

std::string dump_config(const PipelineConfig& cfg) {
  std::ostringstream s;
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      s << "\n[" << sec << "]\n";
      section = sec;
    }
    s << key << " = " << k.get(cfg) << '\n';
  }
  return s.str();
}

void PipelineConfig::validate() const {
  network.validate();
  train.validate();
  fusion.validate();
  if (data.num_views < 2) throw ParameterError("data.num_views must be at least 2");
  if (!(eval.outlier_cap > 0.0) || !(eval.tau > 0.0)) throw ParameterError("eval thresholds must be positive");
  if (threads < 1) throw ParameterError("threads must be at least 1");
  if (data.synth.height % 8 || data.synth.width % 8 || data.synth.height == 0 || data.synth.width == 0)
    throw ParameterError("synthetic image size must be a positive multiple of 8");
}

}  // namespace icgmvs

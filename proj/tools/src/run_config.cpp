#include "flexmarket_cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "flexmarket/netmodel.hpp"

#ifndef FLEXMARKET_DATA_DIR
#define FLEXMARKET_DATA_DIR "data"
#endif

namespace flexmarket::cli {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": '" + v + "' is not a number");
  return x;
}

template <class T>
T to_integer(const std::string& key, const std::string& v) {
  T x{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": '" + v + "' is not an integer");
  return x;
}

std::string num(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

CapacitySpec to_capacity(const std::string& key, std::string v) {
  CapacitySpec c;
  if (!v.empty() && (v.back() == 'x' || v.back() == 'X')) {
    c.relative = true;
    v.pop_back();
  }
  c.value = to_double(key, v);
  if (!(c.value > 0)) throw ConfigError(key + ": capacity must be positive");
  return c;
}

std::string capacity_text(const CapacitySpec& c) { return num(c.value) + (c.relative ? "x" : ""); }

bool is_unset(const std::string& v) {
  const std::string l = lower(v);
  return l.empty() || l == "none" || l == "auto" || l == "default";
}

}  // namespace

std::string RunConfig::effective_label() const { return label.empty() ? to_string(spread) : label; }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "label",        "case",        "root",      "spread",     "vband",  "polygon-sides",
      "load-scale",   "line-capacity", "interface-capacity", "interface-mode", "q-widen",
      "seed",         "formulation", "samples",   "sigma-cost", "sigma-qty",
      "checkpoint",   "threads",     "out",       "format"};
  return keys;
}

void set_field(RunConfig& cfg, const std::string& key_in, const std::string& value_in) {
  const std::string key = lower(trim(key_in));
  const std::string v = trim(value_in);
  try {
    if (key == "label") {
      cfg.label = v;
    } else if (key == "case") {
      if (v.empty()) throw ConfigError("case: empty value");
      cfg.case_path = v;
    } else if (key == "root") {
      cfg.root = is_unset(v) ? std::nullopt : std::optional<int>(to_integer<int>(key, v));
    } else if (key == "spread") {
      cfg.spread = parse_spread(v);
    } else if (key == "vband") {
      const auto parts = split(v, ':');
      if (parts.size() != 2) throw ConfigError("vband: expected lo:hi, got '" + v + "'");
      const double lo = to_double(key, parts[0]), hi = to_double(key, parts[1]);
      if (!(lo > 0) || !(lo < hi)) throw ConfigError("vband: need 0 < lo < hi");
      cfg.v_lo = lo;
      cfg.v_hi = hi;
    } else if (key == "polygon-sides") {
      cfg.polygon_sides = to_integer<int>(key, v);
      if (cfg.polygon_sides < 4 || cfg.polygon_sides % 2) throw ConfigError("polygon-sides: need an even number >= 4");
    } else if (key == "load-scale") {
      cfg.load_scale = to_double(key, v);
      if (!(cfg.load_scale >= 0)) throw ConfigError("load-scale: must be non-negative");
    } else if (key == "line-capacity") {
      cfg.line_capacity.clear();
      if (is_unset(v)) return;
      for (const auto& item : split(v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("line-capacity: expected bus:capacity, got '" + item + "'");
        LineCapacity lc;
        lc.bus = to_integer<int>(key, trim(item.substr(0, colon)));
        lc.capacity = to_capacity(key, trim(item.substr(colon + 1)));
        cfg.line_capacity.push_back(lc);
      }
    } else if (key == "interface-capacity") {
      cfg.interface_capacity = is_unset(v) ? std::nullopt : std::optional<CapacitySpec>(to_capacity(key, v));
    } else if (key == "interface-mode") {
      cfg.interface_mode = parse_interface_mode(v);
    } else if (key == "q-widen") {
      cfg.q_widen = is_unset(v) ? std::nullopt : std::optional<double>(to_double(key, v));
      if (cfg.q_widen && !(*cfg.q_widen >= 0)) throw ConfigError("q-widen: must be non-negative");
    } else if (key == "seed") {
      cfg.seed = to_integer<std::uint64_t>(key, v);
    } else if (key == "formulation") {
      std::vector<Formulation> fs;
      for (const auto& t : split(v, ',')) fs.push_back(parse_formulation(t));
      if (fs.empty()) throw ConfigError("formulation: empty list");
      cfg.formulations = fs;
    } else if (key == "samples") {
      cfg.mc.samples = to_integer<int>(key, v);
      if (cfg.mc.samples < 1) throw ConfigError("samples: need at least one");
    } else if (key == "sigma-cost") {
      cfg.mc.sigma_cost = to_double(key, v);
      if (!(cfg.mc.sigma_cost >= 0)) throw ConfigError("sigma-cost: must be non-negative");
    } else if (key == "sigma-qty") {
      cfg.mc.sigma_qty = to_double(key, v);
      if (!(cfg.mc.sigma_qty >= 0)) throw ConfigError("sigma-qty: must be non-negative");
    } else if (key == "checkpoint") {
      cfg.checkpoint = to_integer<int>(key, v);
      if (cfg.checkpoint < 1) throw ConfigError("checkpoint: must be positive");
    } else if (key == "threads") {
      cfg.threads = to_integer<unsigned>(key, v);
    } else if (key == "out") {
      if (v.empty()) throw ConfigError("out: empty value");
      cfg.out_dir = v;
    } else if (key == "format") {
      bool csv = false, json = false;
      for (const auto& t : split(lower(v), ',')) {
        if (t == "csv") {
          csv = true;
        } else if (t == "json") {
          json = true;
        } else {
          throw ConfigError("format: unknown format '" + t + "'");
        }
      }
      if (!csv && !json) throw ConfigError("format: empty list");
      cfg.write_csv = csv;
      cfg.write_json = json;
    } else {
      throw ConfigError("unknown config key '" + key_in + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> fields(const RunConfig& c) {
  std::string lines;
  for (const auto& lc : c.line_capacity) {
    if (!lines.empty()) lines += ',';
    lines += std::to_string(lc.bus) + ':' + capacity_text(lc.capacity);
  }
  std::string forms;
  for (Formulation f : c.formulations) forms += (forms.empty() ? "" : ",") + lower(to_string(f));
  std::string fmt = c.write_csv ? "csv" : "";
  if (c.write_json) fmt += fmt.empty() ? "json" : ",json";
  return {{"label", c.effective_label()},
          {"case", c.case_path},
          {"root", c.root ? std::to_string(*c.root) : "auto"},
          {"spread", lower(to_string(c.spread))},
          {"vband", num(c.v_lo) + ":" + num(c.v_hi)},
          {"polygon-sides", std::to_string(c.polygon_sides)},
          {"load-scale", num(c.load_scale)},
          {"line-capacity", lines.empty() ? "none" : lines},
          {"interface-capacity", c.interface_capacity ? capacity_text(*c.interface_capacity) : "default"},
          {"interface-mode", to_string(c.interface_mode)},
          {"q-widen", c.q_widen ? num(*c.q_widen) : "none"},
          {"seed", std::to_string(c.seed)},
          {"formulation", forms},
          {"samples", std::to_string(c.mc.samples)},
          {"sigma-cost", num(c.mc.sigma_cost)},
          {"sigma-qty", num(c.mc.sigma_qty)},
          {"checkpoint", std::to_string(c.checkpoint)},
          {"out", c.out_dir},
          {"format", fmt}};
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& item : items) {
    // CLI11 reports section headers as "++"/"--" markers.
    if (item.name == "++" || item.name == "--") continue;
    std::string value;
    for (const auto& part : item.inputs) value += (value.empty() ? "" : ",") + part;
    set_field(base, item.fullname(), value);
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string provenance_header(const RunConfig& cfg) {
  std::string out = "# flexmarket run configuration\n";
  for (const auto& [k, v] : fields(cfg)) out += "# " + k + " = " + v + "\n";
  return out;
}

nlohmann::json provenance_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : fields(cfg)) j[k] = v;
  return j;
}

std::filesystem::path resolve_case(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p(name);
  if (fs::is_regular_file(p)) return p;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("FLEXMARKET_DATA_DIR")) dirs.emplace_back(env);
  dirs.emplace_back(FLEXMARKET_DATA_DIR);
  for (const auto& d : dirs) {
    for (const fs::path& cand : {d / p, d / (name + ".m")})
      if (fs::is_regular_file(cand)) return cand;
  }
  throw ConfigError("case file '" + name + "' not found");
}

Scenario make_scenario(const RunConfig& cfg) {
  Scenario s;
  BuildOptions bo;
  bo.root_id = cfg.root;
  RadialNetwork net;
  try {
    net = build_radial(read_case_file(resolve_case(cfg.case_path)), bo);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("case " + cfg.case_path + ": " + e.what());
  }
  auto shared = std::make_shared<const RadialNetwork>(std::move(net));
  s.net = shared;
  s.profile = synthesize_base_supply(*shared, cfg.seed, cfg.load_scale);
  s.bids = generate_bids(s.profile, cfg.spread, *shared, cfg.seed);

  MarketInstance& inst = s.instance;
  inst.net = shared;
  inst.profile = s.profile;
  inst.bids = s.bids.bids;
  inst.v_lo = cfg.v_lo;
  inst.v_hi = cfg.v_hi;
  inst.polygon_sides = cfg.polygon_sides;
  inst.q_widen = cfg.q_widen;
  inst.interface_mode = cfg.interface_mode;

  std::optional<BaseFlow> base;
  auto resolve = [&](int bus, const CapacitySpec& c) {
    if (!c.relative) return c.value;
    if (!base) base = base_power_flow(*shared, s.profile, Formulation::kLP);
    const std::size_t i = shared->index_of(bus);
    const double flow = std::hypot(base->p[i], base->q[i]) * shared->base_mva;
    if (!(flow > 0)) throw ConfigError("relative capacity on branch " + std::to_string(bus) + " that carries no base flow");
    return c.value * flow;
  };
  try {
    for (const auto& lc : cfg.line_capacity) {
      if (lc.bus == shared->root_id()) throw ConfigError("line-capacity: use interface-capacity for the root");
      inst.line_capacity[lc.bus] = resolve(lc.bus, lc.capacity);
    }
    if (cfg.interface_capacity) inst.line_capacity[shared->root_id()] = resolve(shared->root_id(), *cfg.interface_capacity);
    inst.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const SolveFailure&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return s;
}

}  // namespace flexmarket::cli

#include "flexmarket/netmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <regex>
#include <sstream>

#include "flexmarket/error.hpp"

namespace flexmarket {

namespace {

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '\'') in_string = !in_string;
    if (line[k] == '%' && !in_string) return line.substr(0, k);
  }
  return line;
}

double parse_number(std::string_view tok, int line) {
  std::string t(tok);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("malformed number '" + std::string(tok) + "' in matrix literal", line);
  return value;
}

class MatrixReader {
 public:
  MatrixReader(std::string name, int start_line) : name_(std::move(name)), start_line_(start_line) {}

  // Consumes one line of matrix text; returns true when the closing bracket was seen.
  bool feed(const std::string& text, int line) {
    std::string token;
    auto flush_token = [&] {
      if (!token.empty()) {
        row_.push_back(parse_number(token, line));
        token.clear();
      }
    };
    for (char ch : text) {
      if (ch == ']') {
        flush_token();
        end_row(line);
        return true;
      }
      if (ch == ';') {
        flush_token();
        end_row(line);
      } else if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
        flush_token();
      } else if (ch == '[') {
        throw ParseError("nested '[' in matrix '" + name_ + "'", line);
      } else {
        token.push_back(ch);
      }
    }
    flush_token();
    end_row(line);  // a newline terminates a row as well
    return false;
  }

  std::vector<std::vector<double>> take() { return std::move(rows_); }
  int start_line() const { return start_line_; }

 private:
  void end_row(int line) {
    if (row_.empty()) return;
    if (!rows_.empty() && rows_.front().size() != row_.size())
      throw ParseError("row of matrix '" + name_ + "' has " + std::to_string(row_.size()) +
                           " columns, expected " + std::to_string(rows_.front().size()),
                       line);
    rows_.push_back(std::move(row_));
    row_.clear();
  }

  std::string name_;
  int start_line_;
  std::vector<double> row_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace

RawCase parse_case(std::string_view text) {
  static const std::regex kMatrixStart(R"(^\s*(?:mpc\.)?(\w+)\s*=\s*\[(.*)$)");
  static const std::regex kScalar(R"(^\s*(?:mpc\.)?(\w+)\s*=\s*([-+0-9.eE]+)\s*;?\s*$)");
  static const std::regex kModification(R"(^\s*(?:mpc\.)?(bus|gen|branch|baseMVA)\s*\()");

  RawCase out;
  std::optional<double> base_mva;
  std::map<std::string, std::vector<std::vector<double>>> tables;
  std::optional<MatrixReader> open;
  std::string open_name;

  std::istringstream in{std::string(text)};
  std::string raw_line;
  int line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    std::string line = strip_comment(raw_line);
    if (open) {
      if (open->feed(line, line_no)) {
        tables[open_name] = open->take();
        open.reset();
      }
      continue;
    }
    std::smatch m;
    if (std::regex_search(line, m, kMatrixStart)) {
      open_name = m[1].str();
      open.emplace(open_name, line_no);
      if (open->feed(m[2].str(), line_no)) {
        tables[open_name] = open->take();
        open.reset();
      }
    } else if (std::regex_search(line, m, kScalar)) {
      if (m[1].str() == "baseMVA") base_mva = parse_number(m[2].str(), line_no);
    } else if (std::regex_search(line, m, kModification)) {
      throw StructureError("line " + std::to_string(line_no) + ": table '" + m[1].str() +
                           "' is modified by MATLAB statements; convert the case to plain "
                           "tables first (scripts/convert_matpower_v2.py)");
    }
  }
  if (open)
    throw ParseError("unterminated matrix literal '" + open_name + "'", open->start_line());

  if (!base_mva) throw StructureError("missing required entry 'baseMVA'");
  out.base_mva = *base_mva;
  for (const char* name : {"bus", "gen", "branch"}) {
    if (!tables.count(name)) throw StructureError(std::string("missing required table '") + name + "'");
  }
  out.bus = std::move(tables["bus"]);
  out.gen = std::move(tables["gen"]);
  out.branch = std::move(tables["branch"]);
  if (out.bus.empty()) throw StructureError("table 'bus' is empty");
  if (out.bus.front().size() < static_cast<std::size_t>(mpcol::kMinBusColumns))
    throw StructureError("table 'bus' needs at least 13 columns");
  if (!out.branch.empty() &&
      out.branch.front().size() < static_cast<std::size_t>(mpcol::kMinBranchColumns))
    throw StructureError("table 'branch' needs at least 4 columns");
  return out;
}

RawCase read_case_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open case file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_case(ss.str());
}

std::size_t RadialNetwork::index_of(int bus_id) const {
  auto it = index_.find(bus_id);
  if (it == index_.end()) throw InstanceError("unknown bus id " + std::to_string(bus_id));
  return it->second;
}

struct NetworkBuilder {
  static RadialNetwork build(const RawCase& raw, const BuildOptions& opt) {
    RadialNetwork net;
    if (!(raw.base_mva > 0)) throw StructureError("baseMVA must be positive");
    net.base_mva = raw.base_mva;
    net.slack_voltage = opt.slack_voltage;
    if (!(opt.slack_voltage > 0)) throw InvalidParameter("slack voltage must be positive");

    const std::size_t n = raw.bus.size();
    std::optional<int> reference;
    double total_p = 0.0, total_q = 0.0;
    for (const auto& row : raw.bus) {
      Bus b;
      b.id = static_cast<int>(row[mpcol::kBusId]);
      b.base_load_p = row[mpcol::kPd];
      b.base_load_q = row[mpcol::kQd];
      b.shunt_g = row[mpcol::kGs] / raw.base_mva;
      b.shunt_b = -row[mpcol::kBs] / raw.base_mva;
      b.v_max = row[mpcol::kVmax];
      b.v_min = row[mpcol::kVmin];
      if (!(b.v_min > 0) || b.v_min > b.v_max)
        throw StructureError("bus " + std::to_string(b.id) + " has invalid voltage bounds");
      b.q_min = b.q_max = -b.base_load_q / raw.base_mva;
      if (net.index_.count(b.id)) throw StructureError("duplicate bus id " + std::to_string(b.id));
      net.index_[b.id] = net.buses.size();
      net.buses.push_back(b);
      if (static_cast<int>(row[mpcol::kBusType]) == 3 && !reference) reference = b.id;
      total_p += b.base_load_p;
      total_q += b.base_load_q;
    }

    const int root_id = opt.root_id ? *opt.root_id : reference.value_or(net.buses.front().id);
    if (!net.index_.count(root_id))
      throw InvalidParameter("root bus " + std::to_string(root_id) + " is not in the bus table");
    net.root_ = net.index_.at(root_id);

    const double total_s = std::hypot(total_p, total_q);
    const double default_cap = opt.interface_capacity.value_or(
        total_s > 0 ? 10.0 * total_s : 10.0 * raw.base_mva);
    const double line_default = opt.default_line_rating.value_or(default_cap);

    // Undirected adjacency over in-service branches.
    struct Edge {
      std::size_t a, b;
      double r, x, charging, rating;
    };
    std::vector<Edge> edges;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbour, edge)
    for (const auto& row : raw.branch) {
      if (row.size() > static_cast<std::size_t>(mpcol::kStatus) && row[mpcol::kStatus] == 0) continue;
      Edge e;
      e.a = net.index_of(static_cast<int>(row[mpcol::kFromBus]));
      e.b = net.index_of(static_cast<int>(row[mpcol::kToBus]));
      e.r = row[mpcol::kR];
      e.x = row[mpcol::kX];
      e.charging = row.size() > static_cast<std::size_t>(mpcol::kB) ? row[mpcol::kB] : 0.0;
      e.rating = row.size() > static_cast<std::size_t>(mpcol::kRateA) ? row[mpcol::kRateA] : 0.0;
      if (e.r < 0 || e.x < 0)
        throw StructureError("branch " + std::to_string(net.buses[e.a].id) + "-" +
                             std::to_string(net.buses[e.b].id) + " has negative impedance");
      if (e.r == 0 && e.x == 0)
        throw StructureError("branch " + std::to_string(net.buses[e.a].id) + "-" +
                             std::to_string(net.buses[e.b].id) + " has zero impedance");
      adj[e.a].push_back({e.b, edges.size()});
      adj[e.b].push_back({e.a, edges.size()});
      edges.push_back(e);
    }

    net.parent_.assign(n, -2);
    net.children_.assign(n, {});
    net.incoming_.assign(n, -1);
    std::vector<int> parent_edge(n, -1);
    net.parent_[net.root_] = -1;
    std::queue<std::size_t> frontier;
    frontier.push(net.root_);
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      net.order_.push_back(static_cast<int>(u));
      for (auto [v, eid] : adj[u]) {
        if (static_cast<int>(eid) == parent_edge[u]) continue;
        if (net.parent_[v] != -2) throw TopologyError(describe_cycle(net, u, v));
        net.parent_[v] = static_cast<int>(u);
        parent_edge[v] = static_cast<int>(eid);
        net.children_[u].push_back(static_cast<int>(v));
        frontier.push(v);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (net.parent_[i] == -2)
        throw TopologyError("network is disconnected: bus " + std::to_string(net.buses[i].id) +
                            " is not reachable from root " + std::to_string(root_id));
    }

    for (int iv : net.order_) {
      const auto v = static_cast<std::size_t>(iv);
      if (v == net.root_) continue;
      const Edge& e = edges[static_cast<std::size_t>(parent_edge[v])];
      Branch br;
      br.from_bus = net.buses[static_cast<std::size_t>(net.parent_[v])].id;
      br.to_bus = net.buses[v].id;
      br.r = e.r;
      br.x = e.x;
      br.s_max = e.rating > 0 ? e.rating : line_default;
      // Line charging appears as a capacitive shunt split over both ends.
      net.buses[e.a].shunt_b -= e.charging / 2.0;
      net.buses[e.b].shunt_b -= e.charging / 2.0;
      net.incoming_[v] = static_cast<int>(net.branches.size());
      net.branches.push_back(br);
    }
    net.interface = Branch{kUpperGridId, root_id, 0.0, 0.0, default_cap};
    if (!(net.interface.s_max > 0)) throw InvalidParameter("interface capacity must be positive");
    return net;
  }

  static std::string describe_cycle(const RadialNetwork& net, std::size_t u, std::size_t v) {
    // Closing edge u-v; walk both ends up to their common ancestor.
    auto path_to_root = [&](std::size_t k) {
      std::vector<std::size_t> p{k};
      while (net.parent_[p.back()] >= 0) p.push_back(static_cast<std::size_t>(net.parent_[p.back()]));
      return p;
    };
    auto pu = path_to_root(u);
    auto pv = path_to_root(v);
    std::size_t lca = net.root_;
    for (std::size_t a : pu) {
      if (std::find(pv.begin(), pv.end(), a) != pv.end()) {
        lca = a;
        break;
      }
    }
    std::ostringstream msg;
    msg << "network is not radial; cycle:";
    for (std::size_t a : pu) {
      msg << ' ' << net.buses[a].id;
      if (a == lca) break;
    }
    std::vector<std::size_t> tail;
    for (std::size_t a : pv) {
      if (a == lca) break;
      tail.push_back(a);
    }
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) msg << ' ' << net.buses[*it].id;
    msg << ' ' << net.buses[u].id;
    return msg.str();
  }
};

RadialNetwork build_radial(const RawCase& raw, const BuildOptions& options) {
  return NetworkBuilder::build(raw, options);
}

std::vector<int> bus_depths(const RadialNetwork& net) {
  std::vector<int> depth(net.bus_count(), 0);
  for (int v : net.topological_order()) {
    const int p = net.parent(static_cast<std::size_t>(v));
    depth[static_cast<std::size_t>(v)] = p < 0 ? 0 : depth[static_cast<std::size_t>(p)] + 1;
  }
  return depth;
}

std::map<int, int> leaf_depths(const RadialNetwork& net) {
  const auto depth = bus_depths(net);
  std::map<int, int> out;
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    if (net.children(i).empty() && i != net.root()) out[net.buses[i].id] = depth[i];
  }
  return out;
}

std::vector<int> subtree(const RadialNetwork& net, std::size_t i) {
  std::vector<int> out{static_cast<int>(i)};
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (int c : net.children(static_cast<std::size_t>(out[k]))) out.push_back(c);
  }
  return out;
}

nlohmann::json network_summary(const RadialNetwork& net) {
  using nlohmann::json;
  json j;
  j["base_mva"] = net.base_mva;
  j["slack_voltage"] = net.slack_voltage;
  j["root"] = net.root_id();
  json buses = json::array();
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    const Bus& b = net.buses[i];
    json children = json::array();
    for (int c : net.children(i)) children.push_back(net.buses[static_cast<std::size_t>(c)].id);
    const int p = net.parent(i);
    buses.push_back({{"id", b.id},
                     {"ancestor", p < 0 ? kUpperGridId : net.buses[static_cast<std::size_t>(p)].id},
                     {"children", children},
                     {"load_p_mw", b.base_load_p},
                     {"load_q_mvar", b.base_load_q},
                     {"shunt_g", b.shunt_g},
                     {"shunt_b", b.shunt_b},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max}});
  }
  j["buses"] = buses;
  json branches = json::array();
  auto emit = [&](const Branch& br, bool is_interface) {
    branches.push_back({{"from", br.from_bus},
                        {"to", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"s_max_mva", br.s_max},
                        {"interface", is_interface}});
  };
  emit(net.interface, true);
  for (const auto& br : net.branches) emit(br, false);
  j["branches"] = branches;
  return j;
}

}  // namespace flexmarket

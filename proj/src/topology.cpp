#include "prioflow/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

namespace {

SiteRole parse_role(const std::string& role, const std::string& where) {
  if (role == "source-site" || role == "source") return SiteRole::kSource;
  if (role == "destination-site" || role == "destination") return SiteRole::kDestination;
  if (role == "transit") return SiteRole::kTransit;
  throw Error(ErrorCode::kParse, where + ".role: unknown role '" + role + "'");
}

std::string_view role_name(SiteRole role) {
  switch (role) {
    case SiteRole::kSource: return "source-site";
    case SiteRole::kDestination: return "destination-site";
    case SiteRole::kTransit: return "transit";
  }
  return "transit";
}

std::string link_element(std::size_t i, const Link& l) {
  return "links[" + std::to_string(i) + "] " + l.a + "-" + l.b;
}

template <typename T>
T require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kParse, where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kParse, where + "." + key + ": wrong type");
  }
}

}  // namespace

std::vector<std::string> Path::sites() const {
  std::vector<std::string> out;
  if (hops.empty()) return out;
  out.push_back(hops.front().from);
  for (const auto& h : hops) out.push_back(h.to);
  return out;
}

Topology::Topology(std::vector<Site> sites, std::vector<Link> links)
    : sites_(std::move(sites)), links_(std::move(links)) {}

bool Topology::has_site(std::string_view name) const {
  return std::any_of(sites_.begin(), sites_.end(), [&](const Site& s) { return s.name == name; });
}

std::optional<std::size_t> Topology::link_between(std::string_view a, std::string_view b) const {
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const auto& l = links_[i];
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return i;
  }
  return std::nullopt;
}

std::vector<std::string> Topology::neighbors(std::string_view site) const {
  std::vector<std::string> out;
  for (const auto& l : links_) {
    if (l.a == site) out.push_back(l.b);
    if (l.b == site) out.push_back(l.a);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Topology topology_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "topology: expected an object");
  if (!doc.contains("sites") || !doc["sites"].is_array()) {
    throw Error(ErrorCode::kParse, "topology: missing array 'sites'");
  }
  if (!doc.contains("links") || !doc["links"].is_array()) {
    throw Error(ErrorCode::kParse, "topology: missing array 'links'");
  }
  std::vector<Site> sites;
  for (std::size_t i = 0; i < doc["sites"].size(); ++i) {
    const auto& s = doc["sites"][i];
    const std::string where = "sites[" + std::to_string(i) + "]";
    Site site;
    site.name = require<std::string>(s, "name", where);
    if (site.name.empty()) throw Error(ErrorCode::kParse, where + ".name: empty");
    if (s.contains("role")) site.role = parse_role(require<std::string>(s, "role", where), where);
    sites.push_back(std::move(site));
  }
  std::vector<Link> links;
  for (std::size_t i = 0; i < doc["links"].size(); ++i) {
    const auto& l = doc["links"][i];
    const std::string where = "links[" + std::to_string(i) + "]";
    Link link;
    link.a = require<std::string>(l, "a", where);
    link.b = require<std::string>(l, "b", where);
    link.capacity_gbps = require<double>(l, "capacity_gbps", where);
    if (l.contains("manageable_fraction")) {
      link.manageable_fraction = require<double>(l, "manageable_fraction", where);
    }
    links.push_back(std::move(link));
  }
  Topology topo(std::move(sites), std::move(links));
  auto violations = validate_topology(topo);
  if (!violations.empty()) {
    const auto& v = violations.front();
    ErrorCode code = ErrorCode::kParse;
    if (v.message.find("duplicate link") != std::string::npos) code = ErrorCode::kDuplicate;
    throw Error(code, v.element + ": " + v.message);
  }
  return topo;
}

Topology load_topology(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("topology: ") + e.what());
  }
  return topology_from_json(doc);
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open topology file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_topology(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

nlohmann::json topology_to_json(const Topology& topo) {
  nlohmann::json doc;
  doc["sites"] = nlohmann::json::array();
  for (const auto& s : topo.sites()) {
    doc["sites"].push_back({{"name", s.name}, {"role", role_name(s.role)}});
  }
  doc["links"] = nlohmann::json::array();
  for (const auto& l : topo.links()) {
    doc["links"].push_back({{"a", l.a},
                            {"b", l.b},
                            {"capacity_gbps", l.capacity_gbps},
                            {"manageable_fraction", l.manageable_fraction}});
  }
  return doc;
}

std::vector<Violation> validate_topology(const Topology& topo,
                                         const std::vector<std::string>& required_sites) {
  std::vector<Violation> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < topo.sites().size(); ++i) {
    const auto& s = topo.sites()[i];
    if (!names.insert(s.name).second) {
      out.push_back({"sites[" + std::to_string(i) + "] " + s.name, "duplicate site name"});
    }
  }
  std::set<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < topo.links().size(); ++i) {
    const auto& l = topo.links()[i];
    const auto element = link_element(i, l);
    if (!names.contains(l.a)) out.push_back({element, "dangling endpoint '" + l.a + "'"});
    if (!names.contains(l.b)) out.push_back({element, "dangling endpoint '" + l.b + "'"});
    if (l.a == l.b) out.push_back({element, "self loop"});
    if (!(l.capacity_gbps > 0.0)) {
      out.push_back({element, "non-positive capacity " + format_number(l.capacity_gbps)});
    }
    if (!(l.manageable_fraction > 0.0 && l.manageable_fraction <= 1.0)) {
      out.push_back({element, "manageable_fraction " + format_number(l.manageable_fraction) +
                                  " outside (0,1]"});
    }
    auto key = std::minmax(l.a, l.b);
    if (!pairs.emplace(key.first, key.second).second) {
      out.push_back({element, "duplicate link"});
    }
  }
  // Connectivity among the required sites.
  std::vector<std::string> required;
  for (const auto& r : required_sites) {
    if (!names.contains(r)) {
      out.push_back({"site " + r, "referenced site does not exist"});
    } else {
      required.push_back(r);
    }
  }
  std::sort(required.begin(), required.end());
  required.erase(std::unique(required.begin(), required.end()), required.end());
  if (required.size() > 1) {
    std::set<std::string> seen{required.front()};
    std::deque<std::string> frontier{required.front()};
    while (!frontier.empty()) {
      auto cur = frontier.front();
      frontier.pop_front();
      for (const auto& n : topo.neighbors(cur)) {
        if (seen.insert(n).second) frontier.push_back(n);
      }
    }
    for (const auto& r : required) {
      if (!seen.contains(r)) {
        out.push_back({"site " + r, "disconnected from site " + required.front()});
      }
    }
  }
  return out;
}

Path find_path(const Topology& topo, std::string_view src, std::string_view dst) {
  if (src == dst) {
    throw Error(ErrorCode::kInvalidArgument, "find_path: source equals destination '" +
                                                 std::string(src) + "'");
  }
  if (!topo.has_site(src)) throw Error(ErrorCode::kNotFound, "unknown site '" + std::string(src) + "'");
  if (!topo.has_site(dst)) throw Error(ErrorCode::kNotFound, "unknown site '" + std::string(dst) + "'");

  // Hop distance to dst, then walk greedily from src through the smallest
  // neighbour that is one hop closer.
  std::map<std::string, int, std::less<>> dist;
  dist[std::string(dst)] = 0;
  std::deque<std::string> frontier{std::string(dst)};
  while (!frontier.empty()) {
    auto cur = frontier.front();
    frontier.pop_front();
    for (const auto& n : topo.neighbors(cur)) {
      if (!dist.contains(n)) {
        dist[n] = dist[cur] + 1;
        frontier.push_back(n);
      }
    }
  }
  auto it = dist.find(src);
  if (it == dist.end()) {
    throw Error(ErrorCode::kNoPath,
                "no path from '" + std::string(src) + "' to '" + std::string(dst) + "'");
  }
  Path path;
  std::string cur(src);
  int d = it->second;
  while (d > 0) {
    for (const auto& n : topo.neighbors(cur)) {
      auto nd = dist.find(n);
      if (nd != dist.end() && nd->second == d - 1) {
        path.hops.push_back({*topo.link_between(cur, n), cur, n});
        cur = n;
        break;
      }
    }
    --d;
  }
  return path;
}

double path_manageable_capacity(const Topology& topo, const Path& path) {
  double cap = std::numeric_limits<double>::infinity();
  for (const auto& h : path.hops) cap = std::min(cap, manageable_capacity(topo.link(h.link)));
  return cap;
}

std::string link_label(const Hop& hop) { return hop.from + "->" + hop.to; }

}  // namespace prioflow

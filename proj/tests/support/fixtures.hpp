#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "prioflow/rse.hpp"
#include "prioflow/simulation.hpp"
#include "prioflow/topology.hpp"

namespace fixture {

/// RSE at `site` with `directors` directors d<site>-1.. on 2001:db8:<tag>:<i>::/64.
inline prioflow::Rse make_rse(const prioflow::Topology& topo, const std::string& site, int tag, int directors) {
  nlohmann::json doc = {
      {"name", "RSE_" + site},
      {"site", site},
      {"server_count", 10},
      {"endpoints",
       {{{"protocol", "root"},
         {"host", "xrd." + site},
         {"namespace_prefix", "/store-root"},
         {"preferences", {"read", "third-party-transfer"}}},
        {{"protocol", "webdavs"}, {"host", "dav." + site}, {"namespace_prefix", "/dav"}, {"preferences", {"write"}}}}},
      {"directors", nlohmann::json::array()}};
  for (int i = 1; i <= directors; ++i) {
    char subnet[64];
    std::snprintf(subnet, sizeof(subnet), "2001:db8:%x:%x::/64", tag, i);
    doc["directors"].push_back({{"id", site + "-d" + std::to_string(i)},
                                {"ipv6_subnet", subnet},
                                {"endpoint_host", "dir" + std::to_string(i) + "." + site}});
  }
  return prioflow::rse_from_json(doc, topo);
}

inline prioflow::RseCatalog catalog_for(const prioflow::Topology& topo, int directors) {
  prioflow::RseCatalog cat;
  int tag = 1;
  for (const auto& s : topo.sites()) cat.add(make_rse(topo, s.name, tag++, directors));
  return cat;
}

inline prioflow::Topology cern_fnal(double capacity = 1000.0, double fraction = 0.8) {
  return prioflow::Topology({{"CERN", prioflow::SiteRole::kSource}, {"FNAL", prioflow::SiteRole::kDestination}},
                            {{"CERN", "FNAL", capacity, fraction}});
}

inline prioflow::DataflowRequest request(std::string id, std::uint64_t bytes, int priority = 1,
                                         std::string src = "CERN", std::string dst = "FNAL") {
  return {std::move(id), bytes, std::move(src), std::move(dst), priority};
}

}  // namespace fixture

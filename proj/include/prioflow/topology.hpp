#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace prioflow {

enum class SiteRole { kSource, kDestination, kTransit };

struct Site {
  std::string name;
  SiteRole role = SiteRole::kTransit;
};

/// Bidirectional link; each direction has the full capacity.
struct Link {
  std::string a;
  std::string b;
  double capacity_gbps = 0.0;
  double manageable_fraction = 0.8;
};

/// Share of a link available to orchestrated priority services.
inline double manageable_capacity(const Link& link) {
  return link.capacity_gbps * link.manageable_fraction;
}

/// One traversal of a link in a given direction.
struct Hop {
  std::size_t link = 0;
  std::string from;
  std::string to;

  friend bool operator==(const Hop&, const Hop&) = default;
};

struct Path {
  std::vector<Hop> hops;

  bool empty() const noexcept { return hops.empty(); }
  std::vector<std::string> sites() const;
  friend bool operator==(const Path&, const Path&) = default;
};

struct Violation {
  std::string element;
  std::string message;
};

class Topology {
 public:
  Topology() = default;
  /// Stores the input as-is; see load_topology() for the validating route.
  Topology(std::vector<Site> sites, std::vector<Link> links);

  const std::vector<Site>& sites() const noexcept { return sites_; }
  const std::vector<Link>& links() const noexcept { return links_; }
  const Link& link(std::size_t index) const { return links_.at(index); }

  bool has_site(std::string_view name) const;
  std::optional<std::size_t> link_between(std::string_view a, std::string_view b) const;
  /// Neighbours of a site in ascending name order.
  std::vector<std::string> neighbors(std::string_view site) const;

 private:
  std::vector<Site> sites_;
  std::vector<Link> links_;
};

Topology topology_from_json(const nlohmann::json& doc);
Topology load_topology(std::string_view text);
Topology load_topology_file(const std::string& path);
nlohmann::json topology_to_json(const Topology& topo);

/// Empty iff every invariant holds. `required_sites` must be mutually
/// connected (the sites hosting storage elements).
std::vector<Violation> validate_topology(const Topology& topo,
                                         const std::vector<std::string>& required_sites = {});

/// Minimum-hop path; ties go to the lexicographically smallest site sequence.
Path find_path(const Topology& topo, std::string_view src, std::string_view dst);

/// Smallest manageable capacity along the path, in Gbps.
double path_manageable_capacity(const Topology& topo, const Path& path);

std::string link_label(const Hop& hop);

}  // namespace prioflow

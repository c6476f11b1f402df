#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prioflow/topology.hpp"

namespace prioflow {

enum class Protocol { kGsiftp, kWebdavs, kRoot };
enum class AccessPreference { kRead, kWrite, kThirdPartyTransfer };

std::string_view to_string(Protocol p);
std::string_view to_string(AccessPreference p);
Protocol parse_protocol(std::string_view s);
AccessPreference parse_preference(std::string_view s);
int default_port(Protocol p);

/// IPv6 network prefix such as 2001:db8:1::/64. Host bits are cleared on parse.
class Ipv6Prefix {
 public:
  static Ipv6Prefix parse(std::string_view text);

  int length() const noexcept { return length_; }
  const std::array<std::uint8_t, 16>& address() const noexcept { return addr_; }
  /// Canonical RFC 5952 text.
  std::string to_string() const;
  bool contains(const Ipv6Prefix& other) const;
  bool overlaps(const Ipv6Prefix& other) const { return contains(other) || other.contains(*this); }

  friend auto operator<=>(const Ipv6Prefix&, const Ipv6Prefix&) = default;

 private:
  std::array<std::uint8_t, 16> addr_{};
  int length_ = 0;
};

struct Endpoint {
  Protocol protocol = Protocol::kWebdavs;
  std::string host;
  int port = 0;
  std::string namespace_prefix;
  std::vector<AccessPreference> preferences;

  bool serves(AccessPreference p) const;
};

/// XRootD director; owns exactly one subnet.
struct Director {
  std::string id;
  Ipv6Prefix subnet;
  std::string endpoint_host;
};

struct Rse {
  std::string name;
  std::string site;
  int server_count = 1;
  std::vector<Endpoint> endpoints;
  std::vector<Director> directors;

  const Director* director(std::string_view id) const;
};

Rse rse_from_json(const nlohmann::json& doc, const Topology& topo);
Rse load_rse(std::string_view text, const Topology& topo);

/// LFN to PFN: protocol://host:port + namespace_prefix + lfn, using the first
/// declared endpoint that lists `preference`. `host_override` replaces the
/// endpoint host, used to route through a specific director.
std::string resolve_pfn(const Rse& rse, std::string_view lfn, AccessPreference preference,
                        std::optional<std::string_view> host_override = std::nullopt);

/// Free and allocated directors of one RSE. Allocation hands out the lowest
/// free director id.
class SubnetPool {
 public:
  explicit SubnetPool(const Rse& rse);

  const std::string& rse() const noexcept { return rse_; }
  const Director& allocate(const std::string& service_id);
  Director release(const std::string& service_id);

  const std::set<std::string>& free() const noexcept { return free_; }
  const std::map<std::string, std::string>& allocated() const noexcept { return allocated_; }
  std::size_t size() const noexcept { return directors_.size(); }
  const Director* director_for(const std::string& service_id) const;

  friend bool operator==(const SubnetPool& a, const SubnetPool& b) {
    return a.rse_ == b.rse_ && a.free_ == b.free_ && a.allocated_ == b.allocated_;
  }

 private:
  std::string rse_;
  std::map<std::string, Director> directors_;
  std::set<std::string> free_;
  std::map<std::string, std::string> allocated_;
};

/// One RSE per site, each with its subnet pool.
class RseCatalog {
 public:
  void add(Rse rse);

  bool has_site(std::string_view site) const { return by_site_.contains(std::string(site)); }
  const Rse& at_site(std::string_view site) const;
  SubnetPool& pool_at_site(std::string_view site);
  const SubnetPool& pool_at_site(std::string_view site) const;
  std::vector<std::string> sites() const;
  const std::map<std::string, Rse>& rses() const noexcept { return by_site_; }
  const std::map<std::string, SubnetPool>& pools() const noexcept { return pools_; }

 private:
  std::map<std::string, Rse> by_site_;
  std::map<std::string, SubnetPool> pools_;
};

/// Loads every *.json file in `dir`, in file-name order.
RseCatalog load_rse_dir(const std::string& dir, const Topology& topo);

}  // namespace prioflow

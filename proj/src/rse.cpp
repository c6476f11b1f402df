#include "prioflow/rse.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prioflow/error.hpp"

namespace prioflow {

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::kGsiftp: return "gsiftp";
    case Protocol::kWebdavs: return "webdavs";
    case Protocol::kRoot: return "root";
  }
  return "root";
}

std::string_view to_string(AccessPreference p) {
  switch (p) {
    case AccessPreference::kRead: return "read";
    case AccessPreference::kWrite: return "write";
    case AccessPreference::kThirdPartyTransfer: return "third-party-transfer";
  }
  return "read";
}

Protocol parse_protocol(std::string_view s) {
  if (s == "gsiftp") return Protocol::kGsiftp;
  if (s == "webdavs") return Protocol::kWebdavs;
  if (s == "root") return Protocol::kRoot;
  throw Error(ErrorCode::kParse, "unknown protocol '" + std::string(s) + "'");
}

AccessPreference parse_preference(std::string_view s) {
  if (s == "read") return AccessPreference::kRead;
  if (s == "write") return AccessPreference::kWrite;
  if (s == "third-party-transfer") return AccessPreference::kThirdPartyTransfer;
  throw Error(ErrorCode::kParse, "unknown preference '" + std::string(s) + "'");
}

int default_port(Protocol p) {
  switch (p) {
    case Protocol::kGsiftp: return 2811;
    case Protocol::kWebdavs: return 2880;
    case Protocol::kRoot: return 1094;
  }
  return 0;
}

Ipv6Prefix Ipv6Prefix::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "ipv6 prefix '" + std::string(text) + "' has no /length");
  }
  const std::string addr(text.substr(0, slash));
  const std::string len(text.substr(slash + 1));
  Ipv6Prefix out;
  if (inet_pton(AF_INET6, addr.c_str(), out.addr_.data()) != 1) {
    throw Error(ErrorCode::kParse, "invalid ipv6 address '" + addr + "'");
  }
  if (len.empty() || len.size() > 3 || !std::all_of(len.begin(), len.end(), ::isdigit)) {
    throw Error(ErrorCode::kParse, "invalid prefix length '" + len + "'");
  }
  out.length_ = std::stoi(len);
  if (out.length_ > 128) throw Error(ErrorCode::kParse, "prefix length " + len + " exceeds 128");
  for (int bit = out.length_; bit < 128; ++bit) {
    out.addr_[bit / 8] &= static_cast<std::uint8_t>(~(0x80u >> (bit % 8)));
  }
  return out;
}

std::string Ipv6Prefix::to_string() const {
  char buf[INET6_ADDRSTRLEN];
  inet_ntop(AF_INET6, addr_.data(), buf, sizeof(buf));
  return std::string(buf) + "/" + std::to_string(length_);
}

bool Ipv6Prefix::contains(const Ipv6Prefix& other) const {
  if (other.length_ < length_) return false;
  for (int bit = 0; bit < length_; ++bit) {
    const std::uint8_t mask = 0x80u >> (bit % 8);
    if ((addr_[bit / 8] & mask) != (other.addr_[bit / 8] & mask)) return false;
  }
  return true;
}

bool Endpoint::serves(AccessPreference p) const {
  return std::find(preferences.begin(), preferences.end(), p) != preferences.end();
}

const Director* Rse::director(std::string_view id) const {
  for (const auto& d : directors) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

namespace {

// "/cms" and "/cms/store" overlap; "/cms" and "/cms2" do not.
bool namespaces_overlap(std::string_view a, std::string_view b) {
  auto norm = [](std::string_view s) {
    std::string out(s);
    if (out.empty() || out.back() != '/') out.push_back('/');
    return out;
  };
  const auto na = norm(a);
  const auto nb = norm(b);
  return na.starts_with(nb) || nb.starts_with(na);
}

template <typename T>
T field(const nlohmann::json& obj, const char* key, const std::string& where) {
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

Rse rse_from_json(const nlohmann::json& doc, const Topology& topo) {
  Rse rse;
  rse.name = field<std::string>(doc, "name", "rse");
  const std::string where = "rse " + rse.name;
  rse.site = field<std::string>(doc, "site", where);
  rse.server_count = doc.contains("server_count") ? field<int>(doc, "server_count", where) : 10;
  if (rse.server_count < 1) throw Error(ErrorCode::kParse, where + ".server_count: must be >= 1");
  if (!topo.has_site(rse.site)) {
    throw Error(ErrorCode::kNotFound, where + ": unknown site '" + rse.site + "'");
  }

  if (!doc.contains("endpoints") || !doc["endpoints"].is_array() || doc["endpoints"].empty()) {
    throw Error(ErrorCode::kParse, where + ": needs at least one endpoint");
  }
  for (std::size_t i = 0; i < doc["endpoints"].size(); ++i) {
    const auto& e = doc["endpoints"][i];
    const std::string ew = where + ".endpoints[" + std::to_string(i) + "]";
    Endpoint ep;
    ep.protocol = parse_protocol(field<std::string>(e, "protocol", ew));
    ep.host = field<std::string>(e, "host", ew);
    ep.port = e.contains("port") ? field<int>(e, "port", ew) : default_port(ep.protocol);
    if (ep.port < 1 || ep.port > 65535) {
      throw Error(ErrorCode::kParse, ew + ".port: " + std::to_string(ep.port) + " outside [1,65535]");
    }
    ep.namespace_prefix = field<std::string>(e, "namespace_prefix", ew);
    if (ep.namespace_prefix.empty()) throw Error(ErrorCode::kParse, ew + ".namespace_prefix: empty");
    for (const auto& p : field<std::vector<std::string>>(e, "preferences", ew)) {
      ep.preferences.push_back(parse_preference(p));
    }
    if (ep.preferences.empty()) throw Error(ErrorCode::kParse, ew + ".preferences: empty");
    for (const auto& prev : rse.endpoints) {
      if (prev.protocol == ep.protocol && namespaces_overlap(prev.namespace_prefix, ep.namespace_prefix)) {
        throw Error(ErrorCode::kInvalidArgument,
                    ew + ": namespace '" + ep.namespace_prefix + "' overlaps '" +
                        prev.namespace_prefix + "' for protocol " + std::string(to_string(ep.protocol)));
      }
    }
    rse.endpoints.push_back(std::move(ep));
  }

  if (!doc.contains("directors") || !doc["directors"].is_array() || doc["directors"].empty()) {
    throw Error(ErrorCode::kParse, where + ": needs at least one director");
  }
  for (std::size_t i = 0; i < doc["directors"].size(); ++i) {
    const auto& d = doc["directors"][i];
    const std::string dw = where + ".directors[" + std::to_string(i) + "]";
    Director dir;
    dir.id = field<std::string>(d, "id", dw);
    dir.subnet = Ipv6Prefix::parse(field<std::string>(d, "ipv6_subnet", dw));
    dir.endpoint_host = field<std::string>(d, "endpoint_host", dw);
    for (const auto& prev : rse.directors) {
      if (prev.id == dir.id) throw Error(ErrorCode::kDuplicate, dw + ": duplicate director id " + dir.id);
      if (prev.subnet.overlaps(dir.subnet)) {
        throw Error(ErrorCode::kDuplicate, dw + ": subnet " + dir.subnet.to_string() +
                                               " overlaps director " + prev.id);
      }
    }
    rse.directors.push_back(std::move(dir));
  }
  return rse;
}

Rse load_rse(std::string_view text, const Topology& topo) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("rse: ") + e.what());
  }
  return rse_from_json(doc, topo);
}

std::string resolve_pfn(const Rse& rse, std::string_view lfn, AccessPreference preference,
                        std::optional<std::string_view> host_override) {
  for (const auto& ep : rse.endpoints) {
    if (!ep.serves(preference)) continue;
    std::string pfn(to_string(ep.protocol));
    pfn += "://";
    pfn += host_override ? std::string(*host_override) : ep.host;
    pfn += ':';
    pfn += std::to_string(ep.port);
    pfn += ep.namespace_prefix;
    pfn += lfn;
    return pfn;
  }
  throw Error(ErrorCode::kNotFound, "rse " + rse.name + ": no endpoint for preference " +
                                        std::string(to_string(preference)));
}

SubnetPool::SubnetPool(const Rse& rse) : rse_(rse.name) {
  for (const auto& d : rse.directors) {
    directors_.emplace(d.id, d);
    free_.insert(d.id);
  }
}

const Director& SubnetPool::allocate(const std::string& service_id) {
  if (allocated_.contains(service_id)) {
    throw Error(ErrorCode::kDuplicate, "rse " + rse_ + ": service " + service_id + " already holds a subnet");
  }
  if (free_.empty()) {
    throw Error(ErrorCode::kExhausted, "rse " + rse_ + ": subnet pool exhausted");
  }
  const std::string id = *free_.begin();
  free_.erase(free_.begin());
  allocated_.emplace(service_id, id);
  return directors_.at(id);
}

Director SubnetPool::release(const std::string& service_id) {
  auto it = allocated_.find(service_id);
  if (it == allocated_.end()) {
    throw Error(ErrorCode::kNotFound, "rse " + rse_ + ": unknown service " + service_id);
  }
  const std::string id = it->second;
  allocated_.erase(it);
  free_.insert(id);
  return directors_.at(id);
}

const Director* SubnetPool::director_for(const std::string& service_id) const {
  auto it = allocated_.find(service_id);
  return it == allocated_.end() ? nullptr : &directors_.at(it->second);
}

void RseCatalog::add(Rse rse) {
  if (by_site_.contains(rse.site)) {
    throw Error(ErrorCode::kDuplicate, "site " + rse.site + " already has rse " +
                                           by_site_.at(rse.site).name + "; one RSE per site");
  }
  const std::string site = rse.site;
  pools_.emplace(site, SubnetPool(rse));
  by_site_.emplace(site, std::move(rse));
}

const Rse& RseCatalog::at_site(std::string_view site) const {
  auto it = by_site_.find(std::string(site));
  if (it == by_site_.end()) throw Error(ErrorCode::kNotFound, "no rse at site '" + std::string(site) + "'");
  return it->second;
}

SubnetPool& RseCatalog::pool_at_site(std::string_view site) {
  auto it = pools_.find(std::string(site));
  if (it == pools_.end()) throw Error(ErrorCode::kNotFound, "no rse at site '" + std::string(site) + "'");
  return it->second;
}

const SubnetPool& RseCatalog::pool_at_site(std::string_view site) const {
  auto it = pools_.find(std::string(site));
  if (it == pools_.end()) throw Error(ErrorCode::kNotFound, "no rse at site '" + std::string(site) + "'");
  return it->second;
}

std::vector<std::string> RseCatalog::sites() const {
  std::vector<std::string> out;
  for (const auto& [site, _] : by_site_) out.push_back(site);
  return out;
}

RseCatalog load_rse_dir(const std::string& dir, const Topology& topo) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kNotFound, "rse directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  RseCatalog catalog;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      catalog.add(load_rse(ss.str(), topo));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what());
    }
  }
  return catalog;
}

}  // namespace prioflow

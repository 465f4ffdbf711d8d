#include "ifb/http.hpp"

#include "ifb/common.hpp"

#include <httplib.h>

#include <stdexcept>

namespace ifb {

std::string Endpoint::url() const {
    return "http://" + host + ":" + std::to_string(port) + path;
}

Endpoint parse_endpoint(const std::string& url) {
    const std::string prefix = "http://";
    if (url.rfind(prefix, 0) != 0) {
        throw std::invalid_argument("endpoint must start with http://: " + url);
    }
    std::string rest = url.substr(prefix.size());
    Endpoint ep;
    const auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    if (slash != std::string::npos) ep.path = rest.substr(slash);
    const auto colon = authority.rfind(':');
    if (colon != std::string::npos) {
        try {
            ep.port = std::stoi(authority.substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad port in endpoint: " + url);
        }
        authority.resize(colon);
    }
    if (authority.empty()) throw std::invalid_argument("missing host in endpoint: " + url);
    ep.host = authority;
    return ep;
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body,
                         const HttpOptions& options) {
    httplib::Client client(endpoint.host, endpoint.port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    for (const auto& [k, v] : options.headers) headers.emplace(k, v);

    auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError(endpoint.url(), httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProtocolError(endpoint.url() + ": HTTP status " + std::to_string(res->status));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(endpoint.url() + ": reply is not JSON: " + e.what());
    }
}

}  // namespace ifb

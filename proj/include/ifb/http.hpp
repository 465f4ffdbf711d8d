#pragma once

#include <chrono>
#include <map>
#include <string>

#include <json.hpp>

namespace ifb {

struct Endpoint {
    std::string host;
    int port = 80;
    std::string path = "/";

    std::string url() const;
};

/// Parses "http://host[:port][/path]". Throws std::invalid_argument otherwise.
Endpoint parse_endpoint(const std::string& url);

struct HttpOptions {
    std::chrono::milliseconds timeout{30000};
    std::map<std::string, std::string> headers;
};

/// POSTs a JSON body and returns the parsed JSON reply.
/// Connection failures and timeouts raise TransportError; a non-2xx status or
/// an unparseable body raises ProtocolError. Each call uses its own
/// connection, so concurrent calls share no state.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body,
                         const HttpOptions& options = {});

}  // namespace ifb

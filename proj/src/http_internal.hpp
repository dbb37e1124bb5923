#pragma once

// Conversions between httplib types and pipeline types. Private to src/.

#include "mqos/http.hpp"
#include "mqos/model.hpp"

#include <httplib.h>

namespace mqos::detail {

/// Builds a TaggedRequest from an inbound request, dropping hop-by-hop and
/// httplib-synthesized headers.
TaggedRequest fromHttplib(const httplib::Request& req);

/// Writes an upstream response back to the client.
void relay(const ProxyResponse& upstream, httplib::Response& res);

void replyJson(httplib::Response& res, const nlohmann::json& body, int status = 200);
void replyError(httplib::Response& res, int status, const std::string& message);

/// Parses a JSON request body; on failure answers 400 and returns nullopt.
std::optional<nlohmann::json> parseBody(const httplib::Request& req, httplib::Response& res);

} // namespace mqos::detail

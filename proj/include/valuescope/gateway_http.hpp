// Copyright 2026 The ValueScope Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Default HTTP transport for the chat gateway. Split from gateway.hpp so
// offline builds never pull in the socket layer.

#ifndef VALUESCOPE_GATEWAY_HTTP_HPP
#define VALUESCOPE_GATEWAY_HTTP_HPP

#include <string>
#include <utility>

#include <httplib.h>

#include "valuescope/gateway.hpp"

namespace valuescope::gateway {

// Connection-level failures are retryable transients; HTTP status handling
// stays in ChatClient.
inline ChatClient::Transport http_transport(const RemoteConfig& config) {
    auto url = detail::split_url(config.endpoint);
    return [url](const std::string& body,
                 const std::string& api_key) -> std::pair<int, std::string> {
        httplib::Client client(url.base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) {
            throw transport_error("connection failed: " + httplib::to_string(res.error()),
                                  true);
        }
        return {res->status, res->body};
    };
}

inline ChatClient make_chat_client(const RemoteConfig& config) {
    return ChatClient(config, http_transport(config));
}

}  // namespace valuescope::gateway

#endif  // VALUESCOPE_GATEWAY_HTTP_HPP

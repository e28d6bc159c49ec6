#pragma once

// Live chat-completions transport. Kept out of the umbrella header so that
// only binaries talking to real endpoints pull in httplib and libssl.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <string>
#include <vector>

#include "driftprobe/provider.hpp"

namespace driftprobe {

struct EndpointUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

inline EndpointUrl split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(int timeout_seconds = 120) : timeout_seconds_(timeout_seconds) {}

  TransportReply send(const TargetSpec& target, const std::string& api_key,
                      const std::vector<Message>& messages) override {
    const auto url = split_endpoint(target.endpoint);
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);
    cli.set_bearer_token_auth(api_key);
    const auto body = chat_request_body(target, messages).dump();
    auto res = cli.Post(url.path + "/chat/completions", body, "application/json");

    TransportReply reply;
    if (!res) {
      reply.status = TransportReply::Status::transient;
      reply.error = "transport: " + httplib::to_string(res.error());
      return reply;
    }
    if (res->status == 429 || res->status >= 500) {
      reply.status = TransportReply::Status::transient;
      reply.error = "http " + std::to_string(res->status);
      return reply;
    }
    if (res->status != 200) {
      reply.status = TransportReply::Status::fatal;
      reply.error = "http " + std::to_string(res->status);
      return reply;
    }
    try {
      reply.text = parse_chat_response(res->body);
      reply.status = TransportReply::Status::ok;
    } catch (const ParseError& e) {
      reply.status = TransportReply::Status::transient;
      reply.error = e.what();
    }
    return reply;
  }

 private:
  int timeout_seconds_;
};

}  // namespace driftprobe

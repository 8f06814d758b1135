#pragma once

#include "dtwin/wire/digest.hpp"

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dtwin::wire {

// Connection-level failure (refused, reset, timeout).
class TransportError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Controller kept rejecting our digest credentials.
class AuthError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct HttpReply {
    int status = 0;
    std::string body;
    std::string content_type;

    bool ok() const { return status >= 200 && status < 300; }
};

struct RwsClientOptions {
    std::chrono::milliseconds connect_timeout{500};
    std::chrono::milliseconds read_timeout{2000};
};

// Digest-authenticating HTTP client for one controller connection. Keeps the
// connection alive between calls. Not thread-safe: one instance per loop.
class RwsClient {
  public:
    RwsClient(std::string base_url, DigestCredentials creds, RwsClientOptions opts = {});
    ~RwsClient();
    RwsClient(RwsClient&&) noexcept;
    RwsClient& operator=(RwsClient&&) noexcept;

    HttpReply get(std::string_view target);
    HttpReply post(std::string_view target, const std::string& body,
                   std::string_view content_type = "application/json");

    const std::string& base_url() const { return base_url_; }

  private:
    struct Impl;
    HttpReply send(std::string_view method, std::string_view target, const std::string* body,
                   std::string_view content_type);

    std::string base_url_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dtwin::wire

#include "dtwin/wire/rws_client.hpp"

#include <httplib.h>

namespace dtwin::wire {

struct RwsClient::Impl {
    httplib::Client http;
    DigestSession session;

    Impl(const std::string& url, DigestCredentials creds) : http(url), session(std::move(creds)) {}
};

RwsClient::RwsClient(std::string base_url, DigestCredentials creds, RwsClientOptions opts)
    : base_url_(std::move(base_url)), impl_(std::make_unique<Impl>(base_url_, std::move(creds))) {
    impl_->http.set_keep_alive(true);
    impl_->http.set_tcp_nodelay(true);
    impl_->http.set_connection_timeout(opts.connect_timeout);
    impl_->http.set_read_timeout(opts.read_timeout);
    impl_->http.set_write_timeout(opts.read_timeout);
}

RwsClient::~RwsClient() = default;
RwsClient::RwsClient(RwsClient&&) noexcept = default;
RwsClient& RwsClient::operator=(RwsClient&&) noexcept = default;

HttpReply RwsClient::get(std::string_view target) { return send("GET", target, nullptr, {}); }

HttpReply RwsClient::post(std::string_view target, const std::string& body,
                          std::string_view content_type) {
    return send("POST", target, &body, content_type);
}

HttpReply RwsClient::send(std::string_view method, std::string_view target,
                          const std::string* body, std::string_view content_type) {
    const std::string path(target);
    // initial attempt, one retry after a fresh challenge, one more on stale
    for (int attempt = 0; attempt < 3; ++attempt) {
        httplib::Headers headers;
        if (impl_->session.has_challenge()) {
            headers.emplace("Authorization", impl_->session.authorization(method, path));
        }
        httplib::Result res = method == "GET"
            ? impl_->http.Get(path, headers)
            : impl_->http.Post(path, headers, body ? *body : std::string{}, std::string(content_type));
        if (!res) {
            throw TransportError(base_url_ + path + ": " + httplib::to_string(res.error()));
        }
        if (res->status == 401) {
            const auto challenge = parse_challenge(res->get_header_value("WWW-Authenticate"));
            if (!challenge) throw AuthError(base_url_ + ": 401 without a digest challenge");
            const bool had = impl_->session.has_challenge();
            impl_->session.accept_challenge(*challenge);
            // a non-stale rejection after we already signed means bad credentials
            if (had && attempt > 0 && !challenge->stale) {
                throw AuthError(base_url_ + ": digest credentials rejected");
            }
            continue;
        }
        return HttpReply{res->status, res->body, res->get_header_value("Content-Type")};
    }
    throw AuthError(base_url_ + ": digest authentication did not settle");
}

}  // namespace dtwin::wire

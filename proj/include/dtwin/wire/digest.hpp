#pragma once

// HTTP digest authentication (MD5, qop=auth) for both ends of the
// controller link.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace dtwin::wire {

struct DigestCredentials {
    std::string username = "Default User";
    std::string password = "robotics";
    std::string realm = "RobotWebServices";
    std::chrono::seconds nonce_lifetime{300};
};

struct Challenge {
    std::string realm;
    std::string nonce;
    std::string opaque;
    std::string qop = "auth";
    std::string algorithm = "MD5";
    bool stale = false;
};

// Parameters of an Authorization: Digest header.
struct AuthorizationParams {
    std::string username;
    std::string realm;
    std::string nonce;
    std::string uri;
    std::string response;
    std::string qop;
    std::string nc;
    std::string cnonce;
    std::string opaque;
    std::string algorithm;
};

std::string md5_hex(std::string_view data);

// RFC 2617 request-digest for qop=auth.
std::string digest_response(std::string_view method, std::string_view uri,
                            std::string_view username, std::string_view realm,
                            std::string_view password, std::string_view nonce,
                            std::string_view nc, std::string_view cnonce, std::string_view qop);

std::string format_challenge(const Challenge& c);

// Parses a WWW-Authenticate value. Returns nullopt for non-Digest schemes or
// when realm/nonce are missing.
std::optional<Challenge> parse_challenge(std::string_view header);

std::string format_authorization(const AuthorizationParams& p);
// Never throws; malformed input yields nullopt.
std::optional<AuthorizationParams> parse_authorization(std::string_view header);

// Builds the Authorization header value. `nc` is the nonce count (1-based).
// Throws ProtocolError when the challenge does not offer qop=auth or uses an
// algorithm other than MD5.
std::string digest_client_sign(std::string_view method, std::string_view uri,
                               const Challenge& challenge, const DigestCredentials& creds,
                               std::string_view cnonce, std::uint32_t nc);

enum class DigestVerdict {
    Ok,
    Missing,           // no Authorization header
    Malformed,
    WrongCredentials,  // bad user, realm, uri or response hash
    UnknownNonce,
    Stale,             // hash valid but nonce expired: client should re-sign
    Replay,            // nonce count not increasing
};

std::string_view to_string(DigestVerdict v);

// Server side. Issues nonces and checks signed requests; safe to call from
// concurrent request handlers.
class DigestVerifier {
  public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit DigestVerifier(DigestCredentials creds, Clock clock = {}, std::uint64_t seed = 0);

    Challenge challenge(bool stale = false);
    DigestVerdict verify(std::string_view method, std::string_view uri,
                         std::string_view authorization);

    const DigestCredentials& credentials() const { return creds_; }
    std::size_t live_nonces() const;

  private:
    struct NonceState {
        std::chrono::steady_clock::time_point issued;
        std::uint32_t last_nc = 0;
    };

    std::chrono::steady_clock::time_point now() const;
    void prune_locked(std::chrono::steady_clock::time_point t);

    DigestCredentials creds_;
    Clock clock_;
    std::string opaque_;
    mutable std::mutex mu_;
    std::mt19937_64 rng_;
    std::map<std::string, NonceState, std::less<>> nonces_;
};

// Client side. Holds the current challenge and nonce count for one
// connection. Not thread-safe; one per polling loop.
class DigestSession {
  public:
    explicit DigestSession(DigestCredentials creds, std::uint64_t seed = 0);

    void accept_challenge(Challenge c);
    bool has_challenge() const { return challenge_.has_value(); }
    // Header for the next request; bumps the nonce count.
    std::string authorization(std::string_view method, std::string_view uri);

    const DigestCredentials& credentials() const { return creds_; }

  private:
    DigestCredentials creds_;
    std::optional<Challenge> challenge_;
    std::uint32_t nc_ = 0;
    std::mt19937_64 rng_;
};

}  // namespace dtwin::wire

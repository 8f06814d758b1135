#include "dtwin/wire/digest.hpp"

#include "dtwin/wire/messages.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <vector>

namespace dtwin::wire {
namespace {

std::string hex(const unsigned char* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(n * 2, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xf];
    }
    return out;
}

std::string random_hex(std::mt19937_64& rng, int words) {
    std::string out;
    for (int i = 0; i < words; ++i) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
        out += buf;
    }
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Splits `Digest k=v, k="v"` into a lowercase-key map. Returns false on
// syntax errors or a scheme other than Digest.
bool parse_params(std::string_view header, std::map<std::string, std::string>& out) {
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < header.size() && (header[i] == ' ' || header[i] == '\t')) ++i;
    };
    skip_ws();
    const std::size_t scheme_end = header.find_first_of(" \t", i);
    if (scheme_end == std::string_view::npos) return false;
    if (!iequals(header.substr(i, scheme_end - i), "Digest")) return false;
    i = scheme_end;

    while (true) {
        skip_ws();
        while (i < header.size() && header[i] == ',') {
            ++i;
            skip_ws();
        }
        if (i >= header.size()) break;
        const std::size_t key_start = i;
        while (i < header.size() && header[i] != '=' && header[i] != ',' && header[i] != ' ') ++i;
        if (i >= header.size() || header[i] != '=' || i == key_start) return false;
        std::string key = lower(header.substr(key_start, i - key_start));
        ++i;  // '='
        std::string value;
        if (i < header.size() && header[i] == '"') {
            ++i;
            bool closed = false;
            while (i < header.size()) {
                const char c = header[i++];
                if (c == '\\' && i < header.size()) {
                    value.push_back(header[i++]);
                } else if (c == '"') {
                    closed = true;
                    break;
                } else {
                    value.push_back(c);
                }
            }
            if (!closed) return false;
        } else {
            const std::size_t v_start = i;
            while (i < header.size() && header[i] != ',' && header[i] != ' ' && header[i] != '\t') ++i;
            value = std::string(header.substr(v_start, i - v_start));
        }
        out[std::move(key)] = std::move(value);
        skip_ws();
        if (i < header.size() && header[i] != ',') return false;
    }
    return true;
}

std::string quote(std::string_view v) {
    std::string out = "\"";
    for (char c : v) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string get(const std::map<std::string, std::string>& m, const char* key) {
    auto it = m.find(key);
    return it == m.end() ? std::string{} : it->second;
}

bool offers_auth(std::string_view qop_list) {
    std::size_t start = 0;
    while (start <= qop_list.size()) {
        std::size_t end = qop_list.find(',', start);
        if (end == std::string_view::npos) end = qop_list.size();
        std::string_view tok = qop_list.substr(start, end - start);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (tok == "auth") return true;
        start = end + 1;
    }
    return false;
}

bool constant_time_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
    return diff == 0;
}

}  // namespace

std::string md5_hex(std::string_view data) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), out, &len, EVP_md5(), nullptr);
    return hex(out, len);
}

std::string digest_response(std::string_view method, std::string_view uri,
                            std::string_view username, std::string_view realm,
                            std::string_view password, std::string_view nonce,
                            std::string_view nc, std::string_view cnonce, std::string_view qop) {
    std::string a1;
    a1.append(username).append(":").append(realm).append(":").append(password);
    std::string a2;
    a2.append(method).append(":").append(uri);
    std::string kd = md5_hex(a1);
    kd.append(":").append(nonce).append(":").append(nc).append(":").append(cnonce);
    kd.append(":").append(qop).append(":").append(md5_hex(a2));
    return md5_hex(kd);
}

std::string format_challenge(const Challenge& c) {
    std::string out = "Digest realm=" + quote(c.realm) + ", qop=" + quote(c.qop) +
                      ", algorithm=" + c.algorithm + ", nonce=" + quote(c.nonce);
    if (!c.opaque.empty()) out += ", opaque=" + quote(c.opaque);
    if (c.stale) out += ", stale=true";
    return out;
}

std::optional<Challenge> parse_challenge(std::string_view header) {
    std::map<std::string, std::string> m;
    if (!parse_params(header, m)) return std::nullopt;
    Challenge c;
    c.realm = get(m, "realm");
    c.nonce = get(m, "nonce");
    if (c.realm.empty() || c.nonce.empty()) return std::nullopt;
    c.opaque = get(m, "opaque");
    c.qop = get(m, "qop");
    c.algorithm = m.count("algorithm") ? get(m, "algorithm") : "MD5";
    c.stale = iequals(get(m, "stale"), "true");
    return c;
}

std::string format_authorization(const AuthorizationParams& p) {
    std::string out = "Digest username=" + quote(p.username) + ", realm=" + quote(p.realm) +
                      ", nonce=" + quote(p.nonce) + ", uri=" + quote(p.uri) +
                      ", algorithm=" + (p.algorithm.empty() ? std::string("MD5") : p.algorithm) +
                      ", response=" + quote(p.response) + ", qop=" + p.qop + ", nc=" + p.nc +
                      ", cnonce=" + quote(p.cnonce);
    if (!p.opaque.empty()) out += ", opaque=" + quote(p.opaque);
    return out;
}

std::optional<AuthorizationParams> parse_authorization(std::string_view header) {
    std::map<std::string, std::string> m;
    if (!parse_params(header, m)) return std::nullopt;
    AuthorizationParams p;
    p.username = get(m, "username");
    p.realm = get(m, "realm");
    p.nonce = get(m, "nonce");
    p.uri = get(m, "uri");
    p.response = get(m, "response");
    p.qop = get(m, "qop");
    p.nc = get(m, "nc");
    p.cnonce = get(m, "cnonce");
    p.opaque = get(m, "opaque");
    p.algorithm = get(m, "algorithm");
    if (p.username.empty() || p.nonce.empty() || p.uri.empty() || p.response.empty()) {
        return std::nullopt;
    }
    return p;
}

std::string digest_client_sign(std::string_view method, std::string_view uri,
                               const Challenge& challenge, const DigestCredentials& creds,
                               std::string_view cnonce, std::uint32_t nc) {
    if (!offers_auth(challenge.qop)) {
        throw ProtocolError("qop", "unsupported digest qop \"" + challenge.qop + "\"");
    }
    if (!challenge.algorithm.empty() && !iequals(challenge.algorithm, "MD5")) {
        throw ProtocolError("algorithm", "unsupported digest algorithm " + challenge.algorithm);
    }
    char nc_buf[9];
    std::snprintf(nc_buf, sizeof nc_buf, "%08x", nc);
    AuthorizationParams p;
    p.username = creds.username;
    p.realm = challenge.realm;
    p.nonce = challenge.nonce;
    p.uri = std::string(uri);
    p.qop = "auth";
    p.nc = nc_buf;
    p.cnonce = std::string(cnonce);
    p.opaque = challenge.opaque;
    p.algorithm = "MD5";
    p.response = digest_response(method, uri, creds.username, challenge.realm, creds.password,
                                 challenge.nonce, p.nc, cnonce, p.qop);
    return format_authorization(p);
}

std::string_view to_string(DigestVerdict v) {
    switch (v) {
        case DigestVerdict::Ok: return "ok";
        case DigestVerdict::Missing: return "missing credentials";
        case DigestVerdict::Malformed: return "malformed authorization header";
        case DigestVerdict::WrongCredentials: return "wrong credentials";
        case DigestVerdict::UnknownNonce: return "unknown nonce";
        case DigestVerdict::Stale: return "stale nonce";
        case DigestVerdict::Replay: return "replayed nonce count";
    }
    return "unknown";
}

DigestVerifier::DigestVerifier(DigestCredentials creds, Clock clock, std::uint64_t seed)
    : creds_(std::move(creds)),
      clock_(std::move(clock)),
      rng_(seed ? seed : std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)) {
    opaque_ = random_hex(rng_, 1);
}

std::chrono::steady_clock::time_point DigestVerifier::now() const {
    return clock_ ? clock_() : std::chrono::steady_clock::now();
}

void DigestVerifier::prune_locked(std::chrono::steady_clock::time_point t) {
    constexpr std::size_t kMaxNonces = 4096;
    for (auto it = nonces_.begin(); it != nonces_.end();) {
        // keep expired nonces for one extra lifetime so late clients get "stale"
        if (t - it->second.issued > 2 * creds_.nonce_lifetime) {
            it = nonces_.erase(it);
        } else {
            ++it;
        }
    }
    while (nonces_.size() >= kMaxNonces) {
        auto oldest = std::min_element(nonces_.begin(), nonces_.end(), [](const auto& a, const auto& b) {
            return a.second.issued < b.second.issued;
        });
        nonces_.erase(oldest);
    }
}

Challenge DigestVerifier::challenge(bool stale) {
    std::lock_guard lock(mu_);
    const auto t = now();
    prune_locked(t);
    Challenge c;
    c.realm = creds_.realm;
    c.nonce = random_hex(rng_, 2);
    c.opaque = opaque_;
    c.stale = stale;
    nonces_[c.nonce] = NonceState{t, 0};
    return c;
}

std::size_t DigestVerifier::live_nonces() const {
    std::lock_guard lock(mu_);
    return nonces_.size();
}

DigestVerdict DigestVerifier::verify(std::string_view method, std::string_view uri,
                                     std::string_view authorization) {
    if (authorization.empty()) return DigestVerdict::Missing;
    const auto p = parse_authorization(authorization);
    if (!p || p->qop != "auth" || p->nc.size() != 8 || p->cnonce.empty()) {
        return DigestVerdict::Malformed;
    }
    std::uint32_t nc = 0;
    for (char c : p->nc) {
        if (!std::isxdigit(static_cast<unsigned char>(c))) return DigestVerdict::Malformed;
        nc = nc * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(c))
                                                      ? c - '0'
                                                      : std::tolower(static_cast<unsigned char>(c)) - 'a' + 10);
    }
    if (p->username != creds_.username || p->realm != creds_.realm || p->uri != uri) {
        return DigestVerdict::WrongCredentials;
    }
    const std::string expected = digest_response(method, p->uri, creds_.username, creds_.realm,
                                                 creds_.password, p->nonce, p->nc, p->cnonce, p->qop);
    if (!constant_time_equal(expected, p->response)) return DigestVerdict::WrongCredentials;

    std::lock_guard lock(mu_);
    auto it = nonces_.find(p->nonce);
    if (it == nonces_.end()) return DigestVerdict::UnknownNonce;
    if (now() - it->second.issued > creds_.nonce_lifetime) return DigestVerdict::Stale;
    if (nc <= it->second.last_nc) return DigestVerdict::Replay;
    it->second.last_nc = nc;
    return DigestVerdict::Ok;
}

DigestSession::DigestSession(DigestCredentials creds, std::uint64_t seed)
    : creds_(std::move(creds)),
      rng_(seed ? seed : std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)) {}

void DigestSession::accept_challenge(Challenge c) {
    challenge_ = std::move(c);
    nc_ = 0;
}

std::string DigestSession::authorization(std::string_view method, std::string_view uri) {
    if (!challenge_) return {};
    const std::string cnonce = random_hex(rng_, 1);
    return digest_client_sign(method, uri, *challenge_, creds_, cnonce, ++nc_);
}

}  // namespace dtwin::wire

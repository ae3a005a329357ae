#pragma once
// HTTP/JSON session service. Every state transition is appended (and fsynced)
// to the session's JSONL log before the response is built; the in-memory
// trace is only replaced after the append succeeds.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lexlearn/design.hpp"
#include "lexlearn/errors.hpp"
#include "lexlearn/gateway/session_log.hpp"
#include "lexlearn/session.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn::gateway {

struct ServiceConfig {
    std::filesystem::path kg_dir;
    std::filesystem::path log_dir;
};

// Status code plus JSON body; handlers are plain functions of the request so
// they can be exercised without a socket.
struct Reply {
    int status = 200;
    nlohmann::json body;
};

inline Reply error_reply(int status, std::string code, std::string message,
                         nlohmann::json detail = nlohmann::json::object()) {
    return {status, {{"code", std::move(code)}, {"message", std::move(message)}, {"detail", detail}}};
}

inline std::map<std::string, KnowledgeGraph> load_kg_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw Error("knowledge graph directory '" + dir.string() + "' is not readable");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::map<std::string, KnowledgeGraph> out;
    for (const auto& f : files) {
        KnowledgeGraph kg = [&] {
            try {
                return load_kg_file(f.string());
            } catch (const Error& e) {
                throw Error(f.string() + ": " + e.what());
            }
        }();
        const std::string id = kg.id();
        if (!out.emplace(id, std::move(kg)).second)
            throw Error("duplicate knowledge graph id '" + id + "' in " + f.string());
    }
    return out;
}

class Service {
public:
    explicit Service(const ServiceConfig& cfg)
        : kgs_(load_kg_dir(cfg.kg_dir)), log_(cfg.log_dir) {
        auto recovered = recover(cfg.log_dir, [this](const std::string& id) { return find_kg(id); });
        for (auto& [id, trace] : recovered.sessions) {
            auto entry = std::make_shared<Entry>();
            entry->trace = std::move(trace);
            sessions_.emplace(id, std::move(entry));
        }
        for (auto& q : recovered.quarantined) quarantined_.emplace(q.session_id, std::move(q));
    }

    const KnowledgeGraph* find_kg(const std::string& id) const {
        auto it = kgs_.find(id);
        return it == kgs_.end() ? nullptr : &it->second;
    }

    std::size_t session_count() const {
        std::lock_guard lk(map_mu_);
        return sessions_.size();
    }

    const std::map<std::string, QuarantinedSession>& quarantined() const { return quarantined_; }

    std::optional<SessionTrace> snapshot(const std::string& id) const {
        auto entry = find_entry(id);
        if (!entry) return std::nullopt;
        std::lock_guard lk(entry->mu);
        return entry->trace;
    }

    // POST /api/v1/sessions
    Reply create_session(const std::string& raw_body) {
        nlohmann::json body;
        if (auto err = parse_body(raw_body, body)) return *err;
        if (!body.is_object() || !body.contains("kg") || !body["kg"].is_string() ||
            !body.contains("query") || !body["query"].is_string())
            return error_reply(400, "bad_request", "body must contain string fields 'kg' and 'query'");
        const std::string kg_id = body["kg"].get<std::string>();
        const KnowledgeGraph* kg = find_kg(kg_id);
        if (!kg) return error_reply(404, "unknown_kg", "no knowledge graph with id '" + kg_id + "'");

        SessionConfig cfg;
        try {
            nlohmann::json cj = nlohmann::json::object();
            for (const char* k : {"bundle_size", "epsilon", "epsilon_noclick", "threshold",
                                  "max_steps", "policy", "seed"})
                if (body.contains(k) && !body[k].is_null()) cj[k] = body[k];
            cfg = session_config_from_json(cj);
            cfg.validate();
        } catch (const Error& e) {
            return error_reply(422, "invalid_config", e.what());
        }

        auto entry = std::make_shared<Entry>();
        std::lock_guard entry_lock(entry->mu);
        std::string id;
        {
            std::lock_guard lk(map_mu_);
            do {
                id = new_session_id();
            } while (sessions_.count(id) || quarantined_.count(id));
            sessions_.emplace(id, entry);  // reserved; guarded by entry->mu until written
        }
        try {
            SessionTrace t = start_session(*kg, body["query"].get<std::string>(), cfg, id);
            log_.append(transition_records(nullptr, t));
            entry->trace = std::move(t);
        } catch (const Error& e) {
            std::lock_guard lk(map_mu_);
            sessions_.erase(id);
            return error_reply(422, "invalid_request", e.what());
        }
        return {201, session_summary(entry->trace, true)};
    }

    // POST /api/v1/sessions/{id}/feedback
    Reply submit(const std::string& id, const std::string& raw_body) {
        nlohmann::json body;
        if (auto err = parse_body(raw_body, body)) return *err;
        if (!body.is_object() || !body.contains("clicked") ||
            !(body["clicked"].is_string() || body["clicked"].is_null()))
            return error_reply(400, "bad_request", "body must contain 'clicked' (product id or null)");
        const Feedback y = feedback_from_json(body["clicked"]);

        if (auto q = quarantined_reply(id)) return *q;
        auto entry = find_entry(id);
        if (!entry) return error_reply(404, "unknown_session", "no session with id '" + id + "'");
        std::lock_guard lk(entry->mu);
        const SessionTrace& cur = entry->trace;
        const KnowledgeGraph* kg = find_kg(cur.kg_id);
        if (cur.terminal() || !cur.pending_step())
            return error_reply(409, "not_pending",
                               std::string("session is ") + to_string(cur.status) +
                                   "; no feedback is pending");
        if (y.clicked && !cur.pending_step()->bundle.contains(*y.clicked))
            return error_reply(422, "invalid_feedback",
                               "clicked product '" + *y.clicked + "' is not in the pending bundle " +
                                   cur.pending_step()->bundle.to_string(),
                               {{"clicked", *y.clicked},
                                {"bundle", to_json(cur.pending_step()->bundle)}});
        SessionTrace next = submit_feedback(cur, *kg, y);
        log_.append(transition_records(&cur, next));
        entry->trace = std::move(next);
        return {200, session_summary(entry->trace, false)};
    }

    // GET /api/v1/sessions/{id}
    Reply get_session(const std::string& id) const {
        if (auto q = quarantined_reply(id)) return *q;
        auto t = snapshot(id);
        if (!t) return error_reply(404, "unknown_session", "no session with id '" + id + "'");
        return {200, to_json(*t)};
    }

    // GET /api/v1/sessions/{id}/eig
    Reply get_eig(const std::string& id) const {
        if (auto q = quarantined_reply(id)) return *q;
        auto t = snapshot(id);
        if (!t) return error_reply(404, "unknown_session", "no session with id '" + id + "'");
        const KnowledgeGraph* kg = find_kg(t->kg_id);
        const auto sel = select_bundle(t->belief(), *kg, t->config.bundle_size, t->config.noise,
                                       t->config.candidate_cap);
        return {200, eig_table_json(sel.table)};
    }

    // GET /api/v1/kgs
    Reply list_kgs() const {
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& [id, kg] : kgs_) ids.push_back(id);
        return {200, ids};
    }

    // GET /api/v1/kgs/{id}
    Reply get_kg(const std::string& id) const {
        const KnowledgeGraph* kg = find_kg(id);
        if (!kg) return error_reply(404, "unknown_kg", "no knowledge graph with id '" + id + "'");
        return {200, to_json(*kg)};
    }

    void mount(httplib::Server& svr) {
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        svr.Post("/api/v1/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, guarded([&] { return create_session(req.body); }));
        });
        svr.Post(R"(/api/v1/sessions/([^/]+)/feedback)",
                 [this, send](const httplib::Request& req, httplib::Response& res) {
                     send(res, guarded([&] { return submit(req.matches[1], req.body); }));
                 });
        svr.Get(R"(/api/v1/sessions/([^/]+)/eig)",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                    send(res, guarded([&] { return get_eig(req.matches[1]); }));
                });
        svr.Get(R"(/api/v1/sessions/([^/]+))",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                    send(res, guarded([&] { return get_session(req.matches[1]); }));
                });
        svr.Get("/api/v1/kgs", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, list_kgs());
        });
        svr.Get(R"(/api/v1/kgs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, get_kg(req.matches[1]));
        });
    }

private:
    struct Entry {
        std::mutex mu;
        SessionTrace trace;
    };

    template <typename F>
    static Reply guarded(F&& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            return error_reply(500, "internal_error", e.what());
        }
    }

    static std::optional<Reply> parse_body(const std::string& raw, nlohmann::json& out) {
        try {
            out = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error& e) {
            return error_reply(400, "bad_request", "request body is not valid JSON",
                               {{"parser", e.what()}});
        }
        return std::nullopt;
    }

    std::optional<Reply> quarantined_reply(const std::string& id) const {
        auto it = quarantined_.find(id);
        if (it == quarantined_.end()) return std::nullopt;
        return error_reply(409, "quarantined", "session log is corrupt; session quarantined",
                           {{"diagnostic", it->second.diagnostic}});
    }

    std::shared_ptr<Entry> find_entry(const std::string& id) const {
        std::lock_guard lk(map_mu_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    static nlohmann::json session_summary(const SessionTrace& t, bool include_id) {
        nlohmann::json out = {{"status", to_string(t.status)}, {"belief", to_json(t.belief())}};
        if (include_id) out["session_id"] = t.session_id;
        const SessionStep* p = t.pending_step();
        out["bundle"] = p ? to_json(p->bundle) : nlohmann::json(nullptr);
        if (auto entry = lexicon_entry(t))
            out["lexicon_entry"] = {{"node", entry->first}, {"confidence", entry->second}};
        return out;
    }

    std::string new_session_id() {
        std::uint64_t v = (static_cast<std::uint64_t>(rd_()) << 32) ^ rd_() ^ (++counter_ << 48);
        char buf[24];
        std::snprintf(buf, sizeof buf, "s%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

    std::map<std::string, KnowledgeGraph> kgs_;
    SessionLogWriter log_;
    mutable std::mutex map_mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::map<std::string, QuarantinedSession> quarantined_;
    std::random_device rd_;
    std::uint64_t counter_ = 0;
};

// "host:port" or ":port" (host defaults to 127.0.0.1).
inline std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw ValidationError("bind address must be host:port");
    std::string host = bind.substr(0, colon);
    if (host.empty()) host = "127.0.0.1";
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(bind.substr(colon + 1), &used);
        if (used != bind.size() - colon - 1) throw std::invalid_argument("port");
    } catch (const std::exception&) {
        throw ValidationError("invalid port in bind address '" + bind + "'");
    }
    if (port < 0 || port > 65535) throw ValidationError("port out of range in '" + bind + "'");
    return {host, port};
}

}  // namespace lexlearn::gateway

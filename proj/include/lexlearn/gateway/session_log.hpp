#pragma once
// Append-only JSONL session logs: one file per session, one record per state
// transition. Recovery replays the logged observations through the inference
// engine; beliefs are never read back from disk.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexlearn/errors.hpp"
#include "lexlearn/session.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn::gateway {

enum class EventKind { Started = 0, BundleShown = 1, Feedback = 2, Converged = 3, Exhausted = 4 };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Started: return "started";
        case EventKind::BundleShown: return "bundle_shown";
        case EventKind::Feedback: return "feedback";
        case EventKind::Converged: return "converged";
        case EventKind::Exhausted: return "exhausted";
    }
    return "started";
}

inline EventKind event_kind_from_string(const std::string& s) {
    if (s == "started") return EventKind::Started;
    if (s == "bundle_shown") return EventKind::BundleShown;
    if (s == "feedback") return EventKind::Feedback;
    if (s == "converged") return EventKind::Converged;
    if (s == "exhausted") return EventKind::Exhausted;
    throw ParseError("unknown event kind '" + s + "'");
}

struct LogRecord {
    std::string session_id;
    std::size_t step = 0;
    std::string timestamp;  // RFC 3339, UTC
    EventKind event = EventKind::Started;
    nlohmann::json payload = nlohmann::json::object();
};

inline std::string rfc3339_now() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t secs = system_clock::to_time_t(now);
    const auto micros = duration_cast<microseconds>(now.time_since_epoch()).count() % 1'000'000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[64];
    std::snprintf(out, sizeof out, "%s.%06lldZ", buf, static_cast<long long>(micros));
    return out;
}

inline nlohmann::json to_json(const LogRecord& r) {
    return {{"session_id", r.session_id},
            {"step", r.step},
            {"timestamp", r.timestamp},
            {"event", to_string(r.event)},
            {"payload", r.payload}};
}

inline LogRecord log_record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("log record must be a JSON object");
    try {
        LogRecord r;
        r.session_id = j.at("session_id").get<std::string>();
        r.step = j.at("step").get<std::size_t>();
        r.timestamp = j.at("timestamp").get<std::string>();
        r.event = event_kind_from_string(j.at("event").get<std::string>());
        r.payload = j.at("payload");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed log record: ") + e.what());
    }
}

// Records describing the transition from `before` (nullptr at session start)
// to `after`.
inline std::vector<LogRecord> transition_records(const SessionTrace* before,
                                                 const SessionTrace& after) {
    std::vector<LogRecord> out;
    const std::string ts = rfc3339_now();
    auto add = [&](std::size_t step, EventKind ev, nlohmann::json payload) {
        out.push_back(LogRecord{after.session_id, step, ts, ev, std::move(payload)});
    };

    std::size_t step = 0;
    if (!before) {
        add(0, EventKind::Started,
            {{"kg", after.kg_id}, {"query", after.query}, {"config", to_json(after.config)}});
    } else {
        const SessionStep& answered = after.steps.at(before->steps.size() - 1);
        step = answered.index;
        add(step, EventKind::Feedback, {{"clicked", to_json(*answered.feedback)}});
    }

    if (after.status == SessionStatus::Converged) {
        const auto entry = lexicon_entry(after);
        add(step, EventKind::Converged, {{"node", entry->first}, {"confidence", entry->second}});
    } else if (after.status == SessionStatus::Exhausted) {
        add(step, EventKind::Exhausted, nlohmann::json::object());
    } else if (const SessionStep* p = after.pending_step()) {
        add(p->index, EventKind::BundleShown, {{"bundle", to_json(p->bundle)}});
    }
    return out;
}

// Appends whole lines and fsyncs before returning.
class SessionLogWriter {
public:
    explicit SessionLogWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::filesystem::path path_for(const std::string& session_id) const {
        return dir_ / (session_id + ".jsonl");
    }

    void append(const std::vector<LogRecord>& records) const {
        if (records.empty()) return;
        std::string buf;
        for (const auto& r : records) {
            buf += to_json(r).dump();
            buf += '\n';
        }
        const auto path = path_for(records.front().session_id);
        const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("cannot open session log " + path.string() + ": " + std::strerror(errno));
        std::size_t off = 0;
        while (off < buf.size()) {
            const ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                const std::string err = std::strerror(errno);
                ::close(fd);
                throw Error("write to session log " + path.string() + " failed: " + err);
            }
            off += static_cast<std::size_t>(n);
        }
        if (::fsync(fd) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw Error("fsync of session log " + path.string() + " failed: " + err);
        }
        ::close(fd);
    }

private:
    std::filesystem::path dir_;
};

struct QuarantinedSession {
    std::string session_id;
    std::string diagnostic;
    std::optional<SessionTrace> valid_prefix;
};

struct RecoveryResult {
    std::map<std::string, SessionTrace> sessions;
    std::vector<QuarantinedSession> quarantined;
};

using KgLookup = std::function<const KnowledgeGraph*(const std::string&)>;

namespace detail {

struct ParsedLog {
    std::vector<LogRecord> records;
    std::optional<std::string> error;  // first problem encountered
};

inline ParsedLog read_log(const std::filesystem::path& path, const std::string& session_id) {
    ParsedLog out;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        out.error = "cannot open " + path.string();
        return out;
    }
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
        ++line_no;
        const std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) {
            out.error = "line " + std::to_string(line_no) + ": truncated record (no newline)";
            return out;
        }
        const std::string line = content.substr(pos, nl - pos);
        pos = nl + 1;
        LogRecord rec;
        try {
            rec = log_record_from_json(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            out.error = "line " + std::to_string(line_no) + ": " + e.what();
            return out;
        }
        if (rec.session_id != session_id) {
            out.error = "line " + std::to_string(line_no) + ": record for session '" +
                        rec.session_id + "' in log of '" + session_id + "'";
            return out;
        }
        if (!out.records.empty()) {
            const auto& prev = out.records.back();
            const bool ordered = rec.step > prev.step ||
                                 (rec.step == prev.step && static_cast<int>(rec.event) >
                                                               static_cast<int>(prev.event));
            if (!ordered) {
                out.error = "line " + std::to_string(line_no) + ": record out of order";
                return out;
            }
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Replays the records into a trace. In strict mode logged terminal events must
// agree with the recomputed status; otherwise (a truncated prefix) the missing
// tail is recomputed: terminal status from the stopping rule, or the policy's
// next bundle.
inline SessionTrace rebuild(const std::vector<LogRecord>& records, const std::string& session_id,
                            const KgLookup& lookup, bool strict = true) {
    if (records.empty() || records.front().event != EventKind::Started)
        throw ValidationError("log does not begin with a 'started' record");
    const auto& head = records.front().payload;
    std::string kg_id, query;
    SessionConfig cfg;
    try {
        kg_id = head.at("kg").get<std::string>();
        query = head.at("query").get<std::string>();
        cfg = session_config_from_json(head.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed 'started' payload: ") + e.what());
    }
    const KnowledgeGraph* kg = lookup(kg_id);
    if (!kg) throw ValidationError("log references unknown knowledge graph '" + kg_id + "'");

    std::vector<Bundle> shown;
    std::vector<Feedback> feedback;
    std::optional<EventKind> terminal;
    std::optional<std::string> logged_node;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (terminal) throw ValidationError("record after terminal event");
        try {
            switch (r.event) {
                case EventKind::Started:
                    throw ValidationError("duplicate 'started' record");
                case EventKind::BundleShown:
                    if (r.step != shown.size() || feedback.size() != shown.size())
                        throw ValidationError("bundle_shown at unexpected step");
                    shown.push_back(bundle_from_json(r.payload.at("bundle")));
                    break;
                case EventKind::Feedback:
                    if (shown.size() != feedback.size() + 1 || r.step + 1 != shown.size())
                        throw ValidationError("feedback without a pending bundle");
                    feedback.push_back(feedback_from_json(r.payload.at("clicked")));
                    break;
                case EventKind::Converged:
                    terminal = r.event;
                    logged_node = r.payload.at("node").get<std::string>();
                    break;
                case EventKind::Exhausted:
                    terminal = r.event;
                    break;
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed payload: ") + e.what());
        }
    }

    SessionTrace t = replay_session(*kg, session_id, query, cfg, shown, feedback);
    if (!strict) {
        if (!t.terminal() && !t.pending_step()) {
            const std::size_t next = t.steps.size();
            t.steps.push_back(SessionStep{next, policy_bundle(t.belief(), *kg, cfg, next), {}, {}});
        }
        return t;
    }
    const bool consistent =
        (!terminal && !t.terminal()) ||
        (terminal == EventKind::Converged && t.status == SessionStatus::Converged &&
         t.converged_node == logged_node) ||
        (terminal == EventKind::Exhausted && t.status == SessionStatus::Exhausted);
    if (!consistent) {
        throw ValidationError(std::string("replayed status '") + to_string(t.status) +
                              "' disagrees with the log");
    }
    if (!t.terminal() && !t.pending_step())
        throw ValidationError("active session without a pending bundle");
    return t;
}

}  // namespace detail

// Replays every {session_id}.jsonl under `dir`. A corrupt log quarantines only
// its own session; the trace of its valid prefix is kept when it replays.
inline RecoveryResult recover(const std::filesystem::path& dir, const KgLookup& lookup) {
    RecoveryResult out;
    if (!std::filesystem::exists(dir)) return out;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& path : files) {
        const std::string id = path.stem().string();
        auto parsed = detail::read_log(path, id);
        if (parsed.error) {
            QuarantinedSession q{id, *parsed.error, std::nullopt};
            try {
                q.valid_prefix = detail::rebuild(parsed.records, id, lookup, false);
            } catch (const std::exception&) {
                // prefix not replayable on its own; keep the diagnostic only
            }
            out.quarantined.push_back(std::move(q));
            continue;
        }
        try {
            out.sessions.emplace(id, detail::rebuild(parsed.records, id, lookup));
        } catch (const std::exception& e) {
            out.quarantined.push_back(QuarantinedSession{id, e.what(), std::nullopt});
        }
    }
    return out;
}

}  // namespace lexlearn::gateway

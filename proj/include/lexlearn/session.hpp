#pragma once
// Per-word session: alternate bundle selection and posterior update until the
// belief concentrates on one node or the step budget runs out.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexlearn/bundle.hpp"
#include "lexlearn/design.hpp"
#include "lexlearn/errors.hpp"
#include "lexlearn/inference.hpp"
#include "lexlearn/rng.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn {

struct Policy {
    enum class Kind { Eig, Random };
    Kind kind = Kind::Eig;
    std::uint64_t seed = 0;  // Random only

    static Policy eig() { return {}; }
    static Policy random(std::uint64_t seed) { return {Kind::Random, seed}; }

    bool operator==(const Policy&) const = default;
};

struct SessionConfig {
    std::size_t bundle_size = kDefaultBundleSize;
    NoiseConfig noise;
    double convergence_threshold = 0.95;
    std::size_t max_steps = 20;
    Policy policy;
    OdConfig od;
    std::uint64_t candidate_cap = kDefaultCandidateCap;

    void validate() const {
        if (bundle_size == 0) throw ValidationError("bundle_size must be positive");
        if (!(convergence_threshold > 0.5 && convergence_threshold <= 1.0))
            throw ValidationError("convergence threshold must lie in (0.5, 1]");
        if (max_steps == 0) throw ValidationError("max_steps must be positive");
        if (!(od.od_min > 0.0)) throw ValidationError("od_min must be positive");
        noise.validate();
    }
};

enum class SessionStatus { Active, Converged, Exhausted };

inline const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::Active: return "active";
        case SessionStatus::Converged: return "converged";
        case SessionStatus::Exhausted: return "exhausted";
    }
    return "active";
}

struct SessionStep {
    std::size_t index = 0;
    Bundle bundle;
    std::optional<Feedback> feedback;  // absent while pending
    std::optional<BeliefState> belief;  // posterior after this step's feedback

    bool pending() const { return !feedback.has_value(); }
};

struct SessionTrace {
    std::string session_id;
    std::string kg_id;
    std::string query;
    SessionConfig config;
    BeliefState prior;
    std::vector<SessionStep> steps;
    SessionStatus status = SessionStatus::Active;
    std::optional<std::string> converged_node;

    const BeliefState& belief() const {
        for (auto it = steps.rbegin(); it != steps.rend(); ++it)
            if (it->belief) return *it->belief;
        return prior;
    }

    const SessionStep* pending_step() const {
        if (steps.empty() || !steps.back().pending()) return nullptr;
        return &steps.back();
    }

    std::size_t completed_steps() const {
        std::size_t n = 0;
        for (const auto& s : steps) n += s.pending() ? 0 : 1;
        return n;
    }

    bool terminal() const { return status != SessionStatus::Active; }

    std::vector<Observation> observations() const {
        std::vector<Observation> obs;
        for (const auto& s : steps)
            if (s.feedback) obs.emplace_back(s.bundle, *s.feedback);
        return obs;
    }
};

// Bundle the configured policy shows at step `step`. The random policy draws
// from a generator seeded by (seed, step), so it needs no carried state.
inline Bundle policy_bundle(const BeliefState& belief, const KnowledgeGraph& kg,
                            const SessionConfig& cfg, std::size_t step) {
    if (cfg.policy.kind == Policy::Kind::Eig)
        return select_bundle(belief, kg, cfg.bundle_size, cfg.noise, cfg.candidate_cap).bundle;
    const auto all = enumerate_bundles(kg, cfg.bundle_size, cfg.candidate_cap);
    Engine eng(derive_seed(cfg.policy.seed, step));
    return all[static_cast<std::size_t>(uniform_index(eng, all.size()))];
}

namespace detail {

// Applies the stopping rule after `belief` became current; opens the next
// pending step when the session continues.
inline void settle(SessionTrace& t, const KnowledgeGraph& kg) {
    const BeliefState& b = t.belief();
    if (b.max_mass() >= t.config.convergence_threshold) {
        t.status = SessionStatus::Converged;
        t.converged_node = b.argmax_id();
        return;
    }
    if (t.completed_steps() >= t.config.max_steps) {
        t.status = SessionStatus::Exhausted;
        return;
    }
    const std::size_t next = t.steps.size();
    t.steps.push_back(SessionStep{next, policy_bundle(b, kg, t.config, next), {}, {}});
}

}  // namespace detail

inline SessionTrace start_session(const KnowledgeGraph& kg, std::string query,
                                  const SessionConfig& cfg, std::string session_id = {}) {
    cfg.validate();
    if (query.empty()) throw ValidationError("query word must be non-empty");
    if (cfg.bundle_size > kg.product_count())
        throw ValidationError("bundle_size exceeds the number of products");
    SessionTrace t;
    t.session_id = std::move(session_id);
    t.kg_id = kg.id();
    t.query = std::move(query);
    t.config = cfg;
    t.prior = prior(kg, cfg.od);
    detail::settle(t, kg);
    return t;
}

inline SessionTrace submit_feedback(const SessionTrace& trace, const KnowledgeGraph& kg,
                                    const Feedback& y) {
    if (trace.kg_id != kg.id())
        throw ValidationError("session belongs to knowledge graph '" + trace.kg_id + "'");
    if (trace.terminal())
        throw StateError(std::string("session is ") + to_string(trace.status) +
                         "; no feedback is pending");
    const SessionStep* pending = trace.pending_step();
    if (!pending) throw StateError("session has no pending step");
    detail::check_feedback(pending->bundle, y);

    SessionTrace next = trace;
    SessionStep& step = next.steps.back();
    step.belief = update(trace.belief(), kg, step.bundle, y, trace.config.noise);
    step.feedback = y;
    detail::settle(next, kg);
    return next;
}

// The learned meaning of the query word; present only once converged.
inline std::optional<std::pair<std::string, double>> lexicon_entry(const SessionTrace& t) {
    if (t.status != SessionStatus::Converged) return std::nullopt;
    const auto& b = t.belief();
    return std::make_pair(b.argmax_id(), b.max_mass());
}

// Rebuilds a trace from its observation sequence, recomputing each belief by a
// joint update from the prior. `shown` lists every bundle in order; it may hold
// one more entry than `feedback` (the pending step).
inline SessionTrace replay_session(const KnowledgeGraph& kg, std::string session_id,
                                   std::string query, const SessionConfig& cfg,
                                   const std::vector<Bundle>& shown,
                                   const std::vector<Feedback>& feedback) {
    cfg.validate();
    if (feedback.size() > shown.size() || shown.size() > feedback.size() + 1)
        throw ValidationError("replay: bundle/feedback sequence mismatch");
    SessionTrace t;
    t.session_id = std::move(session_id);
    t.kg_id = kg.id();
    t.query = std::move(query);
    t.config = cfg;
    t.prior = prior(kg, cfg.od);

    std::vector<Observation> obs;
    for (std::size_t k = 0; k < shown.size(); ++k) {
        SessionStep s{k, shown[k], {}, {}};
        shown[k].validate_against(kg);
        if (shown[k].size() != cfg.bundle_size)
            throw ValidationError("replay: bundle size does not match session config");
        if (k < feedback.size()) {
            detail::check_feedback(shown[k], feedback[k]);
            obs.emplace_back(shown[k], feedback[k]);
            s.feedback = feedback[k];
            s.belief = update_batch(t.prior, kg, obs, cfg.noise);
        }
        t.steps.push_back(std::move(s));
    }

    // Status from the stopping rule applied to the final belief.
    const BeliefState& b = t.belief();
    if (b.max_mass() >= cfg.convergence_threshold) {
        t.status = SessionStatus::Converged;
        t.converged_node = b.argmax_id();
    } else if (t.completed_steps() >= cfg.max_steps) {
        t.status = SessionStatus::Exhausted;
    }
    if (t.terminal() && t.pending_step())
        throw ValidationError("replay: bundle shown after the session terminated");
    return t;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const SessionConfig& c) {
    return {{"bundle_size", c.bundle_size},
            {"epsilon", c.noise.epsilon},
            {"epsilon_noclick", c.noise.epsilon_noclick},
            {"threshold", c.convergence_threshold},
            {"max_steps", c.max_steps},
            {"policy", c.policy.kind == Policy::Kind::Eig ? "eig" : "random"},
            {"seed", c.policy.seed},
            {"od_sibling_less", c.od.sibling_less},
            {"od_min", c.od.od_min},
            {"candidate_cap", c.candidate_cap}};
}

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("session config must be an object");
    SessionConfig c;
    try {
        c.bundle_size = j.value("bundle_size", c.bundle_size);
        c.noise.epsilon = j.value("epsilon", c.noise.epsilon);
        c.noise.epsilon_noclick = j.value("epsilon_noclick", c.noise.epsilon);
        c.convergence_threshold = j.value("threshold", c.convergence_threshold);
        c.max_steps = j.value("max_steps", c.max_steps);
        const std::string policy = j.value("policy", std::string("eig"));
        if (policy == "eig")
            c.policy = Policy::eig();
        else if (policy == "random")
            c.policy = Policy::random(j.value("seed", std::uint64_t{0}));
        else
            throw ValidationError("unknown policy '" + policy + "' (expected eig or random)");
        c.od.sibling_less = j.value("od_sibling_less", c.od.sibling_less);
        c.od.od_min = j.value("od_min", c.od.od_min);
        c.candidate_cap = j.value("candidate_cap", c.candidate_cap);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("session config: ") + e.what());
    }
    return c;
}

inline nlohmann::json to_json(const SessionTrace& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : t.steps) {
        nlohmann::json js = {{"index", s.index}, {"bundle", to_json(s.bundle)},
                             {"pending", s.pending()}};
        if (s.feedback) js["feedback"] = to_json(*s.feedback);
        if (s.belief) js["belief"] = to_json(*s.belief);
        steps.push_back(std::move(js));
    }
    nlohmann::json out = {{"session_id", t.session_id},
                          {"kg_id", t.kg_id},
                          {"query", t.query},
                          {"status", to_string(t.status)},
                          {"config", to_json(t.config)},
                          {"prior", to_json(t.prior)},
                          {"belief", to_json(t.belief())},
                          {"steps", steps}};
    if (t.converged_node) out["converged_node"] = *t.converged_node;
    if (auto entry = lexicon_entry(t))
        out["lexicon_entry"] = {{"node", entry->first}, {"confidence", entry->second}};
    return out;
}

}  // namespace lexlearn

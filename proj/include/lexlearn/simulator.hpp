#pragma once
// Seeded synthetic users and the batch harness comparing bundle-selection
// policies on a known ground-truth meaning.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexlearn/inference.hpp"
#include "lexlearn/rng.hpp"
#include "lexlearn/session.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn {

// Stream tag separating the user's generator from the random policy's.
inline constexpr std::uint64_t kUserStream = 0x8000'0000'0000'0000ULL;

class SimulatedUser {
public:
    SimulatedUser(const KnowledgeGraph& kg, std::string true_node, NoiseConfig noise,
                  std::uint64_t seed)
        : true_node_(std::move(true_node)),
          true_index_(kg.node_index(true_node_)),
          noise_(noise),
          seed_(seed),
          engine_(derive_seed(seed, kUserStream)) {
        noise_.validate();
    }

    const std::string& true_node() const { return true_node_; }
    const NoiseConfig& noise() const { return noise_; }
    std::uint64_t seed() const { return seed_; }

    // One categorical draw from the true node's outcome distribution.
    Feedback click(const KnowledgeGraph& kg, const Bundle& bundle) {
        bundle.validate_against(kg);
        const auto dist = outcome_distribution(kg, true_index_, bundle, noise_);
        const double u = uniform_unit(engine_);
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < dist.size(); ++k) {
            acc += dist[k];
            if (u < acc) return Feedback::click(bundle.products()[k]);
        }
        return Feedback::no_click();
    }

private:
    std::string true_node_;
    std::size_t true_index_;
    NoiseConfig noise_;
    std::uint64_t seed_;
    Engine engine_;
};

inline Feedback simulate_click(SimulatedUser& user, const KnowledgeGraph& kg,
                               const Bundle& bundle) {
    return user.click(kg, bundle);
}

struct TrialResult {
    std::uint64_t seed = 0;
    Policy::Kind policy = Policy::Kind::Eig;
    std::size_t steps_to_termination = 0;
    SessionStatus final_status = SessionStatus::Active;
    double true_node_mass = 0.0;
    SessionTrace trace;
};

// The random policy is reseeded with the trial seed so paired trials share it.
inline TrialResult run_trial(const KnowledgeGraph& kg, const std::string& query,
                             const std::string& true_node, SessionConfig cfg, std::uint64_t seed,
                             std::optional<NoiseConfig> user_noise = std::nullopt) {
    if (cfg.policy.kind == Policy::Kind::Random) cfg.policy.seed = seed;
    SimulatedUser user(kg, true_node, user_noise.value_or(cfg.noise), seed);
    SessionTrace t = start_session(kg, query, cfg, "trial-" + std::to_string(seed));
    while (!t.terminal()) {
        const Feedback y = simulate_click(user, kg, t.pending_step()->bundle);
        t = submit_feedback(t, kg, y);
    }
    TrialResult r;
    r.seed = seed;
    r.policy = cfg.policy.kind;
    r.steps_to_termination = t.completed_steps();
    r.final_status = t.status;
    r.true_node_mass = t.belief().at(true_node);
    r.trace = std::move(t);
    return r;
}

inline std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t i) {
    return splitmix64(base_seed + i);
}

inline std::vector<TrialResult> run_trials(const KnowledgeGraph& kg, const std::string& query,
                                           const std::string& true_node, const SessionConfig& cfg,
                                           std::size_t n_trials, std::uint64_t base_seed,
                                           std::optional<NoiseConfig> user_noise = std::nullopt) {
    if (n_trials == 0) throw ValidationError("n_trials must be at least 1");
    std::vector<TrialResult> out;
    out.reserve(n_trials);
    for (std::size_t i = 0; i < n_trials; ++i)
        out.push_back(run_trial(kg, query, true_node, cfg, trial_seed(base_seed, i), user_noise));
    return out;
}

struct PolicySummary {
    Policy::Kind policy = Policy::Kind::Eig;
    std::size_t trials = 0;
    double mean_steps = 0.0;
    double median_steps = 0.0;
    double convergence_rate = 0.0;
    double correct_rate = 0.0;  // converged on the true node
    double mean_true_node_mass = 0.0;
};

inline PolicySummary summarize(const std::vector<TrialResult>& trials,
                               const std::string& true_node) {
    PolicySummary s;
    if (trials.empty()) return s;
    s.policy = trials.front().policy;
    s.trials = trials.size();
    std::vector<std::size_t> steps;
    double sum_steps = 0.0, sum_mass = 0.0;
    std::size_t converged = 0, correct = 0;
    for (const auto& r : trials) {
        steps.push_back(r.steps_to_termination);
        sum_steps += static_cast<double>(r.steps_to_termination);
        sum_mass += r.true_node_mass;
        if (r.final_status == SessionStatus::Converged) {
            ++converged;
            if (r.trace.converged_node == true_node) ++correct;
        }
    }
    const double n = static_cast<double>(trials.size());
    s.mean_steps = sum_steps / n;
    s.mean_true_node_mass = sum_mass / n;
    s.convergence_rate = static_cast<double>(converged) / n;
    s.correct_rate = static_cast<double>(correct) / n;
    std::sort(steps.begin(), steps.end());
    const std::size_t mid = steps.size() / 2;
    s.median_steps = steps.size() % 2 ? static_cast<double>(steps[mid])
                                      : 0.5 * static_cast<double>(steps[mid - 1] + steps[mid]);
    return s;
}

struct PolicyComparison {
    PolicySummary eig;
    PolicySummary random;
};

// Paired comparison: trial i uses the same seed under both policies.
inline PolicyComparison compare_policies(const KnowledgeGraph& kg, const std::string& query,
                                         const std::string& true_node, SessionConfig cfg,
                                         std::size_t n_trials, std::uint64_t base_seed,
                                         std::optional<NoiseConfig> user_noise = std::nullopt) {
    PolicyComparison c;
    cfg.policy = Policy::eig();
    c.eig = summarize(run_trials(kg, query, true_node, cfg, n_trials, base_seed, user_noise),
                      true_node);
    cfg.policy = Policy::random(0);
    c.random = summarize(run_trials(kg, query, true_node, cfg, n_trials, base_seed, user_noise),
                         true_node);
    return c;
}

inline const char* to_string(Policy::Kind k) { return k == Policy::Kind::Eig ? "eig" : "random"; }

inline nlohmann::json to_json(const PolicySummary& s) {
    return {{"policy", to_string(s.policy)},
            {"trials", s.trials},
            {"mean_steps", s.mean_steps},
            {"median_steps", s.median_steps},
            {"convergence_rate", s.convergence_rate},
            {"correct_rate", s.correct_rate},
            {"mean_true_node_mass", s.mean_true_node_mass}};
}

inline void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials) {
    out << "seed,policy,steps,status,true_node_mass\n";
    char mass[32];
    for (const auto& r : trials) {
        std::snprintf(mass, sizeof mass, "%.17g", r.true_node_mass);
        out << r.seed << ',' << to_string(r.policy) << ',' << r.steps_to_termination << ','
            << to_string(r.final_status) << ',' << mass << '\n';
    }
}

}  // namespace lexlearn

#pragma once
// Optimal experiment selection: enumerate every size-n bundle, score each by
// expected information gain (expected KL from prior to posterior under the
// predictive distribution of feedback), return the argmax.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexlearn/bundle.hpp"
#include "lexlearn/errors.hpp"
#include "lexlearn/inference.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn {

inline constexpr std::uint64_t kDefaultCandidateCap = 100'000;
inline constexpr std::size_t kDefaultBundleSize = 2;

struct OutcomeProbability {
    Feedback outcome;
    double probability = 0.0;
};

using Predictive = std::vector<OutcomeProbability>;

struct EigReport {
    Bundle bundle;
    double eig = 0.0;  // nats
    Predictive predictive;
};

struct Selection {
    Bundle bundle;
    std::vector<EigReport> table;  // descending eig, ties in canonical order
};

// C(n, k), saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t num = n - k + i;
        // r * num / i is exact at every step; guard the multiplication.
        if (r > std::numeric_limits<std::uint64_t>::max() / num)
            return std::numeric_limits<std::uint64_t>::max();
        r = r * num / i;
    }
    return r;
}

inline std::vector<Bundle> enumerate_bundles(const KnowledgeGraph& kg, std::size_t n,
                                             std::uint64_t cap = kDefaultCandidateCap) {
    const std::size_t m = kg.product_count();
    if (n == 0 || n > m)
        throw ValidationError("bundle size " + std::to_string(n) + " out of range [1, " +
                              std::to_string(m) + "]");
    const std::uint64_t count = binomial(m, n);
    if (count > cap)
        throw ValidationError("candidate bundle count " + std::to_string(count) +
                              " exceeds cap " + std::to_string(cap));

    const auto ids = kg.sorted_product_ids();
    std::vector<Bundle> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<std::size_t> pick(n);
    for (std::size_t i = 0; i < n; ++i) pick[i] = i;
    for (;;) {
        std::vector<std::string> chosen;
        chosen.reserve(n);
        for (std::size_t i : pick) chosen.push_back(ids[i]);
        out.emplace_back(std::move(chosen));

        // Advance to the next combination in lexicographic order.
        std::size_t i = n;
        while (i > 0 && pick[i - 1] == m - n + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < n; ++j) pick[j] = pick[j - 1] + 1;
    }
    return out;
}

// KL(p || q) in nats, with 0 * ln(0/q) = 0.
inline double kl_divergence(const BeliefState& p, const BeliefState& q) {
    if (p.node_ids() != q.node_ids())
        throw ValidationError("kl_divergence: distributions are over different node sets");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0)
            throw ValidationError("kl_divergence: q has zero mass on node '" + p.node_ids()[i] +
                                  "' where p is positive");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

// p(y; b) = sum over nodes of P(y | node, b) P(node).
inline Predictive predictive(const BeliefState& belief, const KnowledgeGraph& kg,
                             const Bundle& bundle, const NoiseConfig& noise) {
    detail::check_belief_matches(belief, kg);
    bundle.validate_against(kg);
    noise.validate();
    std::vector<double> mix(bundle.size() + 1, 0.0);
    for (std::size_t i = 0; i < belief.size(); ++i) {
        if (belief[i] <= 0.0) continue;
        const auto lik = outcome_distribution(kg, i, bundle, noise);
        for (std::size_t k = 0; k < mix.size(); ++k) mix[k] += belief[i] * lik[k];
    }
    Predictive out;
    const auto ys = outcomes(bundle);
    for (std::size_t k = 0; k < ys.size(); ++k) out.push_back({ys[k], mix[k]});
    return out;
}

inline EigReport expected_information_gain(const BeliefState& belief, const KnowledgeGraph& kg,
                                           const Bundle& bundle, const NoiseConfig& noise) {
    EigReport report{bundle, 0.0, predictive(belief, kg, bundle, noise)};
    double eig = 0.0;
    for (const auto& [y, py] : report.predictive) {
        if (py <= 0.0) continue;
        eig += py * kl_divergence(update(belief, kg, bundle, y, noise), belief);
    }
    report.eig = std::max(eig, 0.0);
    return report;
}

namespace detail {

// Sort key treating eig values equal to within 1e-12 as ties.
inline long long eig_rank_key(double eig) { return std::llround(eig * 1e12); }

}  // namespace detail

inline Selection select_bundle(const BeliefState& belief, const KnowledgeGraph& kg, std::size_t n,
                               const NoiseConfig& noise,
                               std::uint64_t cap = kDefaultCandidateCap) {
    const auto candidates = enumerate_bundles(kg, n, cap);
    Selection sel;
    sel.table.reserve(candidates.size());
    for (const auto& b : candidates) sel.table.push_back(expected_information_gain(belief, kg, b, noise));
    std::stable_sort(sel.table.begin(), sel.table.end(), [](const EigReport& a, const EigReport& b) {
        return detail::eig_rank_key(a.eig) > detail::eig_rank_key(b.eig);
    });
    sel.bundle = sel.table.front().bundle;
    return sel;
}

inline nlohmann::json to_json(const Predictive& pred) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [y, p] : pred) out[y.key()] = p;
    return out;
}

inline nlohmann::json to_json(const EigReport& r) {
    return {{"bundle", to_json(r.bundle)}, {"eig", r.eig}, {"predictive", to_json(r.predictive)}};
}

inline nlohmann::json eig_table_json(const std::vector<EigReport>& table) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : table) out.push_back(to_json(r));
    return out;
}

}  // namespace lexlearn

#pragma once
// Exact Bayesian belief over taxonomy nodes: ontological-distinctiveness
// prior, size-principle click likelihood with an additive noise floor, and
// posterior updates computed in log space.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexlearn/bundle.hpp"
#include "lexlearn/errors.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn {

inline constexpr const char* kNoClickKey = "__noclick__";
inline constexpr double kNormalizationTolerance = 1e-9;

// User outcome for one bundle: a single clicked product or an explicit no-click.
struct Feedback {
    std::optional<std::string> clicked;

    static Feedback click(std::string product) { return Feedback{std::move(product)}; }
    static Feedback no_click() { return Feedback{}; }

    bool is_click() const { return clicked.has_value(); }
    std::string key() const { return clicked ? *clicked : std::string(kNoClickKey); }

    bool operator==(const Feedback&) const = default;
};

inline nlohmann::json to_json(const Feedback& y) {
    return y.clicked ? nlohmann::json(*y.clicked) : nlohmann::json(nullptr);
}

inline Feedback feedback_from_json(const nlohmann::json& j) {
    if (j.is_null()) return Feedback::no_click();
    if (j.is_string()) return Feedback::click(j.get<std::string>());
    throw ParseError("feedback must be a product id string or null");
}

struct NoiseConfig {
    double epsilon = 0.05;          // per-product noise floor
    double epsilon_noclick = 0.05;  // unnormalized weight of the no-click outcome

    static NoiseConfig with_epsilon(double eps) { return NoiseConfig{eps, eps}; }

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw ValidationError("epsilon must lie in (0,1)");
        if (!(epsilon_noclick > 0.0 && epsilon_noclick < 1.0))
            throw ValidationError("epsilon_noclick must lie in (0,1)");
    }
};

// Normalized distribution over the nodes of one knowledge graph, stored in
// the graph's node order.
class BeliefState {
public:
    BeliefState() = default;

    BeliefState(std::string kg_id, std::vector<std::string> node_ids, std::vector<double> mass)
        : kg_id_(std::move(kg_id)), ids_(std::move(node_ids)), mass_(std::move(mass)) {
        if (ids_.size() != mass_.size() || ids_.empty())
            throw ValidationError("belief must assign one mass to every node");
        double total = 0.0;
        for (double m : mass_) {
            if (!(m >= 0.0) || !std::isfinite(m))
                throw ValidationError("belief masses must be finite and non-negative");
            total += m;
        }
        if (std::abs(total - 1.0) > kNormalizationTolerance)
            throw ValidationError("belief masses must sum to 1");
    }

    const std::string& kg_id() const { return kg_id_; }
    const std::vector<std::string>& node_ids() const { return ids_; }
    const std::vector<double>& masses() const { return mass_; }
    std::size_t size() const { return mass_.size(); }
    double operator[](std::size_t i) const { return mass_[i]; }

    double at(const std::string& node) const {
        for (std::size_t i = 0; i < ids_.size(); ++i)
            if (ids_[i] == node) return mass_[i];
        throw UnknownIdError("belief has no node '" + node + "'");
    }

    // First node with maximal mass.
    std::size_t argmax() const {
        return static_cast<std::size_t>(std::max_element(mass_.begin(), mass_.end()) -
                                        mass_.begin());
    }
    const std::string& argmax_id() const { return ids_[argmax()]; }
    double max_mass() const { return mass_[argmax()]; }

    double entropy() const {
        double h = 0.0;
        for (double m : mass_)
            if (m > 0.0) h -= m * std::log(m);
        return h;
    }

    bool operator==(const BeliefState&) const = default;

private:
    std::string kg_id_;
    std::vector<std::string> ids_;
    std::vector<double> mass_;
};

inline nlohmann::json to_json(const BeliefState& b) {
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t i = 0; i < b.size(); ++i) out[b.node_ids()[i]] = b[i];
    return out;
}

namespace detail {

inline void check_belief_matches(const BeliefState& belief, const KnowledgeGraph& kg) {
    if (belief.kg_id() != kg.id() || belief.size() != kg.node_count())
        throw ValidationError("belief does not belong to knowledge graph '" + kg.id() + "'");
}

inline void check_feedback(const Bundle& bundle, const Feedback& y) {
    if (y.clicked && !bundle.contains(*y.clicked))
        throw ValidationError("clicked product '" + *y.clicked + "' is not in bundle " +
                              bundle.to_string());
}

// Normalizes log-weights in place and returns linear masses. Entries at -inf
// (zero mass) stay at zero.
inline std::vector<double> normalize_log(const std::vector<double>& logw) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : logw) hi = std::max(hi, v);
    if (!std::isfinite(hi)) throw InternalError("posterior has no support");
    double sum = 0.0;
    for (double v : logw) sum += std::exp(v - hi);
    const double log_z = hi + std::log(sum);
    std::vector<double> out(logw.size());
    for (std::size_t i = 0; i < logw.size(); ++i) out[i] = std::exp(logw[i] - log_z);
    return out;
}

}  // namespace detail

// Prior mass proportional to ontological distinctiveness.
inline BeliefState prior(const KnowledgeGraph& kg, const OdConfig& od = {}) {
    std::vector<double> w;
    w.reserve(kg.node_count());
    double total = 0.0;
    for (const auto& n : kg.nodes()) {
        w.push_back(ontological_distinctiveness(kg, n.id, od));
        total += w.back();
    }
    for (double& v : w) v /= total;
    return BeliefState(kg.id(), kg.node_ids(), std::move(w));
}

// Unnormalized weight of a click on x: 1/|ext| + epsilon when x is in the
// node's extension, epsilon otherwise.
inline double click_weight(const KnowledgeGraph& kg, std::string_view node, std::string_view x,
                           const NoiseConfig& noise) {
    const Node& n = kg.node(node);
    kg.product(x);
    const bool inside = n.extension.count(std::string(x)) != 0;
    return (inside ? 1.0 / static_cast<double>(n.extension.size()) : 0.0) + noise.epsilon;
}

// Probabilities of the |bundle|+1 outcomes for one node, clicks in bundle
// order followed by no-click.
inline std::vector<double> outcome_distribution(const KnowledgeGraph& kg, std::size_t node_idx,
                                                const Bundle& bundle, const NoiseConfig& noise) {
    const Node& n = kg.nodes()[node_idx];
    const double size_weight = 1.0 / static_cast<double>(n.extension.size());
    std::vector<double> w;
    w.reserve(bundle.size() + 1);
    double total = 0.0;
    for (const auto& x : bundle.products()) {
        w.push_back((n.extension.count(x) ? size_weight : 0.0) + noise.epsilon);
        total += w.back();
    }
    w.push_back(noise.epsilon_noclick);
    total += noise.epsilon_noclick;
    for (double& v : w) v /= total;
    return w;
}

// Position of y in outcome_distribution's ordering.
inline std::size_t outcome_index(const Bundle& bundle, const Feedback& y) {
    detail::check_feedback(bundle, y);
    if (!y.clicked) return bundle.size();
    const auto& ps = bundle.products();
    return static_cast<std::size_t>(std::lower_bound(ps.begin(), ps.end(), *y.clicked) -
                                    ps.begin());
}

inline std::vector<Feedback> outcomes(const Bundle& bundle) {
    std::vector<Feedback> ys;
    ys.reserve(bundle.size() + 1);
    for (const auto& p : bundle.products()) ys.push_back(Feedback::click(p));
    ys.push_back(Feedback::no_click());
    return ys;
}

inline double outcome_likelihood(const KnowledgeGraph& kg, std::string_view node,
                                 const Bundle& bundle, const Feedback& y,
                                 const NoiseConfig& noise) {
    noise.validate();
    bundle.validate_against(kg);
    const std::size_t k = outcome_index(bundle, y);
    return outcome_distribution(kg, kg.node_index(node), bundle, noise)[k];
}

using Observation = std::pair<Bundle, Feedback>;

// Joint update with the product of per-observation likelihoods. Returns a new
// belief; the input is left untouched.
inline BeliefState update_batch(const BeliefState& belief, const KnowledgeGraph& kg,
                                const std::vector<Observation>& observations,
                                const NoiseConfig& noise) {
    detail::check_belief_matches(belief, kg);
    noise.validate();
    if (observations.empty()) return belief;

    std::vector<double> logw(belief.size());
    for (std::size_t i = 0; i < belief.size(); ++i)
        logw[i] = belief[i] > 0.0 ? std::log(belief[i])
                                  : -std::numeric_limits<double>::infinity();

    for (const auto& [bundle, y] : observations) {
        bundle.validate_against(kg);
        const std::size_t k = outcome_index(bundle, y);
        for (std::size_t i = 0; i < belief.size(); ++i) {
            if (!std::isfinite(logw[i])) continue;
            logw[i] += std::log(outcome_distribution(kg, i, bundle, noise)[k]);
        }
    }
    return BeliefState(belief.kg_id(), belief.node_ids(), detail::normalize_log(logw));
}

inline BeliefState update(const BeliefState& belief, const KnowledgeGraph& kg,
                          const Bundle& bundle, const Feedback& y, const NoiseConfig& noise) {
    return update_batch(belief, kg, {Observation{bundle, y}}, noise);
}

}  // namespace lexlearn

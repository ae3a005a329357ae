#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lexlearn/session.hpp"
#include "lexlearn/simulator.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "support/properties.hpp"

using namespace lexlearn;
namespace lt = lexlearn::testing;
using lexlearn::testing::figure2;
using lexlearn::testing::node;
using lexlearn::testing::product;

namespace {

// Two disjoint leaves under a root; one click on a leaf product lifts that
// leaf to 2/3 under a flat prior.
KnowledgeGraph leaves() {
    return KnowledgeGraph::build(
        "leaves", {product("A", {"f"}), product("B", {"g"})},
        {node("r", std::nullopt, {"r"}, {"A", "B"}), node("a", "r", {"x"}, {"A"}),
         node("b", "r", {"y"}, {"B"})});
}

SessionConfig quick_config() {
    SessionConfig cfg;
    cfg.noise = NoiseConfig::with_epsilon(0.001);
    cfg.convergence_threshold = 0.6;
    return cfg;
}

}  // namespace

TEST(StartSession, EigPolicyShowsTheArgmaxBundle) {
    const auto& kg = figure2();
    const auto t = start_session(kg, "footwear", SessionConfig{}, "s1");
    EXPECT_EQ(t.status, SessionStatus::Active);
    ASSERT_EQ(t.steps.size(), 1u);
    ASSERT_NE(t.pending_step(), nullptr);
    EXPECT_EQ(t.pending_step()->bundle, select_bundle(prior(kg), kg, 2, SessionConfig{}.noise).bundle);
    EXPECT_EQ(t.belief(), prior(kg));
    EXPECT_EQ(t.session_id, "s1");
    EXPECT_EQ(t.query, "footwear");
}

TEST(StartSession, RandomPolicyIsSeededByStep) {
    const auto& kg = figure2();
    SessionConfig cfg;
    cfg.policy = Policy::random(99);
    const auto a = start_session(kg, "w", cfg);
    const auto b = start_session(kg, "w", cfg);
    EXPECT_EQ(a.pending_step()->bundle, b.pending_step()->bundle);
    const auto all = enumerate_bundles(kg, 2);
    Engine eng(derive_seed(99, 0));
    EXPECT_EQ(a.pending_step()->bundle, all[uniform_index(eng, all.size())]);

    std::set<std::string> seen;
    for (std::uint64_t s = 0; s < 200; ++s) {
        cfg.policy = Policy::random(s);
        seen.insert(start_session(kg, "w", cfg).pending_step()->bundle.to_string());
    }
    EXPECT_EQ(seen.size(), 6u);
}

TEST(StartSession, SingleNodeKgConvergesImmediately) {
    const auto kg = lt::single_node_kg();
    const auto t = start_session(kg, "w", SessionConfig{});
    EXPECT_EQ(t.status, SessionStatus::Converged);
    EXPECT_EQ(t.converged_node, "root");
    EXPECT_TRUE(t.steps.empty());
    const auto entry = lexicon_entry(t);
    ASSERT_TRUE(entry);
    EXPECT_EQ(entry->first, "root");
    EXPECT_EQ(entry->second, 1.0);
}

TEST(StartSession, RejectsBadInput) {
    const auto& kg = figure2();
    EXPECT_THROW(start_session(kg, "", SessionConfig{}), ValidationError);
    SessionConfig cfg;
    cfg.bundle_size = 5;
    EXPECT_THROW(start_session(kg, "w", cfg), ValidationError);
    cfg = SessionConfig{};
    cfg.convergence_threshold = 0.5;
    EXPECT_THROW(start_session(kg, "w", cfg), ValidationError);
    cfg = SessionConfig{};
    cfg.max_steps = 0;
    EXPECT_THROW(start_session(kg, "w", cfg), ValidationError);
    cfg = SessionConfig{};
    cfg.noise.epsilon = 1.5;
    EXPECT_THROW(start_session(kg, "w", cfg), ValidationError);
}

TEST(SubmitFeedback, OneClickConverges) {
    const auto kg = leaves();
    const auto t0 = start_session(kg, "w", quick_config());
    ASSERT_EQ(t0.pending_step()->bundle, Bundle({"A", "B"}));
    const auto t1 = submit_feedback(t0, kg, Feedback::click("A"));
    EXPECT_EQ(t1.status, SessionStatus::Converged);
    EXPECT_EQ(t1.converged_node, "a");
    EXPECT_EQ(t1.pending_step(), nullptr);
    EXPECT_EQ(lexicon_entry(t1)->first, "a");
    EXPECT_GE(lexicon_entry(t1)->second, 0.6);
    // input trace untouched
    EXPECT_EQ(t0.status, SessionStatus::Active);
    EXPECT_TRUE(t0.steps.back().pending());
}

TEST(SubmitFeedback, BeliefIsTheUpdatedPosterior) {
    const auto& kg = figure2();
    const auto t0 = start_session(kg, "w", SessionConfig{});
    const auto b = t0.pending_step()->bundle;
    const auto t1 = submit_feedback(t0, kg, Feedback::click(b.products()[0]));
    EXPECT_EQ(t1.steps[0].belief, update(prior(kg), kg, b, Feedback::click(b.products()[0]), SessionConfig{}.noise));
    EXPECT_EQ(t1.steps.size(), 2u);
    EXPECT_TRUE(t1.steps[1].pending());
    EXPECT_EQ(t1.steps[1].index, 1u);
}

TEST(SubmitFeedback, NoClickShiftsMassAwayFromCoveringNodes) {
    const auto& kg = figure2();
    SessionConfig cfg;
    const auto t0 = start_session(kg, "w", cfg);
    const auto b = t0.pending_step()->bundle;
    const auto t1 = submit_feedback(t0, kg, Feedback::no_click());
    const auto want = oracle::posterior(kg, oracle::od_prior(kg), {{b.products(), std::nullopt}},
                                        cfg.noise.epsilon, cfg.noise.epsilon_noclick);
    const auto p0 = prior(kg);
    for (std::size_t i = 0; i < p0.size(); ++i) {
        const double got = t1.belief()[i] - p0[i];
        EXPECT_NEAR(t1.belief()[i], want[i], 1e-12);
        EXPECT_EQ(got > 0, want[i] - p0[i] > 0) << kg.nodes()[i].id;
    }
    // every node covering the bundle loses mass
    EXPECT_LT(t1.belief().at("fashion"), p0.at("fashion"));
}

TEST(SubmitFeedback, RejectsInvalidFeedbackAndTerminalSessions) {
    const auto& kg = figure2();
    SessionConfig cfg;
    cfg.max_steps = 1;
    const auto t0 = start_session(kg, "w", cfg);
    EXPECT_THROW(submit_feedback(t0, kg, Feedback::click("P9")), ValidationError);
    const auto& b = t0.pending_step()->bundle;
    std::string outside;
    for (const auto& p : kg.sorted_product_ids())
        if (!b.contains(p)) outside = p;
    EXPECT_THROW(submit_feedback(t0, kg, Feedback::click(outside)), ValidationError);
    EXPECT_THROW(submit_feedback(t0, lt::single_node_kg(), Feedback::no_click()), ValidationError);

    const auto t1 = submit_feedback(t0, kg, Feedback::no_click());
    EXPECT_EQ(t1.status, SessionStatus::Exhausted);
    EXPECT_FALSE(lexicon_entry(t1));
    const auto before = to_json(t1).dump();
    EXPECT_THROW(submit_feedback(t1, kg, Feedback::no_click()), StateError);
    EXPECT_EQ(to_json(t1).dump(), before);
}

TEST(SubmitFeedback, StatusIsMonotone) {
    const auto& kg = figure2();
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        SessionConfig cfg;
        cfg.max_steps = 6;
        cfg.policy = seed % 2 ? Policy::random(seed) : Policy::eig();
        SimulatedUser user(kg, kg.nodes()[seed % kg.node_count()].id, cfg.noise, seed);
        auto t = start_session(kg, "w", cfg);
        std::size_t completed = 0;
        while (!t.terminal()) {
            t = submit_feedback(t, kg, user.click(kg, t.pending_step()->bundle));
            EXPECT_EQ(t.completed_steps(), ++completed);
            EXPECT_EQ(t.terminal(), t.pending_step() == nullptr);
        }
        EXPECT_LE(t.completed_steps(), cfg.max_steps);
        if (t.status == SessionStatus::Exhausted) {
            EXPECT_EQ(t.completed_steps(), cfg.max_steps);
        }
        if (t.status == SessionStatus::Converged) {
            EXPECT_GE(t.belief().max_mass(), cfg.convergence_threshold);
        }
    }
}

TEST(LexiconEntry, OnlyWhenConverged) {
    const auto kg = leaves();
    const auto t0 = start_session(kg, "w", quick_config());
    EXPECT_FALSE(lexicon_entry(t0));
    const auto t1 = submit_feedback(t0, kg, Feedback::click("B"));
    ASSERT_TRUE(lexicon_entry(t1));
    EXPECT_EQ(lexicon_entry(t1)->first, "b");
    EXPECT_EQ(lexicon_entry(t1)->second, t1.belief().max_mass());
}

TEST(ReplaySession, ReproducesLiveTraces) {
    const auto& kg = figure2();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SessionConfig cfg;
        cfg.max_steps = 8;
        cfg.policy = seed % 2 ? Policy::random(seed) : Policy::eig();
        SimulatedUser user(kg, "shoes", cfg.noise, seed);
        auto t = start_session(kg, "w", cfg, "id");
        std::vector<Bundle> shown;
        std::vector<Feedback> fb;
        for (int k = 0; k < 3 && !t.terminal(); ++k) {
            shown.push_back(t.pending_step()->bundle);
            fb.push_back(user.click(kg, shown.back()));
            t = submit_feedback(t, kg, fb.back());
        }
        if (!t.terminal()) shown.push_back(t.pending_step()->bundle);
        const auto r = replay_session(kg, "id", "w", cfg, shown, fb);
        EXPECT_EQ(r.status, t.status);
        EXPECT_EQ(r.converged_node, t.converged_node);
        ASSERT_EQ(r.steps.size(), t.steps.size());
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            EXPECT_EQ(r.steps[i].bundle, t.steps[i].bundle);
            EXPECT_EQ(r.steps[i].feedback, t.steps[i].feedback);
            if (t.steps[i].belief) {
                EXPECT_LE(lt::max_abs_diff(*r.steps[i].belief, *t.steps[i].belief), 1e-12);
            }
        }
    }
}

TEST(ReplaySession, RejectsInconsistentSequences) {
    const auto& kg = figure2();
    const SessionConfig cfg;
    const Bundle b({"P1", "P3"});
    EXPECT_THROW(replay_session(kg, "id", "w", cfg, {}, {Feedback::no_click()}), ValidationError);
    EXPECT_THROW(replay_session(kg, "id", "w", cfg, {b, b, b}, {Feedback::no_click()}), ValidationError);
    EXPECT_THROW(replay_session(kg, "id", "w", cfg, {b}, {Feedback::click("P2")}), ValidationError);
    EXPECT_THROW(replay_session(kg, "id", "w", cfg, {Bundle({"P1"})}, {}), ValidationError);
}

TEST(SessionProperties, ReplayDeterminism) {
    const auto f = lt::check_replay_determinism(figure2(), 61, 20);
    EXPECT_FALSE(f) << *f;
}

TEST(SessionProperties, PolicyDoesNotChangeTheUpdate) {
    // Same (bundle, feedback) under either policy gives the same posterior.
    const auto& kg = figure2();
    SessionConfig eig_cfg, rnd_cfg;
    rnd_cfg.policy = Policy::random(5);
    const auto te = start_session(kg, "w", eig_cfg);
    const auto tr = start_session(kg, "w", rnd_cfg);
    const auto& be = te.pending_step()->bundle;
    const auto& br = tr.pending_step()->bundle;
    const auto pe = submit_feedback(te, kg, Feedback::no_click()).belief();
    const auto pr = submit_feedback(tr, kg, Feedback::no_click()).belief();
    EXPECT_EQ(pe, update(prior(kg), kg, be, Feedback::no_click(), eig_cfg.noise));
    EXPECT_EQ(pr, update(prior(kg), kg, br, Feedback::no_click(), rnd_cfg.noise));
}

TEST(Serialization, ConfigRoundTrip) {
    SessionConfig cfg;
    cfg.bundle_size = 3;
    cfg.noise = NoiseConfig{0.1, 0.2};
    cfg.convergence_threshold = 0.8;
    cfg.max_steps = 7;
    cfg.policy = Policy::random(12345678901234ULL);
    cfg.od = OdConfig{0.5, 0.02};
    cfg.candidate_cap = 77;
    const auto back = session_config_from_json(to_json(cfg));
    EXPECT_EQ(to_json(back), to_json(cfg));
    EXPECT_EQ(back.policy, cfg.policy);
    EXPECT_THROW(session_config_from_json(nlohmann::json{{"policy", "greedy"}}), ValidationError);
    EXPECT_THROW(session_config_from_json(nlohmann::json{{"max_steps", "x"}}), ParseError);
    EXPECT_EQ(session_config_from_json(nlohmann::json{{"epsilon", 0.2}}).noise.epsilon_noclick, 0.2);
}

TEST(Serialization, TraceJson) {
    const auto kg = leaves();
    const auto t = submit_feedback(start_session(kg, "w", quick_config(), "s9"), kg, Feedback::click("A"));
    const auto j = to_json(t);
    EXPECT_EQ(j.at("status"), "converged");
    EXPECT_EQ(j.at("converged_node"), "a");
    EXPECT_EQ(j.at("lexicon_entry").at("node"), "a");
    EXPECT_EQ(j.at("steps").size(), 1u);
    EXPECT_EQ(j.at("steps")[0].at("feedback"), "A");
}

// lexlearn command-line interface: KG validation, EIG inspection, batch
// simulations, and the HTTP session service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexlearn/gateway/service.hpp"
#include "lexlearn/lexlearn.hpp"

namespace {

using namespace lexlearn;

int fail(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return 1;
}

int cmd_validate(const std::string& path) {
    const auto kg = load_kg_file(path);
    std::cout << "ok: " << kg.id() << " (" << kg.product_count() << " products, "
              << kg.node_count() << " nodes)\n";
    return 0;
}

int cmd_eig_table(const std::string& path, std::size_t bundle_size, double epsilon, bool as_json) {
    const auto kg = load_kg_file(path);
    const auto noise = NoiseConfig::with_epsilon(epsilon);
    const auto sel = select_bundle(prior(kg), kg, bundle_size, noise);
    if (as_json) {
        std::cout << eig_table_json(sel.table).dump(2) << "\n";
        return 0;
    }
    std::printf("%-4s  %-24s  %-12s  %s\n", "rank", "bundle", "eig_nats", "predictive");
    std::size_t rank = 1;
    for (const auto& row : sel.table) {
        std::string pred;
        for (const auto& [y, p] : row.predictive) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s%s=%.4f", pred.empty() ? "" : " ", y.key().c_str(), p);
            pred += buf;
        }
        std::printf("%-4zu  %-24s  %-12.8f  %s\n", rank++, row.bundle.to_string().c_str(), row.eig,
                    pred.c_str());
    }
    return 0;
}

struct SimulateArgs {
    std::string kg;
    std::string query;
    std::string true_node;
    std::string policy = "eig";
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    double threshold = 0.95;
    std::size_t max_steps = 20;
    std::size_t bundle_size = kDefaultBundleSize;
    double epsilon = 0.05;
    std::optional<double> user_epsilon;
    std::string out;
    std::string csv;
};

int cmd_simulate(const SimulateArgs& a) {
    const auto kg = load_kg_file(a.kg);
    kg.node(a.true_node);
    SessionConfig cfg;
    cfg.bundle_size = a.bundle_size;
    cfg.noise = NoiseConfig::with_epsilon(a.epsilon);
    cfg.convergence_threshold = a.threshold;
    cfg.max_steps = a.max_steps;
    cfg.policy = a.policy == "eig" ? Policy::eig() : Policy::random(0);
    cfg.validate();
    std::optional<NoiseConfig> user_noise;
    if (a.user_epsilon) user_noise = NoiseConfig::with_epsilon(*a.user_epsilon);

    const auto trials = run_trials(kg, a.query, a.true_node, cfg, a.trials, a.seed, user_noise);
    const auto summary = summarize(trials, a.true_node);

    nlohmann::json doc = {{"kg", kg.id()},
                          {"query", a.query},
                          {"true_node", a.true_node},
                          {"policy", a.policy},
                          {"trials", a.trials},
                          {"seed", a.seed},
                          {"threshold", a.threshold},
                          {"max_steps", a.max_steps},
                          {"bundle_size", a.bundle_size},
                          {"epsilon", a.epsilon},
                          {"user_epsilon", a.user_epsilon ? nlohmann::json(*a.user_epsilon)
                                                          : nlohmann::json(nullptr)},
                          {"summary", to_json(summary)}};
    const std::string text = doc.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) return fail("cannot write '" + a.out + "'");
        f << text;
    }
    if (!a.csv.empty()) {
        std::ofstream f(a.csv, std::ios::binary);
        if (!f) return fail("cannot write '" + a.csv + "'");
        write_trials_csv(f, trials);
    }
    return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const std::string& bind, const std::string& kg_dir, const std::string& log_dir) {
    const auto [host, port] = gateway::parse_bind(bind);
    gateway::Service service({kg_dir, log_dir});
    for (const auto& [id, q] : service.quarantined())
        std::cerr << "quarantined session " << id << ": " << q.diagnostic << "\n";
    httplib::Server svr;
    service.mount(svr);
    g_server = &svr;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (!svr.bind_to_port(host, port)) return fail("cannot bind " + bind);
    std::cerr << "listening on " << host << ":" << port << " (" << service.session_count()
              << " sessions recovered)" << std::endl;
    svr.listen_after_bind();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lexlearn: learn unknown query words from clicks via expected information gain"};
    app.require_subcommand(1);

    std::string kg_file;
    auto* validate = app.add_subcommand("validate-kg", "Validate a knowledge-graph document");
    validate->add_option("file", kg_file, "KG JSON file")->required();

    std::size_t bundle_size = kDefaultBundleSize;
    double epsilon = 0.05;
    bool as_json = false;
    auto* eig = app.add_subcommand("eig-table", "Print the EIG table under the prior");
    eig->add_option("--kg", kg_file, "KG JSON file")->required();
    eig->add_option("--bundle-size", bundle_size, "Products per bundle")->check(CLI::PositiveNumber);
    eig->add_option("--epsilon", epsilon, "Click noise floor")->check(CLI::Range(0.0, 1.0));
    eig->add_flag("--json", as_json, "Emit the table as JSON");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run seeded simulated-user trials");
    simulate->add_option("--kg", sim.kg, "KG JSON file")->required();
    simulate->add_option("--query", sim.query, "Unknown query word")->required();
    simulate->add_option("--true-node", sim.true_node, "Ground-truth meaning")->required();
    simulate->add_option("--policy", sim.policy, "Bundle policy")
        ->check(CLI::IsMember({"eig", "random"}))
        ->required();
    simulate->add_option("--trials", sim.trials, "Number of trials")->check(CLI::PositiveNumber)->required();
    simulate->add_option("--seed", sim.seed, "Base seed")->required();
    simulate->add_option("--threshold", sim.threshold, "Convergence threshold");
    simulate->add_option("--max-steps", sim.max_steps, "Step budget")->check(CLI::PositiveNumber);
    simulate->add_option("--bundle-size", sim.bundle_size, "Products per bundle")->check(CLI::PositiveNumber);
    simulate->add_option("--epsilon", sim.epsilon, "System noise floor");
    simulate->add_option("--user-epsilon", sim.user_epsilon, "Simulated user's noise (default: system's)");
    simulate->add_option("--out", sim.out, "Write the JSON summary here instead of stdout");
    simulate->add_option("--csv", sim.csv, "Write per-trial CSV here");

    std::string bind = "127.0.0.1:8080", kg_dir, log_dir;
    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    serve->add_option("--bind", bind, "host:port");
    serve->add_option("--kg-dir", kg_dir, "Directory of KG JSON files")->required();
    serve->add_option("--log-dir", log_dir, "Directory for session logs")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(kg_file);
        if (*eig) return cmd_eig_table(kg_file, bundle_size, epsilon, as_json);
        if (*simulate) return cmd_simulate(sim);
        if (*serve) return cmd_serve(bind, kg_dir, log_dir);
    } catch (const std::exception& e) {
        return fail(e.what());
    }
    return 1;
}

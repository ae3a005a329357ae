#pragma once

#include <string>
#include <vector>

#include "lexlearn/taxonomy.hpp"

#ifndef LEXLEARN_FIXTURE_DIR
#error "LEXLEARN_FIXTURE_DIR must be defined by the build"
#endif

namespace lexlearn::testing {

inline std::string fixture_path(const std::string& name) {
    return std::string(LEXLEARN_FIXTURE_DIR) + "/" + name;
}

inline const KnowledgeGraph& figure2() {
    static const KnowledgeGraph kg = load_kg_file(fixture_path("figure2.json"));
    return kg;
}

inline Product product(std::string id, FeatureSet features) {
    return Product{id, id, std::move(features)};
}

inline Node node(std::string id, std::optional<std::string> parent, FeatureSet features,
                 ProductSet extension) {
    return Node{id, id, std::move(parent), std::move(features), std::move(extension)};
}

// Root {P1,P2} with no children.
inline KnowledgeGraph single_node_kg() {
    return KnowledgeGraph::build("single", {product("P1", {"a"}), product("P2", {"b"})},
                                 {node("root", std::nullopt, {"a", "b"}, {"P1", "P2"})});
}

}  // namespace lexlearn::testing

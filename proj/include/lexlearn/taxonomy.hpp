#pragma once
// Knowledge-graph taxonomy: products, nodes with feature sets and product
// extensions, JSON ingestion/validation, and the structural quantities
// (extension, siblings, Jaccard distance, ontological distinctiveness).

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexlearn/errors.hpp"

namespace lexlearn {

using FeatureSet = std::set<std::string>;
using ProductSet = std::set<std::string>;

struct Product {
    std::string id;
    std::string label;
    FeatureSet features;

    bool operator==(const Product&) const = default;
};

struct Node {
    std::string id;
    std::string label;
    std::optional<std::string> parent;  // absent for the root
    FeatureSet features;
    ProductSet extension;

    bool operator==(const Node&) const = default;
};

// Knobs for the ontological-distinctiveness prior.
struct OdConfig {
    double sibling_less = 1.0;  // OD of a node without siblings
    double od_min = 0.01;       // floor so no hypothesis gets zero prior
};

// Immutable once built; construct through KnowledgeGraph::build or load_kg.
class KnowledgeGraph {
public:
    static KnowledgeGraph build(std::string id, std::vector<Product> products,
                                std::vector<Node> nodes) {
        KnowledgeGraph kg;
        kg.id_ = std::move(id);
        kg.products_ = std::move(products);
        kg.nodes_ = std::move(nodes);
        kg.validate_and_index();
        return kg;
    }

    const std::string& id() const { return id_; }
    const std::vector<Product>& products() const { return products_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t product_count() const { return products_.size(); }

    bool has_node(std::string_view id) const {
        return node_index_.count(std::string(id)) != 0;
    }
    bool has_product(std::string_view id) const {
        return product_index_.count(std::string(id)) != 0;
    }

    std::size_t node_index(std::string_view id) const {
        auto it = node_index_.find(std::string(id));
        if (it == node_index_.end())
            throw UnknownIdError("unknown node id '" + std::string(id) + "'");
        return it->second;
    }

    const Node& node(std::string_view id) const { return nodes_[node_index(id)]; }

    const Product& product(std::string_view id) const {
        auto it = product_index_.find(std::string(id));
        if (it == product_index_.end())
            throw UnknownIdError("unknown product id '" + std::string(id) + "'");
        return products_[it->second];
    }

    const Node& root() const { return nodes_[root_]; }

    // Indices (into nodes()) of the children of `parent`, in document order.
    const std::vector<std::size_t>& children_of(std::string_view parent) const {
        static const std::vector<std::size_t> none;
        auto it = children_.find(std::string(parent));
        return it == children_.end() ? none : it->second;
    }

    // Product ids in lexicographic order.
    std::vector<std::string> sorted_product_ids() const {
        std::vector<std::string> ids;
        ids.reserve(products_.size());
        for (const auto& p : products_) ids.push_back(p.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    std::vector<std::string> node_ids() const {
        std::vector<std::string> ids;
        ids.reserve(nodes_.size());
        for (const auto& n : nodes_) ids.push_back(n.id);
        return ids;
    }

    bool operator==(const KnowledgeGraph& o) const {
        return id_ == o.id_ && products_ == o.products_ && nodes_ == o.nodes_;
    }

private:
    KnowledgeGraph() = default;

    void validate_and_index() {
        if (id_.empty()) throw ValidationError("knowledge graph id must be non-empty");
        if (products_.empty()) throw ValidationError("knowledge graph has no products");
        if (nodes_.empty()) throw ValidationError("knowledge graph has no nodes");

        for (std::size_t i = 0; i < products_.size(); ++i) {
            const auto& p = products_[i];
            if (p.id.empty()) throw ValidationError("product id must be non-empty");
            if (p.features.empty())
                throw ValidationError("product '" + p.id + "' has an empty feature set");
            if (!product_index_.emplace(p.id, i).second)
                throw ValidationError("duplicate product id '" + p.id + "'");
        }

        std::optional<std::size_t> root;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.id.empty()) throw ValidationError("node id must be non-empty");
            if (!node_index_.emplace(n.id, i).second)
                throw ValidationError("duplicate node id '" + n.id + "'");
            if (n.features.empty())
                throw ValidationError("node '" + n.id + "' has an empty feature set");
            if (n.extension.empty())
                throw ValidationError("node '" + n.id + "' has an empty extension");
            for (const auto& pid : n.extension)
                if (!product_index_.count(pid))
                    throw ValidationError("node '" + n.id + "' extension names missing product '" +
                                          pid + "'");
            if (!n.parent) {
                if (root)
                    throw ValidationError("multiple roots: '" + nodes_[*root].id + "' and '" +
                                          n.id + "'");
                root = i;
            }
        }
        if (!root) throw ValidationError("no root node (every node has a parent)");
        root_ = *root;

        for (const auto& n : nodes_) {
            if (!n.parent) continue;
            auto it = node_index_.find(*n.parent);
            if (it == node_index_.end())
                throw ValidationError("node '" + n.id + "' has dangling parent '" + *n.parent + "'");
            const auto& parent = nodes_[it->second];
            if (!std::includes(parent.extension.begin(), parent.extension.end(),
                               n.extension.begin(), n.extension.end()))
                throw ValidationError("extension of '" + n.id + "' is not a subset of its parent '" +
                                      parent.id + "'");
        }

        // Every walk towards the root must terminate within |nodes| hops.
        for (const auto& n : nodes_) {
            const Node* cur = &n;
            std::size_t hops = 0;
            while (cur->parent) {
                if (++hops > nodes_.size())
                    throw ValidationError("cycle in parent relation through node '" + n.id + "'");
                cur = &nodes_[node_index_.at(*cur->parent)];
            }
        }

        if (nodes_[root_].extension.size() != products_.size())
            throw ValidationError("root extension must equal the full product set");

        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].parent) children_[*nodes_[i].parent].push_back(i);
    }

    std::string id_;
    std::vector<Product> products_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> product_index_;
    std::unordered_map<std::string, std::size_t> node_index_;
    std::unordered_map<std::string, std::vector<std::size_t>> children_;
    std::size_t root_ = 0;

};

// ---------------------------------------------------------------------------
// JSON document format

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* field,
                                  const std::string& where) {
    if (!obj.is_object() || !obj.contains(field) || !obj.at(field).is_string())
        throw ParseError(where + ": field '" + field + "' must be a string");
    return obj.at(field).get<std::string>();
}

inline std::set<std::string> require_string_set(const nlohmann::json& obj, const char* field,
                                                const std::string& where) {
    if (!obj.contains(field) || !obj.at(field).is_array())
        throw ParseError(where + ": field '" + field + "' must be an array of strings");
    std::set<std::string> out;
    for (const auto& v : obj.at(field)) {
        if (!v.is_string())
            throw ParseError(where + ": field '" + field + "' must be an array of strings");
        out.insert(v.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline KnowledgeGraph kg_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("knowledge graph document must be a JSON object");
    std::string id = detail::require_string(doc, "id", "kg");
    if (!doc.contains("products") || !doc.at("products").is_array())
        throw ParseError("kg: field 'products' must be an array");
    if (!doc.contains("nodes") || !doc.at("nodes").is_array())
        throw ParseError("kg: field 'nodes' must be an array");

    std::vector<Product> products;
    for (const auto& p : doc.at("products")) {
        if (!p.is_object()) throw ParseError("kg: product entries must be objects");
        Product prod;
        prod.id = detail::require_string(p, "id", "product");
        prod.label = detail::require_string(p, "label", "product '" + prod.id + "'");
        prod.features = detail::require_string_set(p, "features", "product '" + prod.id + "'");
        products.push_back(std::move(prod));
    }

    std::vector<Node> nodes;
    for (const auto& n : doc.at("nodes")) {
        if (!n.is_object()) throw ParseError("kg: node entries must be objects");
        Node node;
        node.id = detail::require_string(n, "id", "node");
        const std::string where = "node '" + node.id + "'";
        node.label = detail::require_string(n, "label", where);
        if (!n.contains("parent"))
            throw ParseError(where + ": field 'parent' is required (string or null)");
        const auto& parent = n.at("parent");
        if (parent.is_string())
            node.parent = parent.get<std::string>();
        else if (!parent.is_null())
            throw ParseError(where + ": field 'parent' must be a string or null");
        node.features = detail::require_string_set(n, "features", where);
        node.extension = detail::require_string_set(n, "extension", where);
        nodes.push_back(std::move(node));
    }
    return KnowledgeGraph::build(std::move(id), std::move(products), std::move(nodes));
}

inline KnowledgeGraph load_kg(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed knowledge graph document: ") + e.what());
    }
    return kg_from_json(doc);
}

inline KnowledgeGraph load_kg_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return load_kg(in);
}

inline KnowledgeGraph load_kg_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open knowledge graph file '" + path + "'");
    return load_kg(in);
}

inline nlohmann::json to_json(const KnowledgeGraph& kg) {
    nlohmann::json products = nlohmann::json::array();
    for (const auto& p : kg.products())
        products.push_back({{"id", p.id}, {"label", p.label}, {"features", p.features}});
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : kg.nodes()) {
        nlohmann::json parent = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
        nodes.push_back({{"id", n.id},
                         {"label", n.label},
                         {"parent", parent},
                         {"features", n.features},
                         {"extension", n.extension}});
    }
    return {{"id", kg.id()}, {"products", products}, {"nodes", nodes}};
}

// ---------------------------------------------------------------------------
// Structural quantities

inline const ProductSet& ext(const KnowledgeGraph& kg, std::string_view node) {
    return kg.node(node).extension;
}

// Nodes sharing the parent of `node`, in document order; empty for the root.
inline std::vector<std::string> siblings(const KnowledgeGraph& kg, std::string_view node) {
    const Node& n = kg.node(node);
    std::vector<std::string> out;
    if (!n.parent) return out;
    for (std::size_t idx : kg.children_of(*n.parent))
        if (kg.nodes()[idx].id != n.id) out.push_back(kg.nodes()[idx].id);
    return out;
}

// 1 - |a ∩ b| / |a ∪ b|. Both sets are expected to be non-empty.
inline double jaccard_distance(const FeatureSet& a, const FeatureSet& b) {
    std::size_t common = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - common;
    if (uni == 0) return 0.0;
    return 1.0 - static_cast<double>(common) / static_cast<double>(uni);
}

// Mean Jaccard distance to the siblings, floored at od_min.
inline double ontological_distinctiveness(const KnowledgeGraph& kg, std::string_view node,
                                          const OdConfig& cfg = {}) {
    const Node& n = kg.node(node);
    const auto sibs = siblings(kg, node);
    double od = cfg.sibling_less;
    if (!sibs.empty()) {
        double sum = 0.0;
        for (const auto& s : sibs) sum += jaccard_distance(n.features, kg.node(s).features);
        od = sum / static_cast<double>(sibs.size());
    }
    return std::max(od, cfg.od_min);
}

}  // namespace lexlearn

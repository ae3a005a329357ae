#pragma once

#include <algorithm>
#include <compare>
#include <string>
#include <vector>

#include "lexlearn/errors.hpp"
#include "lexlearn/taxonomy.hpp"

namespace lexlearn {

// Unordered set of distinct products shown in one turn, kept in canonical
// (lexicographic) order. Bundles compare lexicographically on that form.
class Bundle {
public:
    Bundle() = default;

    explicit Bundle(std::vector<std::string> products) : products_(std::move(products)) {
        if (products_.empty()) throw ValidationError("bundle must contain at least one product");
        std::sort(products_.begin(), products_.end());
        if (std::adjacent_find(products_.begin(), products_.end()) != products_.end())
            throw ValidationError("bundle contains duplicate products");
    }

    const std::vector<std::string>& products() const { return products_; }
    std::size_t size() const { return products_.size(); }

    bool contains(const std::string& product) const {
        return std::binary_search(products_.begin(), products_.end(), product);
    }

    void validate_against(const KnowledgeGraph& kg) const {
        if (products_.empty()) throw ValidationError("bundle must contain at least one product");
        for (const auto& p : products_)
            if (!kg.has_product(p))
                throw ValidationError("bundle names unknown product '" + p + "'");
    }

    std::string to_string() const {
        std::string s = "{";
        for (std::size_t i = 0; i < products_.size(); ++i) {
            if (i) s += ",";
            s += products_[i];
        }
        return s + "}";
    }

    auto operator<=>(const Bundle&) const = default;
    bool operator==(const Bundle&) const = default;

private:
    std::vector<std::string> products_;
};

inline nlohmann::json to_json(const Bundle& b) { return b.products(); }

inline Bundle bundle_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("bundle must be an array of product ids");
    std::vector<std::string> ids;
    for (const auto& v : j) {
        if (!v.is_string()) throw ParseError("bundle must be an array of product ids");
        ids.push_back(v.get<std::string>());
    }
    return Bundle(std::move(ids));
}

}  // namespace lexlearn

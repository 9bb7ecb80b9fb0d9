#include "roattn/eval.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace roattn::eval {

bool is_permutation_of(const std::vector<int>& order, const std::vector<int>& ids) {
    if (order.size() != ids.size()) {
        return false;
    }
    std::vector<int> a = order;
    std::vector<int> b = ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) {
        return false;
    }
    return std::adjacent_find(a.begin(), a.end()) == a.end();
}

double kendall_tau(const std::vector<int>& order_a, const std::vector<int>& order_b) {
    if (!is_permutation_of(order_a, order_b)) {
        throw std::invalid_argument("orderings are not permutations of the same ids");
    }
    const std::size_t n = order_a.size();
    if (n < 2) {
        return 1.0;
    }
    std::unordered_map<int, std::size_t> rank_b;
    rank_b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        rank_b.emplace(order_b[i], i);
    }
    // rank in b of each element, walked in a's order
    std::vector<std::size_t> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
        ranks[i] = rank_b.at(order_a[i]);
    }
    long long concordant = 0;
    long long discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (ranks[i] < ranks[j]) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const auto pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return (static_cast<double>(concordant) - static_cast<double>(discordant)) / pairs;
}

}  // namespace roattn::eval

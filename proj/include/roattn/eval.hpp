#pragma once

// Ordering evaluation helpers.

#include <vector>

namespace roattn::eval {

// Kendall rank correlation between two orderings of the same id set:
// (concordant - discordant) / (n*(n-1)/2). 1.0 means identical order.
// Throws if the sequences are not permutations of each other.
double kendall_tau(const std::vector<int>& order_a, const std::vector<int>& order_b);

// True when `order` is a permutation of `ids` (each exactly once).
bool is_permutation_of(const std::vector<int>& order, const std::vector<int>& ids);

}  // namespace roattn::eval

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "posbias/corpus.hpp"

namespace posbias {

struct rotation {
    std::size_t pivot = 1;   // r in [1, n]
    std::size_t length = 1;  // n, original token count

    friend bool operator==(const rotation&, const rotation&) = default;
};

/// passage id -> rotation applied to it.
using rotation_map = std::map<std::string, rotation>;

/// [tokens[r..n] ; tokens[1..r-1]] with 1-based r. r == 1 is the identity.
/// Throws std::invalid_argument unless 1 <= r <= n.
template <typename T>
std::vector<T> rotate(std::span<const T> tokens, std::size_t pivot);

extern template std::vector<std::string> rotate(std::span<const std::string>, std::size_t);
extern template std::vector<int> rotate(std::span<const int>, std::size_t);

inline token_list rotate(const token_list& tokens, std::size_t pivot)
{
    return rotate(std::span<const std::string>(tokens), pivot);
}

/// New 1-based index of the token originally at `start` after rotating a
/// length-n sequence at `pivot`: ((start - pivot) mod n) + 1.
std::size_t map_position(std::size_t start, std::size_t pivot, std::size_t n);

/// Draws a pivot uniformly from {1..n} for each length, in order. The k-th
/// length consumes the k-th 64-bit output of a mt19937_64 seeded with `seed`.
std::vector<std::size_t> draw_pivots(std::span<const std::size_t> lengths, std::uint64_t seed);

struct debiased_collection {
    collection passages;
    rotation_map rotations;
};

/// Rotates every passage at an independent uniform pivot. Ids and order are
/// kept; text becomes the space-joined rotated tokens.
debiased_collection debias_collection(const collection& passages, std::uint64_t seed);

// `pid<TAB>r<TAB>n`
void write_rotation_map(std::ostream& out, const collection& order, const rotation_map& rotations);
rotation_map read_rotation_map(std::istream& in, const std::string& source);

}  // namespace posbias

#include "posbias/debias.hpp"

#include <charconv>
#include <ostream>
#include <random>
#include <stdexcept>

#include "posbias/parallel.hpp"

namespace posbias {

template <typename T>
std::vector<T> rotate(std::span<const T> tokens, std::size_t pivot)
{
    const std::size_t n = tokens.size();
    if (n == 0 || pivot < 1 || pivot > n) {
        throw std::invalid_argument("rotate: pivot " + std::to_string(pivot) + " outside [1, " + std::to_string(n) +
                                    "]");
    }
    std::vector<T> out;
    out.reserve(n);
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pivot - 1), tokens.end());
    out.insert(out.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(pivot - 1));
    return out;
}

template std::vector<std::string> rotate(std::span<const std::string>, std::size_t);
template std::vector<int> rotate(std::span<const int>, std::size_t);

std::size_t map_position(std::size_t start, std::size_t pivot, std::size_t n)
{
    if (n == 0 || start < 1 || start > n || pivot < 1 || pivot > n) {
        throw std::invalid_argument("map_position: arguments out of range (s=" + std::to_string(start) +
                                    ", r=" + std::to_string(pivot) + ", n=" + std::to_string(n) + ")");
    }
    return (start + n - pivot) % n + 1;
}

std::vector<std::size_t> draw_pivots(std::span<const std::size_t> lengths, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pivots(lengths.size());
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        const std::uint64_t draw = rng();
        const std::size_t n = lengths[k];
        if (n == 0) {
            throw std::invalid_argument("draw_pivots: zero-length passage at ordinal " + std::to_string(k));
        }
        // Multiply-shift maps the 64-bit draw onto [0, n).
        const auto scaled = static_cast<std::uint64_t>((static_cast<unsigned __int128>(draw) * n) >> 64);
        pivots[k] = static_cast<std::size_t>(scaled) + 1;
    }
    return pivots;
}

debiased_collection debias_collection(const collection& passages, std::uint64_t seed)
{
    std::vector<std::size_t> lengths;
    lengths.reserve(passages.size());
    for (const auto& p : passages) {
        lengths.push_back(p.length());
    }
    const auto pivots = draw_pivots(lengths, seed);

    std::vector<passage> rotated(passages.size());
    parallel_for(passages.size(), [&](std::size_t k) {
        const passage& src = passages[k];
        passage& dst = rotated[k];
        dst.id = src.id;
        dst.tokens = rotate(src.tokens, pivots[k]);
        dst.text = join_tokens(dst.tokens);
    });

    debiased_collection out;
    for (std::size_t k = 0; k < rotated.size(); ++k) {
        out.rotations.emplace(rotated[k].id, rotation{pivots[k], lengths[k]});
        out.passages.add(std::move(rotated[k]));
    }
    return out;
}

void write_rotation_map(std::ostream& out, const collection& order, const rotation_map& rotations)
{
    for (const auto& p : order) {
        auto it = rotations.find(p.id);
        if (it == rotations.end()) {
            throw validation_error("rotation map has no entry for passage '" + p.id + "'");
        }
        out << p.id << '\t' << it->second.pivot << '\t' << it->second.length << '\n';
    }
}

rotation_map read_rotation_map(std::istream& in, const std::string& source)
{
    rotation_map rotations;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw parse_error(source, lineno, "expected `pid<TAB>r<TAB>n`");
        }
        rotation rot;
        const char* r_begin = line.data() + t1 + 1;
        const char* n_begin = line.data() + t2 + 1;
        const char* end = line.data() + line.size();
        auto [p1, e1] = std::from_chars(r_begin, line.data() + t2, rot.pivot);
        auto [p2, e2] = std::from_chars(n_begin, end, rot.length);
        if (e1 != std::errc() || e2 != std::errc() || p1 != line.data() + t2 || p2 != end) {
            throw parse_error(source, lineno, "non-integer rotation field");
        }
        if (rot.pivot < 1 || rot.pivot > rot.length) {
            throw parse_error(source, lineno, "rotation pivot outside [1, n]");
        }
        if (!rotations.emplace(line.substr(0, t1), rot).second) {
            throw parse_error(source, lineno, "duplicate passage id");
        }
    }
    return rotations;
}

}  // namespace posbias

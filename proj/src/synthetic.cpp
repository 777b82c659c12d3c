#include "posbias/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace posbias {
namespace {

std::string padded(const char* prefix, std::size_t value, int width)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, value);
    return buf;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

}  // namespace

synthetic_corpus make_synthetic_corpus(const synthetic_options& options)
{
    const std::size_t block = options.answer_length + 2;
    if (options.passages == 0 || options.vocabulary == 0 || options.answer_length == 0) {
        throw std::invalid_argument("synthetic corpus: passages, vocabulary and answer length must be >= 1");
    }
    if (options.length < block) {
        throw std::invalid_argument("synthetic corpus: passage length " + std::to_string(options.length) +
                                    " shorter than planted block " + std::to_string(block));
    }
    if (options.answer_position && (*options.answer_position < 0.0 || *options.answer_position >= 1.0)) {
        throw std::invalid_argument("synthetic corpus: answer position must be in [0, 1)");
    }

    std::mt19937_64 rng(options.seed);
    const std::size_t group_size = options.distractors + 1;
    const std::size_t groups = options.passages / group_size;
    const int width = static_cast<int>(std::to_string(options.passages).size());

    std::vector<token_list> bodies(options.passages);
    for (auto& body : bodies) {
        body.resize(options.length);
        for (auto& tok : body) {
            tok = "w" + std::to_string(uniform_index(rng, options.vocabulary));
        }
    }

    synthetic_corpus out;
    const std::size_t slots = options.length - block + 1;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::string qid = padded("q", g, width);
        const std::string topic_a = "topic" + std::to_string(g) + "a";
        const std::string topic_b = "topic" + std::to_string(g) + "b";
        token_list answer;
        for (std::size_t i = 0; i < options.answer_length; ++i) {
            answer.push_back("ans" + std::to_string(g) + "x" + std::to_string(i));
        }

        const std::size_t first = g * group_size;
        const std::size_t relevant = first + uniform_index(rng, group_size);
        for (std::size_t k = first; k < first + group_size; ++k) {
            auto& body = bodies[k];
            if (k == relevant) {
                std::size_t start = options.answer_position
                                        ? static_cast<std::size_t>(std::floor(*options.answer_position *
                                                                              static_cast<double>(slots)))
                                        : uniform_index(rng, slots);
                start = std::min(start, slots - 1);
                std::copy(answer.begin(), answer.end(), body.begin() + static_cast<std::ptrdiff_t>(start));
                body[start + options.answer_length] = topic_a;
                body[start + options.answer_length + 1] = topic_b;
            } else {
                const std::size_t ia = uniform_index(rng, options.length);
                std::size_t ib = uniform_index(rng, options.length - 1);
                if (ib >= ia) {
                    ++ib;
                }
                body[ia] = topic_a;
                body[ib] = topic_b;
            }
        }

        out.queries.add(make_query(qid, topic_a + " " + topic_b));
        add_judgment(out.judgments, qid, padded("p", relevant, width), 1);
        out.answers[qid].push_back(join_tokens(answer));
    }

    for (std::size_t k = 0; k < options.passages; ++k) {
        out.passages.add(make_passage(padded("p", k, width), join_tokens(bodies[k])));
    }
    return out;
}

}  // namespace posbias

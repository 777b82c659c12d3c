#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "posbias/corpus.hpp"

namespace posbias {

/// Planted-answer fixture. Passages are grouped; each group carries one
/// query with two topic terms. The group's relevant passage contains
/// [answer tokens ; topic terms] starting at the planted position, the
/// other passages in the group (distractors) contain the topic terms at
/// random positions and no answer. Filler tokens are drawn uniformly from
/// a `w<k>` vocabulary.
struct synthetic_options {
    std::size_t passages = 200;
    std::size_t length = 50;
    /// Relative start of the planted block in [0, 1); nullopt draws it
    /// uniformly per passage.
    std::optional<double> answer_position = 0.0;
    std::size_t answer_length = 1;
    std::size_t distractors = 4;
    std::size_t vocabulary = 300;
    std::uint64_t seed = 1;
};

struct synthetic_corpus {
    collection passages;
    query_set queries;
    qrels judgments;
    answer_set answers;
};

synthetic_corpus make_synthetic_corpus(const synthetic_options& options);

}  // namespace posbias

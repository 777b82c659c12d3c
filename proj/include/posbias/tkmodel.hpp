#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "posbias/corpus.hpp"

namespace posbias {

/// Dense row-major float matrix.
struct matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    matrix() = default;
    matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0F) {}

    std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    float& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    friend bool operator==(const matrix&, const matrix&) = default;
};

enum class sequence_role { query, passage };

class embedding_table {
  public:
    embedding_table() = default;
    explicit embedding_table(std::size_t dim) : m_dim(dim) {}

    std::size_t dim() const noexcept { return m_dim; }
    std::size_t size() const noexcept { return m_tokens.size(); }

    /// Adds or replaces a token vector; throws std::invalid_argument on a
    /// length other than dim().
    void set(const std::string& token, std::span<const float> vector);

    /// nullopt for out-of-vocabulary tokens.
    std::optional<std::span<const float>> find(const std::string& token) const;

    const std::vector<std::string>& tokens() const noexcept { return m_tokens; }

    /// `token v1 ... vd` per line (the common pre-trained text format). An
    /// optional `count dim` header line is skipped.
    static embedding_table read_text(std::istream& in, const std::string& source);
    static embedding_table load_text(const std::filesystem::path& path);
    void write_text(std::ostream& out) const;

    /// N(0, scale^2) vectors for the given vocabulary. Each token draws from its
    /// own stream seeded by (seed, token).
    static embedding_table random(std::span<const std::string> vocabulary, std::size_t dim, std::uint64_t seed,
                                  float scale = 1.0F);

  private:
    std::size_t m_dim = 0;
    std::vector<std::string> m_tokens;
    std::unordered_map<std::string, std::size_t> m_index;
    std::vector<float> m_values;
};

struct encoder_config {
    std::size_t embedding_dim = 300;
    std::size_t layers = 2;
    std::size_t heads = 16;
    std::size_t head_size = 32;
    std::size_t ff_dim = 100;
    float alpha = 0.5F;
    std::size_t query_offset = 0;
    std::size_t passage_offset = 500;

    std::size_t model_dim() const noexcept { return heads * head_size; }
    /// Linear in/out projections are used when the attention width differs
    /// from the embedding width.
    bool projects() const noexcept { return model_dim() != embedding_dim; }

    /// Throws std::invalid_argument for inconsistent settings.
    void validate() const;

    friend bool operator==(const encoder_config&, const encoder_config&) = default;
};

/// JSON object with any subset of the encoder_config field names.
encoder_config read_encoder_config(std::istream& in, const std::string& source);
encoder_config load_encoder_config(const std::filesystem::path& path);
std::string encoder_config_json(const encoder_config& config);

struct layer_weights {
    matrix query, key, value, output;  // model x model
    std::vector<float> query_bias, key_bias, value_bias, output_bias;
    matrix ff_in;   // ff x model
    std::vector<float> ff_in_bias;
    matrix ff_out;  // model x ff
    std::vector<float> ff_out_bias;
    std::vector<float> norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

struct encoder_params {
    encoder_config config;
    matrix in_proj;  // model x embedding (only when config.projects())
    std::vector<float> in_proj_bias;
    matrix out_proj;  // embedding x model
    std::vector<float> out_proj_bias;
    std::vector<layer_weights> layers;

    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    static encoder_params random(const encoder_config& config, std::uint64_t seed);

    /// Checks every tensor shape against config and that all weights are
    /// finite. Throws validation_error.
    void validate() const;

    /// Archive: `<dir>/manifest.json` (config + tensor names, shapes and
    /// element offsets) and `<dir>/weights.bin` (little-endian float32).
    void save(const std::filesystem::path& dir) const;
    static encoder_params load(const std::filesystem::path& dir);
};

/// length x d sinusoidal encoding; row p uses position p + offset. Throws
/// std::invalid_argument on odd d or zero length.
matrix positional_encoding(std::size_t length, std::size_t d, std::size_t offset);

/// Applies the encoder stack to `input` (embeddings with the positional
/// encoding already added). Zero layers returns the input unchanged.
matrix transformer_forward(const matrix& input, const encoder_params& params);

struct contextualized_sequence {
    matrix vectors;
    token_list tokens;
    std::vector<std::size_t> positions;  // 1-based
    std::vector<bool> oov;
};

/// vector_i = embed_i * alpha + TF(embed + pe)_i * (1 - alpha); OOV tokens
/// embed as zero vectors and are flagged.
contextualized_sequence contextualize(const token_list& tokens, sequence_role role, const embedding_table& table,
                                      const encoder_params& params);

}  // namespace posbias

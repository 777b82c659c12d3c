#include "posbias/tkmodel.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "posbias/hash.hpp"
#include "posbias/simd.hpp"

namespace posbias {

namespace {

constexpr double layer_norm_epsilon = 1e-6;

std::string_view next_field(std::string_view line, std::size_t& pos)
{
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) {
        ++pos;
    }
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') {
        ++pos;
    }
    return line.substr(start, pos - start);
}

bool parse_float(std::string_view s, float& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

void embedding_table::set(const std::string& token, std::span<const float> vector)
{
    if (vector.size() != m_dim) {
        throw std::invalid_argument("embedding for '" + token + "' has length " + std::to_string(vector.size()) +
                                    ", expected " + std::to_string(m_dim));
    }
    auto [it, inserted] = m_index.try_emplace(token, m_tokens.size());
    if (inserted) {
        m_tokens.push_back(token);
        m_values.insert(m_values.end(), vector.begin(), vector.end());
    } else {
        std::copy(vector.begin(), vector.end(), m_values.begin() + static_cast<std::ptrdiff_t>(it->second * m_dim));
    }
}

std::optional<std::span<const float>> embedding_table::find(const std::string& token) const
{
    auto it = m_index.find(token);
    if (it == m_index.end()) {
        return std::nullopt;
    }
    return std::span<const float>(m_values.data() + it->second * m_dim, m_dim);
}

embedding_table embedding_table::read_text(std::istream& in, const std::string& source)
{
    embedding_table table;
    std::string line;
    std::size_t lineno = 0;
    std::vector<float> values;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::size_t pos = 0;
        const std::string_view token = next_field(line, pos);
        if (token.empty()) {
            continue;
        }
        values.clear();
        for (std::string_view f = next_field(line, pos); !f.empty(); f = next_field(line, pos)) {
            float v = 0.0F;
            if (!parse_float(f, v)) {
                throw parse_error(source, lineno, "non-numeric embedding component '" + std::string(f) + "'");
            }
            values.push_back(v);
        }
        if (lineno == 1 && values.size() == 1 && values[0] == std::floor(values[0]) &&
            token.find_first_not_of("0123456789") == std::string_view::npos) {
            // `count dim` header
            continue;
        }
        if (values.empty()) {
            throw parse_error(source, lineno, "token without vector");
        }
        if (table.m_dim == 0) {
            table.m_dim = values.size();
        } else if (values.size() != table.m_dim) {
            throw parse_error(source, lineno,
                              "vector length " + std::to_string(values.size()) + " != " + std::to_string(table.m_dim));
        }
        table.set(std::string(token), values);
    }
    if (table.m_dim == 0) {
        throw parse_error(source, 0, "no embeddings found");
    }
    return table;
}

embedding_table embedding_table::load_text(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_text(in, path.string());
}

void embedding_table::write_text(std::ostream& out) const
{
    char buf[64];
    for (std::size_t t = 0; t < m_tokens.size(); ++t) {
        out << m_tokens[t];
        for (std::size_t j = 0; j < m_dim; ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, m_values[t * m_dim + j]);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

embedding_table embedding_table::random(std::span<const std::string> vocabulary, std::size_t dim, std::uint64_t seed,
                                        float scale)
{
    embedding_table table(dim);
    std::vector<float> v(dim);
    for (const auto& token : vocabulary) {
        // Per-token stream: a token's vector does not depend on the rest of the vocabulary.
        std::mt19937_64 rng(seed ^ fnv1a64(token));
        std::normal_distribution<float> normal(0.0F, scale);
        for (auto& x : v) {
            x = normal(rng);
        }
        table.set(token, v);
    }
    return table;
}

void encoder_config::validate() const
{
    if (embedding_dim == 0 || embedding_dim % 2 != 0) {
        throw std::invalid_argument("encoder: embedding_dim must be even and positive");
    }
    if (layers > 0 && (heads == 0 || head_size == 0 || ff_dim == 0)) {
        throw std::invalid_argument("encoder: heads, head_size and ff_dim must be positive");
    }
    if (!(alpha >= 0.0F && alpha <= 1.0F)) {
        throw std::invalid_argument("encoder: alpha must be in [0, 1]");
    }
}

namespace {

using json = nlohmann::json;

json config_to_json(const encoder_config& c)
{
    return json{{"embedding_dim", c.embedding_dim}, {"layers", c.layers},
                {"heads", c.heads},                 {"head_size", c.head_size},
                {"ff_dim", c.ff_dim},               {"alpha", c.alpha},
                {"query_offset", c.query_offset},   {"passage_offset", c.passage_offset}};
}

encoder_config config_from_json(const json& j, const std::string& source)
{
    if (!j.is_object()) {
        throw parse_error(source, 0, "encoder config must be a JSON object");
    }
    encoder_config c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "embedding_dim") {
                c.embedding_dim = value.get<std::size_t>();
            } else if (key == "layers") {
                c.layers = value.get<std::size_t>();
            } else if (key == "heads") {
                c.heads = value.get<std::size_t>();
            } else if (key == "head_size") {
                c.head_size = value.get<std::size_t>();
            } else if (key == "ff_dim") {
                c.ff_dim = value.get<std::size_t>();
            } else if (key == "alpha") {
                c.alpha = value.get<float>();
            } else if (key == "query_offset") {
                c.query_offset = value.get<std::size_t>();
            } else if (key == "passage_offset") {
                c.passage_offset = value.get<std::size_t>();
            } else {
                throw parse_error(source, 0, "unknown encoder config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw parse_error(source, 0, std::string("bad encoder config value: ") + e.what());
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw validation_error(source + ": " + e.what());
    }
    return c;
}

}  // namespace

encoder_config read_encoder_config(std::istream& in, const std::string& source)
{
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(source, 0, std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j, source);
}

encoder_config load_encoder_config(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_encoder_config(in, path.string());
}

std::string encoder_config_json(const encoder_config& config)
{
    return config_to_json(config).dump(2);
}

namespace {

// Visits every tensor of the parameter set in archive order.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn)
{
    auto vec = [&](const std::string& name, auto& v) { fn(name, std::size_t{1}, v.size(), v, false); };
    auto mat = [&](const std::string& name, auto& m) { fn(name, m.rows, m.cols, m.data, true); };
    if (p.config.projects() && p.config.layers > 0) {
        mat("in_proj.weight", p.in_proj);
        vec("in_proj.bias", p.in_proj_bias);
        mat("out_proj.weight", p.out_proj);
        vec("out_proj.bias", p.out_proj_bias);
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& w = p.layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        mat(pre + "attn.query.weight", w.query);
        vec(pre + "attn.query.bias", w.query_bias);
        mat(pre + "attn.key.weight", w.key);
        vec(pre + "attn.key.bias", w.key_bias);
        mat(pre + "attn.value.weight", w.value);
        vec(pre + "attn.value.bias", w.value_bias);
        mat(pre + "attn.output.weight", w.output);
        vec(pre + "attn.output.bias", w.output_bias);
        mat(pre + "ff.in.weight", w.ff_in);
        vec(pre + "ff.in.bias", w.ff_in_bias);
        mat(pre + "ff.out.weight", w.ff_out);
        vec(pre + "ff.out.bias", w.ff_out_bias);
        vec(pre + "norm1.gain", w.norm1_gain);
        vec(pre + "norm1.bias", w.norm1_bias);
        vec(pre + "norm2.gain", w.norm2_gain);
        vec(pre + "norm2.bias", w.norm2_bias);
    }
}

// Allocates all tensors at the shapes implied by config.
encoder_params shaped(const encoder_config& c)
{
    encoder_params p;
    p.config = c;
    const std::size_t d = c.model_dim();
    if (c.projects() && c.layers > 0) {
        p.in_proj = matrix(d, c.embedding_dim);
        p.in_proj_bias.assign(d, 0.0F);
        p.out_proj = matrix(c.embedding_dim, d);
        p.out_proj_bias.assign(c.embedding_dim, 0.0F);
    }
    p.layers.resize(c.layers);
    for (auto& w : p.layers) {
        w.query = w.key = w.value = w.output = matrix(d, d);
        w.query_bias.assign(d, 0.0F);
        w.key_bias.assign(d, 0.0F);
        w.value_bias.assign(d, 0.0F);
        w.output_bias.assign(d, 0.0F);
        w.ff_in = matrix(c.ff_dim, d);
        w.ff_in_bias.assign(c.ff_dim, 0.0F);
        w.ff_out = matrix(d, c.ff_dim);
        w.ff_out_bias.assign(d, 0.0F);
        w.norm1_gain.assign(d, 1.0F);
        w.norm1_bias.assign(d, 0.0F);
        w.norm2_gain.assign(d, 1.0F);
        w.norm2_bias.assign(d, 0.0F);
    }
    return p;
}

}  // namespace

encoder_params encoder_params::random(const encoder_config& config, std::uint64_t seed)
{
    config.validate();
    encoder_params p = shaped(config);
    std::mt19937_64 rng(seed);
    for_each_tensor(p, [&](const std::string&, std::size_t rows, std::size_t cols, std::vector<float>& data,
                           bool is_matrix) {
        if (!is_matrix) {
            return;
        }
        const float limit = std::sqrt(6.0F / static_cast<float>(rows + cols));
        std::uniform_real_distribution<float> uniform(-limit, limit);
        for (auto& x : data) {
            x = uniform(rng);
        }
    });
    return p;
}

void encoder_params::validate() const
{
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw validation_error(e.what());
    }
    if (layers.size() != config.layers) {
        throw validation_error("encoder: layer count mismatch");
    }
    const encoder_params expected = shaped(config);
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for_each_tensor(expected, [&](const std::string&, std::size_t r, std::size_t c, const std::vector<float>&, bool) {
        shapes.emplace_back(r, c);
    });
    std::size_t i = 0;
    for_each_tensor(*this, [&](const std::string& name, std::size_t r, std::size_t c, const std::vector<float>& data,
                               bool) {
        if (i >= shapes.size() || shapes[i] != std::make_pair(r, c) || data.size() != r * c) {
            throw validation_error("encoder: tensor '" + name + "' has unexpected shape");
        }
        if (!std::all_of(data.begin(), data.end(), [](float x) { return std::isfinite(x); })) {
            throw validation_error("encoder: tensor '" + name + "' has non-finite weights");
        }
        ++i;
    });
    if (i != shapes.size()) {
        throw validation_error("encoder: tensor count mismatch");
    }
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

}  // namespace

void encoder_params::save(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    json tensors = json::array();
    std::size_t offset = 0;
    auto bin = open_output(dir / "weights.bin");
    for_each_tensor(*this, [&](const std::string& name, std::size_t r, std::size_t c, const std::vector<float>& data,
                               bool is_matrix) {
        json shape = is_matrix ? json::array({r, c}) : json::array({c});
        tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
        for (float x : data) {
            const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(x));
            bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += data.size();
    });
    if (!bin) {
        throw io_error("failed writing " + (dir / "weights.bin").string());
    }
    json manifest{{"format", "posbias-encoder-v1"},
                  {"dtype", "float32-le"},
                  {"data", "weights.bin"},
                  {"config", config_to_json(config)},
                  {"tensors", tensors}};
    auto out = open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
}

encoder_params encoder_params::load(const std::filesystem::path& dir)
{
    const auto manifest_path = dir / "manifest.json";
    json manifest;
    {
        auto in = open_input(manifest_path);
        try {
            manifest = json::parse(in);
        } catch (const json::parse_error& e) {
            throw parse_error(manifest_path.string(), 0, std::string("invalid JSON: ") + e.what());
        }
    }
    if (!manifest.contains("config") || !manifest.contains("tensors")) {
        throw parse_error(manifest_path.string(), 0, "manifest needs 'config' and 'tensors'");
    }
    encoder_params p = shaped(config_from_json(manifest.at("config"), manifest_path.string()));

    const std::string data_name = manifest.value("data", std::string("weights.bin"));
    auto bin = open_input(dir / data_name);
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(float) != 0) {
        throw parse_error((dir / data_name).string(), 0, "size is not a multiple of 4 bytes");
    }
    const std::size_t total = raw.size() / sizeof(float);

    std::unordered_map<std::string, json> by_name;
    for (const auto& t : manifest.at("tensors")) {
        by_name[t.at("name").get<std::string>()] = t;
    }
    for_each_tensor(p, [&](const std::string& name, std::size_t r, std::size_t c, std::vector<float>& data,
                           bool is_matrix) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw validation_error("weight archive is missing tensor '" + name + "'");
        }
        const auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
        const std::vector<std::size_t> want = is_matrix ? std::vector<std::size_t>{r, c} : std::vector<std::size_t>{c};
        if (shape != want) {
            throw validation_error("tensor '" + name + "' has shape mismatch with config");
        }
        const auto offset = it->second.at("offset").get<std::size_t>();
        if (offset + data.size() > total) {
            throw validation_error("tensor '" + name + "' extends past the end of the weight file");
        }
        for (std::size_t k = 0; k < data.size(); ++k) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, raw.data() + (offset + k) * sizeof bits, sizeof bits);
            data[k] = std::bit_cast<float>(to_little_endian(bits));
        }
    });
    p.validate();
    return p;
}

matrix positional_encoding(std::size_t length, std::size_t d, std::size_t offset)
{
    if (d == 0 || d % 2 != 0) {
        throw std::invalid_argument("positional_encoding: dimension must be even and positive");
    }
    if (length == 0) {
        throw std::invalid_argument("positional_encoding: length must be >= 1");
    }
    matrix pe(length, d);
    for (std::size_t p = 0; p < length; ++p) {
        const double pos = static_cast<double>(p + offset);
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double angle = pos / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
            pe(p, 2 * i) = static_cast<float>(std::sin(angle));
            pe(p, 2 * i + 1) = static_cast<float>(std::cos(angle));
        }
    }
    return pe;
}

namespace {

// out.row(r) = weight * in.row(r) + bias
matrix linear(const matrix& in, const matrix& weight, std::span<const float> bias)
{
    if (in.cols != weight.cols) {
        throw std::invalid_argument("linear: input width " + std::to_string(in.cols) + " != weight width " +
                                    std::to_string(weight.cols));
    }
    const auto& k = simd::active();
    matrix out(in.rows, weight.rows);
    for (std::size_t r = 0; r < in.rows; ++r) {
        const float* x = in.row(r).data();
        float* y = out.row(r).data();
        for (std::size_t o = 0; o < weight.rows; ++o) {
            y[o] = static_cast<float>(k.dot(weight.row(o).data(), x, in.cols) + static_cast<double>(bias[o]));
        }
    }
    return out;
}

void layer_norm(matrix& x, std::span<const float> gain, std::span<const float> bias)
{
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto row = x.row(r);
        double mean = 0.0;
        for (float v : row) {
            mean += v;
        }
        mean /= static_cast<double>(row.size());
        double var = 0.0;
        for (float v : row) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(row.size());
        const double inv = 1.0 / std::sqrt(var + layer_norm_epsilon);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] = static_cast<float>((row[j] - mean) * inv * gain[j] + bias[j]);
        }
    }
}

matrix self_attention(const matrix& x, const layer_weights& w, std::size_t heads, std::size_t head_size)
{
    const matrix q = linear(x, w.query, w.query_bias);
    const matrix k = linear(x, w.key, w.key_bias);
    const matrix v = linear(x, w.value, w.value_bias);
    const std::size_t m = x.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_size));
    const auto& kern = simd::active();

    matrix context(m, x.cols);
    std::vector<double> scores(m);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * head_size;
        for (std::size_t i = 0; i < m; ++i) {
            double max_score = -INFINITY;
            for (std::size_t j = 0; j < m; ++j) {
                scores[j] = kern.dot(q.row(i).data() + off, k.row(j).data() + off, head_size) * scale;
                max_score = std::max(max_score, scores[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                scores[j] = std::exp(scores[j] - max_score);
                denom += scores[j];
            }
            float* out = context.row(i).data() + off;
            for (std::size_t j = 0; j < m; ++j) {
                kern.axpy(static_cast<float>(scores[j] / denom), v.row(j).data() + off, out, head_size);
            }
        }
    }
    return linear(context, w.output, w.output_bias);
}

void add_in_place(matrix& x, const matrix& y)
{
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] += y.data[i];
    }
}

void encoder_layer(matrix& x, const layer_weights& w, const encoder_config& c)
{
    add_in_place(x, self_attention(x, w, c.heads, c.head_size));
    layer_norm(x, w.norm1_gain, w.norm1_bias);

    matrix hidden = linear(x, w.ff_in, w.ff_in_bias);
    for (auto& h : hidden.data) {
        h = std::max(h, 0.0F);
    }
    add_in_place(x, linear(hidden, w.ff_out, w.ff_out_bias));
    layer_norm(x, w.norm2_gain, w.norm2_bias);
}

}  // namespace

matrix transformer_forward(const matrix& input, const encoder_params& params)
{
    const auto& c = params.config;
    if (input.cols != c.embedding_dim) {
        throw std::invalid_argument("transformer_forward: input width " + std::to_string(input.cols) +
                                    " != embedding_dim " + std::to_string(c.embedding_dim));
    }
    if (params.layers.size() != c.layers) {
        throw std::invalid_argument("transformer_forward: params hold " + std::to_string(params.layers.size()) +
                                    " layers, config says " + std::to_string(c.layers));
    }
    if (c.layers == 0) {
        return input;
    }
    matrix x = c.projects() ? linear(input, params.in_proj, params.in_proj_bias) : input;
    for (const auto& layer : params.layers) {
        encoder_layer(x, layer, c);
    }
    return c.projects() ? linear(x, params.out_proj, params.out_proj_bias) : x;
}

contextualized_sequence contextualize(const token_list& tokens, sequence_role role, const embedding_table& table,
                                      const encoder_params& params)
{
    if (tokens.empty()) {
        throw std::invalid_argument("contextualize: empty token list");
    }
    const auto& c = params.config;
    if (table.dim() != c.embedding_dim) {
        throw std::invalid_argument("contextualize: embedding table dim " + std::to_string(table.dim()) +
                                    " != encoder embedding_dim " + std::to_string(c.embedding_dim));
    }
    const std::size_t m = tokens.size();
    contextualized_sequence out;
    out.tokens = tokens;
    out.positions.resize(m);
    out.oov.resize(m);

    matrix embedded(m, c.embedding_dim);
    for (std::size_t i = 0; i < m; ++i) {
        out.positions[i] = i + 1;
        if (auto vec = table.find(tokens[i])) {
            std::copy(vec->begin(), vec->end(), embedded.row(i).begin());
        } else {
            out.oov[i] = true;
        }
    }

    if (c.alpha == 1.0F) {
        out.vectors = std::move(embedded);
        return out;
    }

    const std::size_t offset = role == sequence_role::query ? c.query_offset : c.passage_offset;
    matrix input = positional_encoding(m, c.embedding_dim, offset);
    add_in_place(input, embedded);
    const matrix contextual = transformer_forward(input, params);

    out.vectors = matrix(m, c.embedding_dim);
    const auto& kern = simd::active();
    for (std::size_t i = 0; i < m; ++i) {
        kern.gate_mix(c.alpha, embedded.row(i).data(), contextual.row(i).data(), out.vectors.row(i).data(),
                      c.embedding_dim);
    }
    return out;
}

}  // namespace posbias

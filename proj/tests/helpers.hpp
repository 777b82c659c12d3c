#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "posbias/tkmodel.hpp"

namespace posbias::testkit {

// Fresh directory under the system temp dir, removed on destruction.
class temp_dir {
  public:
    explicit temp_dir(const std::string& tag)
    {
        std::random_device rd;
        m_path = std::filesystem::temp_directory_path() /
                 ("posbias-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(m_path);
    }
    ~temp_dir()
    {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;

    const std::filesystem::path& path() const { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

  private:
    std::filesystem::path m_path;
};

inline std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& path, const std::string& content)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, float scale = 1.0F)
{
    std::normal_distribution<float> normal(0.0F, scale);
    matrix m(rows, cols);
    for (auto& x : m.data) {
        x = normal(rng);
    }
    return m;
}

inline matrix make_matrix(std::vector<std::vector<float>> rows)
{
    matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m.data[i * m.cols + j] = rows[i][j];
        }
    }
    return m;
}

}  // namespace posbias::testkit

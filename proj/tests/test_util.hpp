// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hyrr/common.hpp"
#include "hyrr/corpus.hpp"

namespace hyrr::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "hyrr_test";
    if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    for (auto& c : name) {
      if (c == '/') c = '_';
    }
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Words "w0".."w{n-1}" drawn with a skewed distribution so document
/// frequencies vary.
inline std::string random_text(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
  std::string text;
  for (std::size_t i = 0; i < len; ++i) {
    const double u = uniform_unit(rng);
    const auto w = static_cast<std::size_t>(u * u * static_cast<double>(vocab));
    if (!text.empty()) text.push_back(' ');
    text += "w" + std::to_string(w);
  }
  return text;
}

inline Corpus random_corpus(std::uint64_t seed, std::size_t n, std::size_t vocab = 200,
                            std::size_t min_len = 5, std::size_t max_len = 40) {
  Rng rng(seed);
  Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    corpus.add({"p" + std::to_string(i), "", random_text(rng, vocab, min_len, max_len)});
  }
  return corpus;
}

inline std::vector<Query> random_queries(std::uint64_t seed, std::size_t n, std::size_t vocab = 200) {
  Rng rng(seed);
  std::vector<Query> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"q" + std::to_string(i), random_text(rng, vocab, 1, 6)});
  return out;
}

}  // namespace hyrr::test

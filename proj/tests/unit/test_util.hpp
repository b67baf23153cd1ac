#pragma once

#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "knight/embedding.hpp"
#include "knight/error.hpp"
#include "knight/random.hpp"

namespace knight::test {

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(KNIGHT_TEST_DATA_DIR) / name; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("knight_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

inline std::vector<float> gaussian_values(std::size_t dim, CounterRng& rng) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.gaussian());
  return v;
}

inline NormalizedEmbedding random_unit(std::size_t dim, CounterRng& rng) {
  return normalize(EmbeddingVector(gaussian_values(dim, rng)));
}

// Runs `fn` and returns the code of the knight::Error it throws.
template <typename Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a knight::Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace knight::test

#pragma once

#include <atomic>
#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fcnet/model.hpp"

namespace fcnet::testing {

inline std::vector<std::string> labels(std::size_t n, const std::string& prefix = "r") {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline Matrix random_symmetric(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  Matrix m = random_matrix(rng, n, n, lo, hi);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

/// Random symmetric matrix with unit diagonal and off-diagonal in (-1, 1).
inline ConnectivityMatrix random_correlation(std::mt19937_64& rng, std::size_t n, const std::string& participant = "p",
                                             const std::string& condition = "A") {
  Matrix m = random_symmetric(rng, static_cast<Eigen::Index>(n), -0.99, 0.99);
  m.diagonal().setOnes();
  return ConnectivityMatrix(std::move(m), labels(n), participant, condition, MatrixKind::raw);
}

/// Scratch directory removed when the object goes out of scope.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fcnet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace fcnet::testing

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "normgen/nn/tensor.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("normgen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

template <class S>
normgen::nn::FeatureMap<S> random_map(int channels, normgen::nn::Extent e, std::mt19937& gen, double lo = -1,
                                      double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  normgen::nn::FeatureMap<S> m(channels, e);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = S(u(gen));
  return m;
}

template <class S>
normgen::nn::FeatureMap<S> random_mask(normgen::nn::Extent e, std::mt19937& gen, double p = 0.3) {
  std::bernoulli_distribution b(p);
  normgen::nn::FeatureMap<S> m(1, e);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = b(gen) ? S(1) : S(0);
  return m;
}

}  // namespace testing

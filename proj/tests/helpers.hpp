#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bsnn/tensor.hpp"
#include "bsnn/verify/gradcheck.hpp"
#include "doctest.h"

namespace testing {

inline bsnn::Tensor randn(const bsnn::Shape& s, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  bsnn::Tensor t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

inline void require_all_pass(const std::vector<bsnn::verify::CheckResult>& results) {
  REQUIRE_FALSE(results.empty());
  for (const auto& r : results) {
    INFO(r.name << ": error " << r.error << " tol " << r.tolerance << " (" << r.detail << ")");
    CHECK(r.pass);
  }
}

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bsnn_test_" + name)).string();
}

}  // namespace testing

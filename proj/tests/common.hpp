#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ufilter/config.hpp"
#include "ufilter/hmm.hpp"
#include "ufilter/model_space.hpp"

namespace testing_util {

using namespace ufilter;

inline Generator bernoulli(double a, double b, Matrix transition = Matrix::identity(2)) {
  return Generator(std::move(transition), Matrix{{a, 1 - a}, {b, 1 - b}});
}

inline Generator bernoulli_chain() { return bernoulli(0.75, 0.25); }

inline Generator uninformative(std::size_t n, std::size_t d, Matrix transition) {
  return Generator(std::move(transition), Matrix(n, d, 1.0 / static_cast<double>(d)));
}

inline ObsSequence obs(std::initializer_list<std::size_t> ys) {
  ObsSequence out;
  for (auto y : ys) out.push_back(ObsSymbol{y});
  return out;
}

inline std::string config_path(const std::string& name) { return std::string(UFILTER_CONFIG_DIR) + "/" + name; }

inline RunConfig load(const std::string& name) { return load_config(config_path(name)); }

inline std::shared_ptr<const SimplexGrid> grid(std::size_t n, std::size_t m) {
  return std::make_shared<const SimplexGrid>(n, m);
}

}  // namespace testing_util

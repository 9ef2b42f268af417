#include "cipherpatch/permutation.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "cipherpatch/errors.hpp"
#include "cipherpatch/rng.hpp"

namespace cipherpatch {

Permutation Permutation::identity(std::size_t n) {
  if (n == 0) {
    throw DimensionError("permutation size must be positive");
  }
  std::vector<std::uint32_t> map(n);
  std::iota(map.begin(), map.end(), 0u);
  return Permutation(std::move(map));
}

Permutation::Permutation(std::vector<std::uint32_t> map) : map_(std::move(map)) {
  if (map_.empty()) {
    throw DimensionError("permutation size must be positive");
  }
  std::vector<bool> seen(map_.size(), false);
  for (std::uint32_t v : map_) {
    if (v >= map_.size() || seen[v]) {
      throw DimensionError("index map is not a bijection over [0, n)");
    }
    seen[v] = true;
  }
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] != i) return false;
  }
  return true;
}

Permutation gen_permutation(std::uint64_t key, std::size_t n) {
  if (n == 0) {
    throw DimensionError("permutation size must be positive");
  }
  std::vector<std::uint32_t> map(n);
  std::iota(map.begin(), map.end(), 0u);
  SplitMix64 rng(key);
  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::size_t j = rng.next() % (i + 1);
    std::swap(map[i], map[j]);
  }
  return Permutation(std::move(map));
}

Matf as_matrix(const Permutation& p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Matf m = Matf::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, p[static_cast<std::size_t>(i)]) = 1.0f;
  }
  return m;
}

Permutation extend_for_class_token(const Permutation& p) {
  std::vector<std::uint32_t> map(p.size() + 1);
  map[0] = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    map[i + 1] = p[i] + 1;
  }
  return Permutation(std::move(map));
}

Permutation inverse(const Permutation& p) {
  std::vector<std::uint32_t> map(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    map[p[i]] = static_cast<std::uint32_t>(i);
  }
  return Permutation(std::move(map));
}

Permutation compose(const Permutation& p, const Permutation& q) {
  if (p.size() != q.size()) {
    throw DimensionError("compose: size mismatch " + std::to_string(p.size()) +
                         " vs " + std::to_string(q.size()));
  }
  std::vector<std::uint32_t> map(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    map[i] = q[p[i]];
  }
  return Permutation(std::move(map));
}

Matf apply_rows(const Permutation& p, const Matf& rows) {
  if (static_cast<std::size_t>(rows.rows()) != p.size()) {
    throw DimensionError("apply_rows: expected " + std::to_string(p.size()) +
                         " rows, got " + std::to_string(rows.rows()));
  }
  Matf out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.row(i) = rows.row(p[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace cipherpatch

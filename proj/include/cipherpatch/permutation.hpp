#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cipherpatch/errors.hpp"

namespace cipherpatch {

using Matf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Bijective index map over n slots, stored 0-based. Applying a permutation
// moves input slot map[i] to output slot i, i.e. it acts on a stack of rows
// as left-multiplication by the matrix returned by as_matrix().
class Permutation {
 public:
  // Identity permutation over n slots. Throws DimensionError if n == 0.
  static Permutation identity(std::size_t n);

  // Constructs from an explicit index map; validates bijectivity.
  explicit Permutation(std::vector<std::uint32_t> map);

  std::size_t size() const { return map_.size(); }
  const std::vector<std::uint32_t>& map() const { return map_; }
  std::uint32_t operator[](std::size_t i) const { return map_[i]; }

  bool is_identity() const;

  bool operator==(const Permutation& other) const = default;

 private:
  std::vector<std::uint32_t> map_;
};

// Keyed generation: Fisher-Yates over [0..n-1] seeded with a SplitMix64
// stream, descending with modulo bounding. Identical (key, n) pairs yield
// identical permutations on all platforms. Throws DimensionError if n == 0.
Permutation gen_permutation(std::uint64_t key, std::size_t n);

// Dense 0/1 matrix with row i carrying a single 1 at column map[i].
// For tests and documentation only; hot paths use the index form.
Matf as_matrix(const Permutation& p);

// Permutation over n+1 slots fixing slot 0 (the class-token row) and acting
// as p shifted by one on slots 1..n.
Permutation extend_for_class_token(const Permutation& p);

// inverse(p) undoes p; compose(p, q) acts as "apply q, then p", so
// as_matrix(compose(p, q)) == as_matrix(p) * as_matrix(q).
Permutation inverse(const Permutation& p);
Permutation compose(const Permutation& p, const Permutation& q);

// Output row i = input row map[i]. Throws DimensionError on length mismatch.
Matf apply_rows(const Permutation& p, const Matf& rows);

template <typename T>
std::vector<T> apply_slots(const Permutation& p, const std::vector<T>& in);

// --- template definitions ---

template <typename T>
std::vector<T> apply_slots(const Permutation& p, const std::vector<T>& in) {
  if (in.size() != p.size()) {
    throw DimensionError("apply_slots: expected " + std::to_string(p.size()) +
                         " slots, got " + std::to_string(in.size()));
  }
  std::vector<T> out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out.push_back(in[p[i]]);
  }
  return out;
}

}  // namespace cipherpatch

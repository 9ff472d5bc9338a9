#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace noisebench {

/// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

struct SparseEntry {
  std::uint32_t index;
  double value;
};

/// Sorted by index, no duplicate indices.
using SparseVector = std::vector<SparseEntry>;

/// Hashed n-gram bag of words, L2-normalised.
class Featurizer {
 public:
  static constexpr std::size_t default_hash_dim = std::size_t{1} << 18;

  Featurizer() : Featurizer(default_hash_dim) {}
  explicit Featurizer(std::size_t hash_dim, std::vector<unsigned> ngram_orders = {1, 2},
                      std::uint64_t hash_seed = 0);

  std::size_t hash_dim() const { return hash_dim_; }
  const std::vector<unsigned>& ngram_orders() const { return ngram_orders_; }
  std::uint64_t hash_seed() const { return hash_seed_; }

  SparseVector featurize(std::string_view text) const;
  std::uint32_t hash_ngram(const std::vector<std::string>& tokens, std::size_t begin,
                           std::size_t length) const;

  nlohmann::json to_json() const;
  static Featurizer from_json(const nlohmann::json& j);

  bool operator==(const Featurizer&) const = default;

 private:
  std::size_t hash_dim_;
  std::vector<unsigned> ngram_orders_;
  std::uint64_t hash_seed_;
};

}  // namespace noisebench

#include "noisebench/featurizer.hpp"

#include <algorithm>
#include <cmath>

#include "noisebench/error.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    current += c;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Featurizer::Featurizer(std::size_t hash_dim, std::vector<unsigned> ngram_orders,
                       std::uint64_t hash_seed)
    : hash_dim_(hash_dim), ngram_orders_(std::move(ngram_orders)), hash_seed_(hash_seed) {
  if (hash_dim_ == 0 || (hash_dim_ & (hash_dim_ - 1)) != 0 || hash_dim_ > (std::size_t{1} << 31)) {
    throw ValidationError("hash_dim must be a power of two no larger than 2^31");
  }
  std::sort(ngram_orders_.begin(), ngram_orders_.end());
  ngram_orders_.erase(std::unique(ngram_orders_.begin(), ngram_orders_.end()), ngram_orders_.end());
  if (ngram_orders_.empty() || ngram_orders_.front() == 0) {
    throw ValidationError("ngram orders must be positive and non-empty");
  }
}

std::uint32_t Featurizer::hash_ngram(const std::vector<std::string>& tokens, std::size_t begin,
                                     std::size_t length) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t t = begin; t < begin + length; ++t) {
    if (t != begin) {
      h ^= 0x1fu;  // unit separator between tokens
      h *= 0x100000001b3ULL;
    }
    for (unsigned char c : tokens[t]) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return static_cast<std::uint32_t>(derive_seed(hash_seed_, h) & (hash_dim_ - 1));
}

SparseVector Featurizer::featurize(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::vector<std::uint32_t> hashed;
  for (auto order : ngram_orders_) {
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) hashed.push_back(hash_ngram(tokens, i, order));
  }
  std::sort(hashed.begin(), hashed.end());
  SparseVector vec;
  for (auto index : hashed) {
    if (!vec.empty() && vec.back().index == index) {
      vec.back().value += 1.0;
    } else {
      vec.push_back({index, 1.0});
    }
  }
  double norm = 0.0;
  for (const auto& e : vec) norm += e.value * e.value;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& e : vec) e.value /= norm;
  }
  return vec;
}

nlohmann::json Featurizer::to_json() const {
  return {{"hash_dim", hash_dim_}, {"ngram_orders", ngram_orders_}, {"hash_seed", hash_seed_}};
}

Featurizer Featurizer::from_json(const nlohmann::json& j) {
  try {
    return Featurizer(j.value("hash_dim", default_hash_dim),
                      j.value("ngram_orders", std::vector<unsigned>{1, 2}),
                      j.value("hash_seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid featurizer config: ") + e.what());
  }
}

}  // namespace noisebench

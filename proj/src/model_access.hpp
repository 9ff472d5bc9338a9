#pragma once

#include <vector>

#include "noisebench/model.hpp"

namespace noisebench {

struct ModelAccess {
  static ModelParams make(std::size_t hash_dim, std::size_t hidden, std::size_t num_labels,
                          double drop_rate, double scale, std::vector<double> encoder,
                          std::vector<double> encoder_bias,
                          std::vector<std::pair<std::vector<double>, std::vector<double>>> heads) {
    ModelParams p;
    p.hash_dim_ = hash_dim;
    p.hidden_ = hidden;
    p.num_labels_ = num_labels;
    p.drop_rate_ = drop_rate;
    p.scale_ = scale;
    p.encoder_ = std::move(encoder);
    p.encoder_bias_ = std::move(encoder_bias);
    for (auto& [w, b] : heads) p.heads_.push_back({std::move(w), std::move(b)});
    return p;
  }
  static const std::vector<double>& encoder_bias(const ModelParams& p) { return p.encoder_bias_; }
  static const std::vector<double>& head_bias(const ModelParams& p, std::size_t h) { return p.heads_[h].bias; }
  static const std::vector<double>& encoder(const ModelParams& p) { return p.encoder_; }
  static std::vector<double>& encoder(ModelParams& p) { return p.encoder_; }
  static double scale(const ModelParams& p) { return p.scale_; }
  static double& scale(ModelParams& p) { return p.scale_; }
  static std::vector<double>& encoder_bias(ModelParams& p) { return p.encoder_bias_; }
  static const std::vector<double>& head_weights(const ModelParams& p, std::size_t h) {
    return p.heads_[h].weights;
  }
  static std::vector<double>& head_weights(ModelParams& p, std::size_t h) { return p.heads_[h].weights; }
  static std::vector<double>& head_bias(ModelParams& p, std::size_t h) { return p.heads_[h].bias; }
};

}  // namespace noisebench

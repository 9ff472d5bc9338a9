#include "noisebench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "model_access.hpp"
#include "noisebench/error.hpp"

namespace noisebench {

namespace {

constexpr const char* kFormatName = "noisebench-checkpoint";
constexpr int kVersion = 1;
constexpr char kMagic[4] = {'N', 'B', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "binary checkpoints assume little-endian");

nlohmann::json header_json(const Checkpoint& c) {
  const auto& p = c.params;
  return {{"format", kFormatName},
          {"version", kVersion},
          {"featurizer", c.featurizer.to_json()},
          {"labels", c.labels.names()},
          {"hash_dim", p.hash_dim()},
          {"hidden", p.hidden()},
          {"num_labels", p.num_labels()},
          {"num_heads", p.num_heads()},
          {"drop_rate", p.drop_rate()},
          {"encoder_scale", ModelAccess::scale(p)}};
}

void check_header(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format") || j["format"] != kFormatName) {
    throw ValidationError("not a noisebench checkpoint");
  }
  if (!j.contains("version") || j["version"] != kVersion) {
    throw ValidationError("unsupported checkpoint version " + (j.contains("version") ? j["version"].dump() : "?"));
  }
}

void check_sizes(const ModelParams& p, const LabelSet& labels, const Featurizer& f) {
  if (p.num_labels() != labels.size()) throw ValidationError("checkpoint label count mismatch");
  if (p.hash_dim() != f.hash_dim()) throw ValidationError("checkpoint hash_dim mismatch");
  if (!p.all_finite()) throw ValidationError("checkpoint contains non-finite weights");
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint) {
  const auto& p = checkpoint.params;
  auto j = header_json(checkpoint);
  j["encoder"] = ModelAccess::encoder(p);
  j["encoder_bias"] = ModelAccess::encoder_bias(p);
  auto heads = nlohmann::json::array();
  for (std::size_t h = 0; h < p.num_heads(); ++h) {
    heads.push_back({{"weights", ModelAccess::head_weights(p, h)}, {"bias", ModelAccess::head_bias(p, h)}});
  }
  j["heads"] = std::move(heads);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  check_header(j);
  try {
    auto featurizer = Featurizer::from_json(j.at("featurizer"));
    LabelSet labels(j.at("labels").get<std::vector<std::string>>());
    const auto hash_dim = j.at("hash_dim").get<std::size_t>();
    const auto hidden = j.at("hidden").get<std::size_t>();
    const auto k = j.at("num_labels").get<std::size_t>();
    auto encoder = j.at("encoder").get<std::vector<double>>();
    auto bias = j.at("encoder_bias").get<std::vector<double>>();
    if (encoder.size() != hash_dim * hidden || bias.size() != hidden) {
      throw ValidationError("checkpoint encoder has the wrong size");
    }
    std::vector<std::pair<std::vector<double>, std::vector<double>>> heads;
    for (const auto& h : j.at("heads")) {
      auto w = h.at("weights").get<std::vector<double>>();
      auto b = h.at("bias").get<std::vector<double>>();
      if (w.size() != hidden * k || b.size() != k) throw ValidationError("checkpoint head has the wrong size");
      heads.emplace_back(std::move(w), std::move(b));
    }
    if (heads.empty()) throw ValidationError("checkpoint has no heads");
    auto params = ModelAccess::make(hash_dim, hidden, k, j.at("drop_rate").get<double>(),
                                    j.at("encoder_scale").get<double>(), std::move(encoder),
                                    std::move(bias), std::move(heads));
    check_sizes(params, labels, featurizer);
    return {std::move(featurizer), std::move(labels), std::move(params)};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

namespace {

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  const std::uint64_t n = values.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in, std::size_t expected) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n != expected) throw ValidationError("binary checkpoint is truncated or inconsistent");
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ValidationError("binary checkpoint is truncated");
  return values;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << checkpoint_to_json(checkpoint).dump() << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  const auto header = header_json(checkpoint).dump();
  const std::uint64_t header_size = header.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&header_size), sizeof header_size);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto& p = checkpoint.params;
  write_doubles(out, ModelAccess::encoder(p));
  write_doubles(out, ModelAccess::encoder_bias(p));
  for (std::size_t h = 0; h < p.num_heads(); ++h) {
    write_doubles(out, ModelAccess::head_weights(p, h));
    write_doubles(out, ModelAccess::head_bias(p, h));
  }
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    in.clear();
    in.seekg(0);
    std::stringstream buffer;
    buffer << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("'" + path.string() + "' is neither a binary nor a JSON checkpoint");
    }
    return checkpoint_from_json(j);
  }
  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof header_size);
  if (!in || header_size > (1u << 30)) throw ValidationError("corrupt checkpoint header");
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError("corrupt checkpoint header");
  }
  check_header(j);
  try {
    auto featurizer = Featurizer::from_json(j.at("featurizer"));
    LabelSet labels(j.at("labels").get<std::vector<std::string>>());
    const auto hash_dim = j.at("hash_dim").get<std::size_t>();
    const auto hidden = j.at("hidden").get<std::size_t>();
    const auto k = j.at("num_labels").get<std::size_t>();
    const auto num_heads = j.at("num_heads").get<std::size_t>();
    auto encoder = read_doubles(in, hash_dim * hidden);
    auto bias = read_doubles(in, hidden);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> heads;
    for (std::size_t h = 0; h < num_heads; ++h) {
      auto w = read_doubles(in, hidden * k);
      auto b = read_doubles(in, k);
      heads.emplace_back(std::move(w), std::move(b));
    }
    auto params = ModelAccess::make(hash_dim, hidden, k, j.at("drop_rate").get<double>(),
                                    j.at("encoder_scale").get<double>(), std::move(encoder),
                                    std::move(bias), std::move(heads));
    check_sizes(params, labels, featurizer);
    return {std::move(featurizer), std::move(labels), std::move(params)};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
  }
}

}  // namespace noisebench

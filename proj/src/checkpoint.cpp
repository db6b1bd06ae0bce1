#include "glance/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "glance/errors.hpp"

namespace glance {

using nlohmann::json;

json layer_to_json(const DenseLayer& layer) {
  const auto w = layer.weight.values();
  return json{{"rows", layer.weight.rows()},
              {"cols", layer.weight.cols()},
              {"w", std::vector<double>(w.begin(), w.end())},
              {"b", layer.bias},
              {"act", layer.act == Activation::relu ? "relu" : "id"}};
}

DenseLayer layer_from_json(const json& j) {
  try {
    DenseLayer layer;
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    layer.weight = Matrix(rows, cols, j.at("w").get<std::vector<double>>());
    layer.bias = j.at("b").get<std::vector<double>>();
    const auto act = j.at("act").get<std::string>();
    if (act == "relu") {
      layer.act = Activation::relu;
    } else if (act == "id") {
      layer.act = Activation::identity;
    } else {
      throw ConfigError("unknown activation '" + act + "'");
    }
    return layer;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint layer: ") + e.what());
  }
}

json mlp_to_json(const MlpModel& model, std::string_view kind, const json& header) {
  json j = header;
  j["schema"] = kCheckpointSchema;
  j["kind"] = std::string(kind);
  json layers = json::array();
  for (const auto& layer : model.layers()) layers.push_back(layer_to_json(layer));
  j["layers"] = std::move(layers);
  return j;
}

MlpModel mlp_from_json(const json& j, std::string_view expected_kind) {
  if (j.value("schema", 0) != kCheckpointSchema) throw ConfigError("unsupported checkpoint schema");
  if (j.value("kind", std::string()) != expected_kind) {
    throw ConfigError("checkpoint kind '" + j.value("kind", std::string()) + "' != expected '" +
                      std::string(expected_kind) + "'");
  }
  std::vector<DenseLayer> layers;
  for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
  return MlpModel(std::move(layers));
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing artifact " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string canonical_dump(const json& j) { return j.dump(); }

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << canonical_dump(j) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace glance

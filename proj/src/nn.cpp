#include "uavnet/nn.hpp"

#include <fstream>
#include <type_traits>

namespace uavnet::nn {

namespace {

constexpr int kCheckpointVersion = 1;

template <class T>
const char* scalar_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

}  // namespace

template <class T>
nlohmann::json to_json(const Mlp<T>& net) {
  nlohmann::json j;
  j["format"] = "uavnet-mlp";
  j["version"] = kCheckpointVersion;
  j["scalar"] = scalar_name<T>();
  j["dims"] = net.dims();
  j["output"] = net.output_activation() == Activation::tanh ? "tanh" : "identity";
  // float -> double is exact and the writer emits round-trip decimal forms.
  std::vector<double> params;
  for (T v : net.flat_params()) params.push_back(static_cast<double>(v));
  j["params"] = std::move(params);
  return j;
}

template <class T>
Mlp<T> mlp_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "uavnet-mlp") throw std::runtime_error("checkpoint: not an MLP checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + j.value("version", nlohmann::json()).dump());
  if (j.value("scalar", "") != scalar_name<T>())
    throw std::runtime_error("checkpoint: scalar type mismatch (file has " + j.value("scalar", std::string("?")) + ")");
  const std::string out = j.at("output").get<std::string>();
  if (out != "tanh" && out != "identity") throw std::runtime_error("checkpoint: unknown output activation " + out);
  Mlp<T> net(j.at("dims").get<std::vector<int>>(), out == "tanh" ? Activation::tanh : Activation::identity);
  const auto raw = j.at("params").get<std::vector<double>>();
  std::vector<T> params(raw.begin(), raw.end());
  net.set_flat_params(params);
  return net;
}

template <class T>
void save_checkpoint(const Mlp<T>& net, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  f << to_json(net).dump() << '\n';
  if (!f.flush()) throw std::runtime_error("checkpoint: write to " + path.string() + " failed");
}

template <class T>
Mlp<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: " + path.string() + ": " + e.what());
  }
  return mlp_from_json<T>(j);
}

template nlohmann::json to_json(const Mlp<float>&);
template nlohmann::json to_json(const Mlp<double>&);
template Mlp<float> mlp_from_json<float>(const nlohmann::json&);
template Mlp<double> mlp_from_json<double>(const nlohmann::json&);
template void save_checkpoint(const Mlp<float>&, const std::filesystem::path&);
template void save_checkpoint(const Mlp<double>&, const std::filesystem::path&);
template Mlp<float> load_checkpoint<float>(const std::filesystem::path&);
template Mlp<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace uavnet::nn

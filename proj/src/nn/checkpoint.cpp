#include "metricopt/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "metricopt/error.hpp"

namespace metricopt {

namespace {

constexpr const char* kFormat = "metricopt-mlp";
constexpr int kVersion = 1;

const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "leaky_relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw FormatError("checkpoint: unknown activation '" + s + "'");
}

const char* output_name(OutputActivation a) {
  return a == OutputActivation::identity ? "identity" : "sigmoid";
}

OutputActivation parse_output(const std::string& s) {
  if (s == "identity") return OutputActivation::identity;
  if (s == "sigmoid") return OutputActivation::sigmoid;
  throw FormatError("checkpoint: unknown output activation '" + s + "'");
}

}  // namespace

std::string checkpoint_to_string(const ModelWeights& weights) {
  const MLPSpec& spec = weights.spec();
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["spec"] = {
      {"layer_sizes", spec.layer_sizes},
      {"activation", activation_name(spec.activation)},
      {"leaky_slope", spec.leaky_slope},
      {"batchnorm", spec.batchnorm},
      {"output_activation", output_name(spec.output_activation)},
  };
  j["params"] = std::vector<double>(weights.params().begin(), weights.params().end());
  j["running"] = std::vector<double>(weights.running().begin(), weights.running().end());
  return j.dump();
}

ModelWeights checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
    throw FormatError("checkpoint: unrecognized format header");
  }
  try {
    const auto& s = j.at("spec");
    MLPSpec spec;
    spec.layer_sizes = s.at("layer_sizes").get<std::vector<std::size_t>>();
    spec.activation = parse_activation(s.at("activation").get<std::string>());
    spec.leaky_slope = s.at("leaky_slope").get<double>();
    spec.batchnorm = s.at("batchnorm").get<std::vector<bool>>();
    spec.output_activation = parse_output(s.at("output_activation").get<std::string>());
    ModelWeights w(spec);
    const auto params = j.at("params").get<std::vector<double>>();
    const auto running = j.at("running").get<std::vector<double>>();
    if (params.size() != w.params().size() || running.size() != w.running().size()) {
      throw FormatError("checkpoint: parameter count does not match spec");
    }
    std::copy(params.begin(), params.end(), w.params().begin());
    std::copy(running.begin(), running.end(), w.running().begin());
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(weights) << '\n';
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace metricopt

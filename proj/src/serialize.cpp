#include "carefl/serialize.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carefl/error.hpp"

namespace carefl {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "carefl-flow";
constexpr int kVersion = 1;

json net_to_json(const ConditionerNet& net) {
  json j;
  j["dims"] = net.layer_dims();
  json w = json::array();
  json b = json::array();
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    auto ws = net.weights(l);
    auto bs = net.biases(l);
    w.push_back(std::vector<double>(ws.begin(), ws.end()));
    b.push_back(std::vector<double>(bs.begin(), bs.end()));
  }
  j["weights"] = std::move(w);
  j["biases"] = std::move(b);
  return j;
}

ConditionerNet net_from_json(const json& j, Activation act) {
  ConditionerNet net(j.at("dims").get<std::vector<std::size_t>>(), act);
  const auto& w = j.at("weights");
  const auto& b = j.at("biases");
  if (w.size() != net.n_layers() || b.size() != net.n_layers()) {
    throw ParseError("conditioner layer count mismatch", 0);
  }
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    auto wv = w[l].get<std::vector<double>>();
    auto bv = b[l].get<std::vector<double>>();
    auto ws = net.weights(l);
    auto bs = net.biases(l);
    if (wv.size() != ws.size() || bv.size() != bs.size()) {
      throw ParseError("conditioner parameter shape mismatch", 0);
    }
    std::copy(wv.begin(), wv.end(), ws.begin());
    std::copy(bv.begin(), bv.end(), bs.begin());
  }
  return net;
}

}  // namespace

std::string model_to_json(const FlowModel& model, int indent) {
  model.check_ready();
  if (!model.trainable()) throw StateError("models with fixed conditioners cannot be serialized");
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dim"] = model.dim();
  j["groups"] = model.layout().blocks;
  j["ordering"] = model.ordering().ranks();
  const auto& arch = model.architecture();
  j["architecture"] = {{"n_layers", arch.n_layers},
                       {"hidden_dims", arch.hidden_dims},
                       {"activation", activation_name(arch.activation.kind)},
                       {"slope", arch.activation.slope}};
  j["base"] = base_name(model.base().kind);
  j["additive"] = model.additive();
  if (model.scaler()) {
    j["scaler"] = {{"mean", model.scaler()->mean}, {"scale", model.scaler()->scale}};
  } else {
    j["scaler"] = nullptr;
  }
  json layers = json::array();
  for (const auto& layer : model.layers()) {
    json blocks = json::array();
    for (const auto& b : layer.blocks) {
      json jb;
      jb["vars"] = b.vars;
      if (b.is_root()) {
        jb["s"] = b.s_const;
        jb["t"] = b.t_const;
      } else {
        jb["s_net"] = net_to_json(b.s_net);
        jb["t_net"] = net_to_json(b.t_net);
      }
      blocks.push_back(std::move(jb));
    }
    layers.push_back({{"groups", std::move(blocks)}});
  }
  j["layers"] = std::move(layers);
  return j.dump(indent);
}

FlowModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model JSON: ") + e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw ParseError("not a carefl model", 0);
    if (j.at("version").get<int>() != kVersion) throw ParseError("unsupported model version", 0);
    BlockLayout layout;
    layout.blocks = j.at("groups").get<std::vector<std::vector<std::size_t>>>();
    layout.validate();
    if (j.at("dim").get<std::size_t>() != layout.dim()) {
      throw ParseError("model dim does not match groups", 0);
    }
    if (j.at("ordering").get<std::vector<std::size_t>>() != layout.variable_ordering().ranks()) {
      throw ParseError("model ordering does not match groups", 0);
    }
    const auto& ja = j.at("architecture");
    FlowArchitecture arch;
    arch.n_layers = ja.at("n_layers").get<std::size_t>();
    arch.hidden_dims = ja.at("hidden_dims").get<std::vector<std::size_t>>();
    arch.activation.kind = parse_activation(ja.at("activation").get<std::string>());
    arch.activation.slope = ja.at("slope").get<double>();
    const BaseKind base = parse_base(j.at("base").get<std::string>());
    const bool additive = j.at("additive").get<bool>();
    std::optional<Scaler> scaler;
    if (!j.at("scaler").is_null()) {
      Scaler s;
      s.mean = j["scaler"].at("mean").get<std::vector<double>>();
      s.scale = j["scaler"].at("scale").get<std::vector<double>>();
      scaler = std::move(s);
    }
    std::vector<AffineLayer> layers;
    for (const auto& jl : j.at("layers")) {
      AffineLayer layer;
      std::size_t preceding = 0;
      for (const auto& jb : jl.at("groups")) {
        BlockTransform b;
        b.vars = jb.at("vars").get<std::vector<std::size_t>>();
        b.input_dim = preceding;
        if (b.is_root()) {
          b.s_const = jb.at("s").get<std::vector<double>>();
          b.t_const = jb.at("t").get<std::vector<double>>();
        } else {
          b.s_net = net_from_json(jb.at("s_net"), arch.activation);
          b.t_net = net_from_json(jb.at("t_net"), arch.activation);
        }
        preceding += b.vars.size();
        layer.blocks.push_back(std::move(b));
      }
      layers.push_back(std::move(layer));
    }
    if (layers.size() != arch.n_layers) throw ParseError("layer count mismatch", 0);
    return FlowModel::assemble(std::move(layout), std::move(arch), base, additive,
                               std::move(layers), std::move(scaler));
  } catch (const json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what(), 0);
  } catch (const StateError& e) {
    throw ParseError(std::string("model JSON: ") + e.what(), 0);
  }
}

void save_model(const FlowModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << model_to_json(model, 1) << '\n';
}

FlowModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace carefl

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pwlsi/errors.hpp"
#include "pwlsi/vae.hpp"

namespace pwlsi {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "pwl-vae-v1";

json shape_json(const Shape& s) { return json::array({s.channels, s.height, s.width}); }

Shape shape_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected [channels, height, width]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json layer_json(const Layer& l, const char* role) {
  json j;
  j["role"] = role;
  j["kind"] = to_string(l.kind);
  j["in_shape"] = shape_json(l.in);
  j["out_shape"] = shape_json(l.out);
  json weights = json::array();
  json bias = json::array();
  json shape = json::array();
  if (l.kind == LayerKind::Dense) {
    shape = {l.weight.rows(), l.weight.cols()};
  } else if (l.kind == LayerKind::Conv2d) {
    shape = {l.out.channels, l.in.channels, l.kernel, l.kernel};
    j["padding"] = l.padding;
    j["stride"] = l.stride;
  } else if (l.kind == LayerKind::MaxPool) {
    j["window"] = l.window;
  } else if (l.kind == LayerKind::Upsample) {
    j["factor"] = l.factor;
  }
  if (l.has_params()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) weights.push_back(l.weight(r, c));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) bias.push_back(l.bias[i]);
  }
  j["shape"] = shape;
  j["weights"] = weights;
  j["bias"] = bias;
  return j;
}

Layer layer_from(const json& j, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  Layer l;
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  l.in = shape_from(j.at("in_shape"), where + " in_shape");
  l.out = shape_from(j.at("out_shape"), where + " out_shape");
  if (l.has_params()) {
    const auto& shape = j.at("shape");
    Eigen::Index rows = 0, cols = 0;
    if (l.kind == LayerKind::Dense) {
      if (shape.size() != 2) throw ParseError(where + ": dense shape must be [out, in]");
      rows = shape[0].get<Eigen::Index>();
      cols = shape[1].get<Eigen::Index>();
      if (rows != l.out.size() || cols != l.in.size()) throw ParseError(where + ": dense shape disagrees with in/out");
    } else {
      if (shape.size() != 4 || shape[2] != shape[3]) throw ParseError(where + ": conv2d shape must be [out, in, k, k]");
      l.kernel = shape[2].get<int>();
      l.padding = j.at("padding").get<int>();
      l.stride = j.value("stride", 1);
      rows = shape[0].get<Eigen::Index>();
      cols = shape[1].get<Eigen::Index>() * l.kernel * l.kernel;
      if (l.conv_geometry().out() != l.out || rows != l.out.channels || shape[1].get<int>() != l.in.channels)
        throw ParseError(where + ": conv2d shape disagrees with in/out");
    }
    const auto& w = j.at("weights");
    const auto& b = j.at("bias");
    if (static_cast<Eigen::Index>(w.size()) != rows * cols)
      throw ParseError(where + ": expected " + std::to_string(rows * cols) + " weights, got " +
                       std::to_string(w.size()));
    if (static_cast<Eigen::Index>(b.size()) != rows)
      throw ParseError(where + ": expected " + std::to_string(rows) + " biases, got " + std::to_string(b.size()));
    l.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)].get<double>();
    l.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) l.bias[i] = b[static_cast<std::size_t>(i)].get<double>();
  } else if (l.kind == LayerKind::MaxPool) {
    l.window = j.at("window").get<int>();
    if (pool_out_shape(l.in, l.window) != l.out) throw ParseError(where + ": maxpool shape mismatch");
  } else if (l.kind == LayerKind::Upsample) {
    l.factor = j.at("factor").get<int>();
    if (upsample_out_shape(l.in, l.factor) != l.out) throw ParseError(where + ": upsample shape mismatch");
  } else if (l.in != l.out) {
    throw ParseError(where + ": relu must preserve shape");
  }
  return l;
}

}  // namespace

std::string weights_to_json(const VaeModel& model) {
  json doc;
  doc["format"] = kFormat;
  doc["n"] = model.n;
  doc["m"] = model.m;
  doc["height"] = model.image.height;
  doc["width"] = model.image.width;
  json layers = json::array();
  for (const auto& l : model.encoder) layers.push_back(layer_json(l, "encoder"));
  layers.push_back(layer_json(model.mu_head, "mu"));
  layers.push_back(layer_json(model.logvar_head, "logvar"));
  for (const auto& l : model.decoder) layers.push_back(layer_json(l, "decoder"));
  doc["layers"] = layers;
  return doc.dump();
}

VaeModel weights_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("weight file: ") + e.what());
  }
  try {
    if (doc.at("format") != kFormat) throw ParseError("weight file: unsupported format, expected pwl-vae-v1");
    VaeModel model;
    model.n = doc.at("n").get<int>();
    model.m = doc.at("m").get<int>();
    model.image = {1, doc.at("height").get<int>(), doc.at("width").get<int>()};
    if (model.image.size() != model.n) throw ParseError("weight file: height*width != n");
    bool seen_mu = false, seen_lv = false;
    const auto& layers = doc.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Layer l = layer_from(layers[i], i);
      const std::string role = layers[i].at("role").get<std::string>();
      if (role == "encoder") {
        model.encoder.push_back(std::move(l));
      } else if (role == "mu") {
        model.mu_head = std::move(l);
        seen_mu = true;
      } else if (role == "logvar") {
        model.logvar_head = std::move(l);
        seen_lv = true;
      } else if (role == "decoder") {
        model.decoder.push_back(std::move(l));
      } else {
        throw ParseError("layer " + std::to_string(i) + ": unknown role '" + role + "'");
      }
    }
    if (!seen_mu || !seen_lv) throw ParseError("weight file: missing mu or logvar head");
    if (model.mu_head.kind != LayerKind::Dense || model.logvar_head.kind != LayerKind::Dense)
      throw ParseError("weight file: heads must be dense layers");
    Shape cur{1, model.image.height, model.image.width};
    for (const auto& l : model.encoder) {
      if (l.in.size() != cur.size()) throw ParseError("weight file: encoder layers do not chain");
      cur = l.out;
    }
    if (model.mu_head.in.size() != cur.size() || model.logvar_head.in.size() != cur.size() ||
        model.mu_head.out.size() != model.m || model.logvar_head.out.size() != model.m)
      throw ParseError("weight file: head shapes do not match encoder/latent");
    cur = flat_shape(model.m);
    for (const auto& l : model.decoder) {
      if (l.in.size() != cur.size()) throw ParseError("weight file: decoder layers do not chain");
      cur = l.out;
    }
    if (cur.size() != model.n) throw ParseError("weight file: decoder output does not match n");
    if (!model.all_finite()) throw ParseError("weight file: non-finite weights");
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("weight file: ") + e.what());
  }
}

void save_weights(const VaeModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out << weights_to_json(model) << '\n';
  if (!out) throw ParseError("failed writing " + path.string());
}

VaeModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return weights_from_json(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace pwlsi

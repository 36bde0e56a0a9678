#include "s2p/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "common/base64.hpp"
#include "common/error.hpp"
#include "common/io.hpp"

namespace nilm::s2p {

namespace {

constexpr int kFormatVersion = 1;

std::vector<std::uint8_t> pack_floats(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<double> unpack_floats(const std::vector<std::uint8_t>& bytes) {
  std::vector<double> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return values;
}

}  // namespace

double round_to_float(double v) noexcept { return static_cast<double>(static_cast<float>(v)); }

S2PModel::S2PModel(std::size_t window, std::vector<std::string> targets, S2PDims dims, std::uint64_t seed)
    : window_(window), targets_(std::move(targets)), dims_(dims) {
  if (window < 3 || window % 2 == 0) throw InvalidInput("window must be odd and >= 3");
  if (dims_.kernel < 1 || window < 2 * (dims_.kernel - 1) + 1)
    throw InvalidInput("window " + std::to_string(window) + " too short for kernel " + std::to_string(dims_.kernel));
  if (dims_.heads == 0 || dims_.d_model % dims_.heads != 0) throw InvalidInput("d_model must divide by heads");
  if (dims_.channels == 0 || dims_.ffn_hidden == 0 || dims_.depth == 0) throw InvalidInput("zero-sized layer");
  if (targets_.empty()) throw InvalidInput("model needs at least one target");

  const std::size_t F = features(), C = dims_.channels, D = dims_.d_model, K = dims_.kernel, H = dims_.ffn_hidden;
  const std::size_t T = targets_.size();
  auto xavier = [](std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  };
  std::uint64_t state = seed;
  for (std::size_t f = 0; f < F; ++f) {
    auto prefix = "enc" + std::to_string(f);
    add_param(prefix + ".conv1.w", {K, C}, xavier(K, K * C), state);
    add_param(prefix + ".conv1.b", {C}, 0, state);
    add_param(prefix + ".conv2.w", {K * C, C}, xavier(K * C, K * C), state);
    add_param(prefix + ".conv2.b", {C}, 0, state);
  }
  add_param("proj.w", {F * C, D}, xavier(F * C, D), state);
  add_param("proj.b", {D}, 0, state);
  add_param("pos", {window_, D}, xavier(window_, D), state);
  for (std::size_t d = 0; d < dims_.depth; ++d) {
    auto prefix = "block" + std::to_string(d);
    for (const char* m : {"q", "k", "v", "o"}) {
      add_param(prefix + ".w" + m, {D, D}, xavier(D, D), state);
      add_param(prefix + ".b" + m, {D}, 0, state);
    }
    add_param(prefix + ".ln1.g", {D}, 0, state);
    add_param(prefix + ".ln1.b", {D}, 0, state);
    add_param(prefix + ".ffn1.w", {D, H}, xavier(D, H), state);
    add_param(prefix + ".ffn1.b", {H}, 0, state);
    add_param(prefix + ".ffn2.w", {H, D}, xavier(H, D), state);
    add_param(prefix + ".ffn2.b", {D}, 0, state);
    add_param(prefix + ".ln2.g", {D}, 0, state);
    add_param(prefix + ".ln2.b", {D}, 0, state);
  }
  // Zero readout: an untrained model answers exactly 0.5 for every target.
  add_param("out.w", {D, T}, 0, state);
  add_param("out.b", {T}, 0, state);

  for (auto& p : params_)
    if (p.name.ends_with(".ln1.g") || p.name.ends_with(".ln2.g")) std::fill(p.var->value.data.begin(), p.var->value.data.end(), 1.0);
}

void S2PModel::add_param(std::string name, ad::Shape shape, double limit, std::uint64_t& state) {
  ad::Tensor t(std::move(shape));
  if (limit > 0) {
    std::mt19937_64 rng(state);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : t.data) v = round_to_float(u(rng));
    state = rng();
  }
  params_.push_back({std::move(name), ad::parameter(std::move(t))});
}

std::size_t S2PModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

void S2PModel::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

void S2PModel::zero_parameters() {
  for (auto& p : params_) std::fill(p.var->value.data.begin(), p.var->value.data.end(), 0.0);
}

ad::Var S2PModel::forward(ad::Graph& g, std::span<const double> inputs, std::size_t batch,
                          std::vector<std::vector<double>>* attention_probs) const {
  const std::size_t W = window_, F = features(), K = dims_.kernel;
  if (batch == 0 || inputs.size() != batch * W * F)
    throw InvalidInput("input holds " + std::to_string(inputs.size()) + " values, expected batch*" +
                       std::to_string(W) + "*" + std::to_string(F));
  const std::size_t L1 = W - (K - 1);
  const std::size_t L2 = encoded_length();

  std::size_t cursor = 0;
  auto next = [&]() -> const ad::Var& { return param(cursor++); };

  std::vector<ad::Var> encoded;
  for (std::size_t f = 0; f < F; ++f) {
    ad::Tensor column({batch * W, 1});
    for (std::size_t i = 0; i < batch * W; ++i) column.data[i] = preprocess::normalize_value(inputs[i * F + f], f, norm);
    auto x = g.constant(std::move(column));
    const auto& w1 = next();
    const auto& b1 = next();
    auto h = g.relu(g.conv1d(x, w1, b1, batch, W, K));
    const auto& w2 = next();
    const auto& b2 = next();
    encoded.push_back(g.relu(g.conv1d(h, w2, b2, batch, L1, K)));
  }
  const auto& proj_w = next();
  const auto& proj_b = next();
  auto x = g.add_bias(g.matmul(g.concat_cols(encoded), proj_w), proj_b);
  x = g.add_positions(x, next(), batch, L2, K - 1);

  for (std::size_t d = 0; d < dims_.depth; ++d) {
    const auto& wq = next();
    const auto& bq = next();
    const auto& wk = next();
    const auto& bk = next();
    const auto& wv = next();
    const auto& bv = next();
    const auto& wo = next();
    const auto& bo = next();
    auto q = g.add_bias(g.matmul(x, wq), bq);
    auto k = g.add_bias(g.matmul(x, wk), bk);
    auto v = g.add_bias(g.matmul(x, wv), bv);
    std::vector<double> probs;
    auto a = g.attention(q, k, v, batch, L2, dims_.heads, attention_probs ? &probs : nullptr);
    if (attention_probs) attention_probs->push_back(std::move(probs));
    a = g.add_bias(g.matmul(a, wo), bo);
    const auto& ln1_g = next();
    const auto& ln1_b = next();
    auto x1 = g.layer_norm(g.add(x, a), ln1_g, ln1_b);
    const auto& f1w = next();
    const auto& f1b = next();
    const auto& f2w = next();
    const auto& f2b = next();
    auto ff = g.add_bias(g.matmul(g.relu(g.add_bias(g.matmul(x1, f1w), f1b)), f2w), f2b);
    const auto& ln2_g = next();
    const auto& ln2_b = next();
    x = g.layer_norm(g.add(x1, ff), ln2_g, ln2_b);
  }
  auto mid = g.gather_rows(x, batch, L2, readout_index());
  const auto& out_w = next();
  const auto& out_b = next();
  return g.sigmoid(g.add_bias(g.matmul(mid, out_w), out_b));
}

std::vector<double> S2PModel::predict(std::span<const double> inputs, std::size_t batch) const {
  ad::Graph g;
  auto probs = forward(g, inputs, batch);
  return probs->value.data;
}

std::vector<double> S2PModel::predict(const std::vector<preprocess::WindowBatch>& windows) const {
  for (const auto& w : windows)
    if (w.length != window_) throw InvalidInput("window length " + std::to_string(w.length) + " != model window " + std::to_string(window_));
  auto flat = flatten_windows(windows);
  return predict(flat, windows.size());
}

std::vector<double> flatten_windows(const std::vector<preprocess::WindowBatch>& windows) {
  std::vector<double> flat;
  for (const auto& w : windows) flat.insert(flat.end(), w.values.begin(), w.values.end());
  return flat;
}

nlohmann::json to_json(const S2PModel& model) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.parameters())
    params[p.name] = {{"shape", p.var->value.shape}, {"data", base64_encode(pack_floats(p.var->value.data))}};
  const auto& d = model.dims();
  return {{"kind", "s2p"},
          {"version", kFormatVersion},
          {"model_version", model.version},
          {"W", model.window()},
          {"F", model.features()},
          {"targets", model.targets()},
          {"dims",
           {{"kernel", d.kernel},
            {"channels", d.channels},
            {"d_model", d.d_model},
            {"heads", d.heads},
            {"ffn_hidden", d.ffn_hidden},
            {"depth", d.depth}}},
          {"norm", {{"mean", model.norm.mean}, {"std", model.norm.stddev}}},
          {"params", params}};
}

S2PDims dims_from_json(const nlohmann::json& j) {
  S2PDims d;
  d.kernel = j.value("kernel", d.kernel);
  d.channels = j.value("channels", d.channels);
  d.d_model = j.value("d_model", d.d_model);
  d.heads = j.value("heads", d.heads);
  d.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
  d.depth = j.value("depth", d.depth);
  return d;
}

S2PModel from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string()) != "s2p") throw FormatError("not an s2p model file");
    if (j.at("version").get<int>() != kFormatVersion)
      throw FormatError("unsupported s2p format version " + j.at("version").dump());
    if (j.at("F").get<std::size_t>() != preprocess::kFeatureCount) throw FormatError("unsupported feature count");
    S2PModel model(j.at("W").get<std::size_t>(), j.at("targets").get<std::vector<std::string>>(),
                   dims_from_json(j.at("dims")));
    model.version = j.value("model_version", model.version);
    model.norm.mean = j.at("norm").at("mean").get<std::array<double, preprocess::kFeatureCount>>();
    model.norm.stddev = j.at("norm").at("std").get<std::array<double, preprocess::kFeatureCount>>();
    const auto& params = j.at("params");
    if (params.size() != model.parameters().size()) throw FormatError("parameter set does not match dims");
    for (auto& p : model.parameters()) {
      const auto& entry = params.at(p.name);
      if (entry.at("shape").get<ad::Shape>() != p.var->value.shape) throw FormatError("shape mismatch for " + p.name);
      auto values = unpack_floats(base64_decode(entry.at("data").get<std::string>()));
      if (values.size() != p.var->value.size()) throw FormatError("value count mismatch for " + p.name);
      for (double v : values)
        if (!std::isfinite(v)) throw FormatError("non-finite parameter in " + p.name);
      p.var->value.data = std::move(values);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("s2p model: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("s2p model: ") + e.what());
  }
}

void save(const S2PModel& model, const std::filesystem::path& path) { write_file(path, to_json(model).dump()); }

S2PModel load(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (text.empty()) throw FormatError(path.string() + ": empty s2p model file", 0);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": corrupt s2p model", e.byte);
  }
  return from_json(j);
}

}  // namespace nilm::s2p

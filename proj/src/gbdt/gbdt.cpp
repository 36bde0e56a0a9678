#include "gbdt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/io.hpp"

namespace nilm::gbdt {

namespace {

constexpr int kFormatVersion = 1;

double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

using SortedColumns = std::vector<std::vector<std::uint32_t>>;

SortedColumns presort(const FeatureMatrix& x) {
  SortedColumns sorted(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& idx = sorted[f];
    idx.resize(x.rows);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x.at(a, f) < x.at(b, f); });
  }
  return sorted;
}

struct SplitChoice {
  bool valid = false;
  std::size_t feature = 0;
  double threshold = 0;
  double gain = 0;
};

struct FrontierNode {
  int node = 0;
  double grad = 0;
  double hess = 0;
};

Tree grow_presorted(const FeatureMatrix& x, const SortedColumns& sorted, std::span<const double> grad,
                    std::span<const double> hess, const TrainParams& params) {
  const std::size_t n = x.rows;
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of_row(n, 0);

  std::vector<FrontierNode> frontier(1);
  for (std::size_t r = 0; r < n; ++r) {
    frontier[0].grad += grad[r];
    frontier[0].hess += hess[r];
  }

  for (std::size_t depth = 0; !frontier.empty(); ++depth) {
    std::vector<int> slot_of_node(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot_of_node[frontier[s].node] = static_cast<int>(s);

    std::vector<SplitChoice> best(frontier.size());
    if (depth < params.max_depth) {
      struct Accumulator {
        double grad = 0;
        double hess = 0;
        double last = 0;
        bool seen = false;
      };
      std::vector<Accumulator> acc(frontier.size());
      for (std::size_t f = 0; f < x.cols; ++f) {
        std::fill(acc.begin(), acc.end(), Accumulator{});
        for (auto r : sorted[f]) {
          int nd = node_of_row[r];
          if (nd < 0) continue;
          int s = slot_of_node[static_cast<std::size_t>(nd)];
          if (s < 0) continue;
          auto& a = acc[static_cast<std::size_t>(s)];
          double v = x.at(r, f);
          if (a.seen && v > a.last) {
            const auto& fr = frontier[static_cast<std::size_t>(s)];
            double gr = fr.grad - a.grad;
            double hr = fr.hess - a.hess;
            if (a.hess >= params.min_child_hessian && hr >= params.min_child_hessian) {
              double gain = split_gain(a.grad, a.hess, gr, hr, params.lambda, params.gamma);
              auto& b = best[static_cast<std::size_t>(s)];
              if (gain > b.gain) b = {true, f, split_threshold(a.last, v), gain};
            }
          }
          a.grad += grad[r];
          a.hess += hess[r];
          a.last = v;
          a.seen = true;
        }
      }
    }

    std::vector<FrontierNode> next;
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const auto& fr = frontier[s];
      auto& node = tree.nodes[static_cast<std::size_t>(fr.node)];
      if (!best[s].valid) {
        node.weight = leaf_weight(fr.grad, fr.hess, params.lambda);
        continue;
      }
      node.feature = static_cast<int>(best[s].feature);
      node.threshold = best[s].threshold;
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      next.push_back({node.left, 0, 0});
      next.push_back({node.right, 0, 0});
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
    }

    std::vector<int> slot_of_child(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < next.size(); ++s) slot_of_child[static_cast<std::size_t>(next[s].node)] = static_cast<int>(s);
    for (std::size_t r = 0; r < n; ++r) {
      int nd = node_of_row[r];
      if (nd < 0) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(nd)];
      if (node.is_leaf()) {
        node_of_row[r] = -1;
        continue;
      }
      int child = x.at(r, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left : node.right;
      node_of_row[r] = child;
      auto& fr = next[static_cast<std::size_t>(slot_of_child[static_cast<std::size_t>(child)])];
      fr.grad += grad[r];
      fr.hess += hess[r];
    }
    frontier = std::move(next);
  }
  return tree;
}

nlohmann::json node_to_json(const Tree& tree, std::size_t idx) {
  const auto& node = tree.nodes[idx];
  if (node.is_leaf()) return {{"w", node.weight}};
  return {{"f", node.feature},
          {"t", node.threshold},
          {"l", node_to_json(tree, static_cast<std::size_t>(node.left))},
          {"r", node_to_json(tree, static_cast<std::size_t>(node.right))}};
}

int node_from_json(const nlohmann::json& j, Tree& tree, std::size_t depth) {
  if (depth > 64) throw FormatError("tree nesting too deep");
  if (!j.is_object()) throw FormatError("tree node is not an object");
  int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("w")) {
    tree.nodes[static_cast<std::size_t>(idx)].weight = j.at("w").get<double>();
    return idx;
  }
  TreeNode node;
  node.feature = j.at("f").get<int>();
  node.threshold = j.at("t").get<double>();
  if (node.feature < 0 || !std::isfinite(node.threshold)) throw FormatError("invalid split node");
  node.left = node_from_json(j.at("l"), tree, depth + 1);
  node.right = node_from_json(j.at("r"), tree, depth + 1);
  tree.nodes[static_cast<std::size_t>(idx)] = node;
  return idx;
}

}  // namespace

void TrainParams::validate() const {
  if (n_trees < 1) throw InvalidInput("n_trees must be >= 1");
  if (!(lambda >= 0)) throw InvalidInput("lambda must be >= 0");
  if (!(gamma >= 0)) throw InvalidInput("gamma must be >= 0");
  if (!(learning_rate > 0)) throw InvalidInput("learning_rate must be > 0");
  if (!(min_child_hessian >= 0)) throw InvalidInput("min_child_hessian must be >= 0");
}

double Tree::predict(const double* x) const noexcept { return nodes[leaf_index(x)].weight; }

std::size_t Tree::leaf_index(const double* x) const noexcept {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[n.feature] < n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t Tree::depth() const noexcept {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::leaf_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double leaf_weight(double grad_sum, double hess_sum, double lambda) noexcept { return -grad_sum / (hess_sum + lambda); }

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma) noexcept {
  double g = g_left + g_right;
  double h = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - g * g / (h + lambda)) -
         gamma;
}

double split_threshold(double lo, double hi) noexcept {
  double mid = lo + (hi - lo) / 2;
  return (mid > lo && std::isfinite(mid)) ? mid : hi;
}

Tree grow_tree(const FeatureMatrix& x, std::span<const double> grad, std::span<const double> hess,
               const TrainParams& params) {
  if (x.rows == 0 || x.cols == 0) throw InvalidInput("empty feature matrix");
  if (grad.size() != x.rows || hess.size() != x.rows) throw InvalidInput("gradient length does not match rows");
  return grow_presorted(x, presort(x), grad, hess, params);
}

double TargetModel::margin(const double* x) const noexcept {
  double sum = 0;
  for (const auto& t : trees) sum += t.predict(x);
  return base_score + learning_rate * sum;
}

double TargetModel::probability(const double* x) const noexcept { return sigmoid(margin(x)); }

std::vector<std::string> GbdtModel::target_ids() const {
  std::vector<std::string> ids;
  for (const auto& t : targets) ids.push_back(t.appliance_id);
  return ids;
}

std::vector<double> GbdtModel::predict_proba(const preprocess::WindowBatch& window) const {
  if (window.length != schema.window || window.values.size() != schema.window * schema.features_per_step)
    throw InvalidInput("window of length " + std::to_string(window.length) + " does not match model window " +
                       std::to_string(schema.window));
  return predict_proba_features(window_features(window));
}

std::vector<double> GbdtModel::predict_proba_features(std::span<const double> features) const {
  if (features.size() != schema.feature_count)
    throw InvalidInput("feature vector has " + std::to_string(features.size()) + " values, model expects " +
                       std::to_string(schema.feature_count));
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(t.probability(features.data()));
  return out;
}

ApplianceStateVector GbdtModel::predict_states(const preprocess::WindowBatch& window, double cutoff) const {
  return states_from_probabilities(target_ids(), predict_proba(window), cutoff);
}

ApplianceStateVector states_from_probabilities(const std::vector<std::string>& ids, std::span<const double> probs,
                                               double cutoff) {
  ApplianceStateVector out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], probs[i] > cutoff});
  return out;
}

double logistic_loss(std::span<const double> margins, std::span<const std::uint8_t> labels) {
  double sum = 0;
  for (std::size_t i = 0; i < margins.size(); ++i) sum += softplus(margins[i]) - (labels[i] ? margins[i] : 0.0);
  return sum / static_cast<double>(margins.size());
}

namespace {

TargetModel train_presorted(const FeatureMatrix& x, const SortedColumns& sorted, std::span<const std::uint8_t> labels,
                            const TrainParams& params, std::string appliance_id, std::vector<double>* loss_history) {
  const std::size_t n = x.rows;
  TargetModel model;
  model.appliance_id = std::move(appliance_id);
  model.learning_rate = params.learning_rate;

  auto positives = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
  double rate = std::clamp(positives / static_cast<double>(n), 1e-6, 1 - 1e-6);
  model.base_score = std::log(rate / (1 - rate));

  std::vector<double> margins(n, model.base_score);
  if (loss_history) loss_history->assign(1, logistic_loss(margins, labels));
  if (positives == 0 || positives == static_cast<double>(n)) return model;

  std::vector<double> grad(n), hess(n);
  for (std::size_t round = 0; round < params.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = sigmoid(margins[i]);
      grad[i] = p - (labels[i] ? 1.0 : 0.0);
      hess[i] = p * (1 - p);
    }
    Tree tree = grow_presorted(x, sorted, grad, hess, params);
    for (std::size_t i = 0; i < n; ++i) margins[i] += params.learning_rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
    if (loss_history) loss_history->push_back(logistic_loss(margins, labels));
  }
  return model;
}

}  // namespace

TargetModel train_target(const FeatureMatrix& x, std::span<const std::uint8_t> labels, const TrainParams& params,
                         std::string appliance_id, std::vector<double>* loss_history) {
  params.validate();
  if (x.rows == 0 || x.cols == 0) throw InvalidInput("empty feature matrix");
  if (labels.size() != x.rows) throw InvalidInput("label count does not match feature rows");
  return train_presorted(x, presort(x), labels, params, std::move(appliance_id), loss_history);
}

GbdtModel train(const FeatureMatrix& x, const std::vector<std::vector<std::uint8_t>>& labels,
                const std::vector<std::string>& target_ids, const TrainParams& params, std::size_t window) {
  params.validate();
  if (x.rows == 0 || x.cols == 0) throw InvalidInput("empty feature matrix");
  if (labels.size() != target_ids.size()) throw InvalidInput("one label vector per target required");
  for (const auto& l : labels)
    if (l.size() != x.rows) throw InvalidInput("label count does not match feature rows");

  GbdtModel model;
  model.schema.window = window;
  model.schema.features_per_step = preprocess::kFeatureCount;
  model.schema.feature_count = x.cols;
  auto sorted = presort(x);
  for (std::size_t t = 0; t < target_ids.size(); ++t)
    model.targets.push_back(train_presorted(x, sorted, labels[t], params, target_ids[t], nullptr));
  return model;
}

nlohmann::json to_json(const GbdtModel& model) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : model.targets) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : t.trees) trees.push_back(node_to_json(tree, 0));
    targets.push_back({{"appliance_id", t.appliance_id},
                       {"base_score", t.base_score},
                       {"learning_rate", t.learning_rate},
                       {"trees", trees}});
  }
  return {{"kind", "gbdt"},
          {"version", kFormatVersion},
          {"model_version", model.version},
          {"schema",
           {{"window", model.schema.window},
            {"features_per_step", model.schema.features_per_step},
            {"feature_count", model.schema.feature_count}}},
          {"targets", targets}};
}

GbdtModel from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string()) != "gbdt") throw FormatError("not a gbdt model file");
    if (j.at("version").get<int>() != kFormatVersion)
      throw FormatError("unsupported gbdt format version " + j.at("version").dump());
    GbdtModel model;
    model.version = j.value("model_version", model.version);
    const auto& s = j.at("schema");
    model.schema.window = s.at("window").get<std::size_t>();
    model.schema.features_per_step = s.at("features_per_step").get<std::size_t>();
    model.schema.feature_count = s.at("feature_count").get<std::size_t>();
    for (const auto& t : j.at("targets")) {
      TargetModel target;
      target.appliance_id = t.at("appliance_id").get<std::string>();
      target.base_score = t.at("base_score").get<double>();
      target.learning_rate = t.at("learning_rate").get<double>();
      for (const auto& tree_json : t.at("trees")) {
        Tree tree;
        node_from_json(tree_json, tree, 0);
        for (const auto& node : tree.nodes)
          if (!node.is_leaf() && static_cast<std::size_t>(node.feature) >= model.schema.feature_count)
            throw FormatError("split feature out of range");
        target.trees.push_back(std::move(tree));
      }
      model.targets.push_back(std::move(target));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gbdt model: ") + e.what());
  }
}

void save(const GbdtModel& model, const std::filesystem::path& path) { write_file(path, to_json(model).dump()); }

GbdtModel load(const std::filesystem::path& path) {
  auto text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": corrupt gbdt model", e.byte);
  }
  return from_json(j);
}

TrainParams params_from_json(const nlohmann::json& j) {
  TrainParams p;
  p.n_trees = j.value("n_trees", p.n_trees);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.lambda = j.value("lambda", p.lambda);
  p.gamma = j.value("gamma", p.gamma);
  p.min_child_hessian = j.value("min_child_hessian", p.min_child_hessian);
  p.validate();
  return p;
}

}  // namespace nilm::gbdt

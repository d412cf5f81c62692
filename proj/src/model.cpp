#include "multihop/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace multihop {

std::string to_string(ConvKind c) { return c == ConvKind::chebyshev ? "chebyshev" : "first-order"; }

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::awc: return "awc";
    case Fusion::sum: return "sum";
    case Fusion::max: return "max";
  }
  return "awc";
}

ConvKind conv_from_string(const std::string& s) {
  if (s == "first-order") return ConvKind::first_order;
  if (s == "chebyshev") return ConvKind::chebyshev;
  throw std::invalid_argument("unknown conv '" + s + "' (expected first-order or chebyshev)");
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "awc") return Fusion::awc;
  if (s == "sum") return Fusion::sum;
  if (s == "max") return Fusion::max;
  throw std::invalid_argument("unknown fusion '" + s + "' (expected awc, sum or max)");
}

void ModelConfig::validate(int classes) const {
  if (branches < 1) throw std::invalid_argument("model needs at least one branch");
  if (conv == ConvKind::chebyshev && cheb_order < 1) {
    throw std::invalid_argument("chebyshev order must be >= 1");
  }
  if (layer_widths.empty()) throw std::invalid_argument("layer_widths is empty");
  for (int w : layer_widths) {
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  }
  if (classes >= 0 && layer_widths.back() != classes) {
    throw std::invalid_argument("last layer width " + std::to_string(layer_widths.back()) +
                                " != class count " + std::to_string(classes));
  }
  check_dropout_rate(dropout_rate);
  if (!(l2_weight >= 0.0)) throw std::invalid_argument("l2_weight must be non-negative");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"branches", c.branches},
                     {"conv", to_string(c.conv)},
                     {"cheb_order", c.cheb_order},
                     {"layer_widths", c.layer_widths},
                     {"fusion", to_string(c.fusion)},
                     {"dropout_rate", c.dropout_rate},
                     {"l2_weight", c.l2_weight}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.branches = j.value("branches", c.branches);
  if (j.contains("conv")) c.conv = conv_from_string(j.at("conv").get<std::string>());
  c.cheb_order = j.value("cheb_order", c.cheb_order);
  if (j.contains("layer_widths")) c.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  if (j.contains("fusion")) c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.l2_weight = j.value("l2_weight", c.l2_weight);
}

PropagationMatrix branch_propagation(const WeightedGraph& hop_graph, ConvKind conv) {
  if (conv == ConvKind::first_order) return sym_renormalize(hop_graph);
  return scaled_laplacian(hop_graph, estimate_lambda_max(hop_graph).value);
}

template <class T>
MultiHopModel<T> MultiHopModel<T>::build(const ModelConfig& cfg, const HopGraphSet& hops,
                                         int in_dim, Rng& rng) {
  if (hops.max_hop() != cfg.branches) {
    throw std::invalid_argument("model has " + std::to_string(cfg.branches) +
                                " branches but the hop set has " + std::to_string(hops.max_hop()) +
                                " graphs");
  }
  std::vector<PropagationMatrix> props;
  for (int k = 1; k <= hops.max_hop(); ++k) props.push_back(branch_propagation(hops.hop(k), cfg.conv));
  return build(cfg, props, in_dim, rng);
}

template <class T>
MultiHopModel<T> MultiHopModel<T>::build(const ModelConfig& cfg,
                                         std::span<const PropagationMatrix> props, int in_dim,
                                         Rng& rng) {
  cfg.validate();
  if (static_cast<int>(props.size()) != cfg.branches) {
    throw std::invalid_argument("model has " + std::to_string(cfg.branches) + " branches but " +
                                std::to_string(props.size()) + " propagation matrices were given");
  }
  if (in_dim < 1) throw std::invalid_argument("input dimension must be positive");
  const auto want = cfg.conv == ConvKind::first_order ? PropagationKind::renormalized
                                                      : PropagationKind::scaled_laplacian;
  MultiHopModel m;
  m.cfg_ = cfg;
  m.in_dim_ = in_dim;
  const std::size_t orders = cfg.conv == ConvKind::first_order ? 1 : static_cast<std::size_t>(cfg.cheb_order) + 1;
  for (const auto& p : props) {
    if (p.kind != want) throw std::invalid_argument("propagation kind does not match conv type");
    if (!m.branches_.empty() && p.n != props[0].n) throw ShapeError("branch graphs differ in size");
    Branch b;
    b.prop = p.template as<T>();
    int fan_in = in_dim;
    for (int width : cfg.layer_widths) {
      std::vector<Tensor2<T>> layer;
      for (std::size_t k = 0; k < orders; ++k) {
        layer.emplace_back(glorot_uniform<T>(fan_in, width, rng), true);
      }
      b.layers.push_back(std::move(layer));
      fan_in = width;
    }
    m.branches_.push_back(std::move(b));
  }
  if (cfg.fusion == Fusion::awc) {
    m.alpha_ = Tensor2<T>(glorot_uniform<T>(cfg.layer_widths.back(), 1, rng), true);
  }
  return m;
}

template <class T>
std::vector<Tensor2<T>*> MultiHopModel<T>::parameters() {
  auto out = conv_parameters();
  if (cfg_.fusion == Fusion::awc) out.push_back(&alpha_);
  return out;
}

template <class T>
std::vector<const Tensor2<T>*> MultiHopModel<T>::parameters() const {
  std::vector<const Tensor2<T>*> out;
  for (const auto& b : branches_)
    for (const auto& layer : b.layers)
      for (const auto& t : layer) out.push_back(&t);
  if (cfg_.fusion == Fusion::awc) out.push_back(&alpha_);
  return out;
}

template <class T>
std::vector<Tensor2<T>*> MultiHopModel<T>::conv_parameters() {
  std::vector<Tensor2<T>*> out;
  for (auto& b : branches_)
    for (auto& layer : b.layers)
      for (auto& t : layer) out.push_back(&t);
  return out;
}

template <class T>
std::vector<std::string> MultiHopModel<T>::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < branches_.size(); ++b)
    for (std::size_t l = 0; l < branches_[b].layers.size(); ++l)
      for (std::size_t k = 0; k < branches_[b].layers[l].size(); ++k)
        out.push_back("branch" + std::to_string(b) + ".layer" + std::to_string(l) + ".order" +
                      std::to_string(k));
  if (cfg_.fusion == Fusion::awc) out.emplace_back("awc.alpha");
  return out;
}

namespace {

template <class T>
std::vector<Matrix<T>> values_of(const std::vector<Tensor2<T>>& layer) {
  std::vector<Matrix<T>> out;
  out.reserve(layer.size());
  for (const auto& t : layer) out.push_back(t.value);
  return out;
}

}  // namespace

template <class T>
Matrix<T> MultiHopModel<T>::conv_forward(const Branch& b, std::size_t layer, const auto& h) const {
  const auto& params = b.layers[layer];
  if (cfg_.conv == ConvKind::first_order) return gcn_layer_forward<T>(b.prop, h, params[0].value);
  const auto thetas = values_of(params);
  return cheb_layer_forward<T>(b.prop, h, std::span<const Matrix<T>>(thetas));
}

template <class T>
void MultiHopModel<T>::conv_backward(Branch& b, std::size_t layer, const auto& h,
                                     const Matrix<T>& grad_out, Matrix<T>* grad_h) {
  auto& params = b.layers[layer];
  if (cfg_.conv == ConvKind::first_order) {
    gcn_layer_backward<T>(b.prop, h, params[0].value, grad_out, params[0].grad_buffer(), grad_h);
    return;
  }
  const auto thetas = values_of(params);
  std::vector<Matrix<T>> grads;
  grads.reserve(params.size());
  for (auto& p : params) grads.push_back(std::move(p.grad_buffer()));
  cheb_layer_backward<T>(b.prop, h, std::span<const Matrix<T>>(thetas), grad_out,
                         std::span<Matrix<T>>(grads), grad_h);
  for (std::size_t k = 0; k < params.size(); ++k) params[k].grad = std::move(grads[k]);
}

template <class T>
typename MultiHopModel<T>::Trace MultiHopModel<T>::run(const SparseMatrix<T>& features,
                                                       bool training, Rng& rng) const {
  if (branches_.empty()) throw std::logic_error("model has not been built");
  if (features.rows() != branches_[0].prop.rows() || features.cols() != in_dim_) {
    throw ShapeError("features " + detail::shape(features.rows(), features.cols()) +
                     " do not match model (" + std::to_string(branches_[0].prop.rows()) +
                     " nodes, input dim " + std::to_string(in_dim_) + ")");
  }
  const double rate = cfg_.dropout_rate;
  const std::size_t L = cfg_.layer_widths.size();
  Trace tr;
  tr.branches.resize(branches_.size());
  for (std::size_t bi = 0; bi < branches_.size(); ++bi) {
    const Branch& b = branches_[bi];
    BranchTrace& bt = tr.branches[bi];
    bt.input = dropout<T>(features, rate, rng, training);
    Matrix<T> z = conv_forward(b, 0, bt.input);
    for (std::size_t l = 1; l < L; ++l) {
      bt.activated.push_back(elu<T>(z));
      Matrix<T> mask;
      bt.hidden_in.push_back(dropout<T>(bt.activated.back(), rate, rng, training, &mask));
      bt.masks.push_back(std::move(mask));
      z = conv_forward(b, l, bt.hidden_in.back());
    }
    bt.output = std::move(z);
    tr.outputs.push_back(bt.output);
  }

  const std::span<const Matrix<T>> outs(tr.outputs);
  switch (cfg_.fusion) {
    case Fusion::awc:
      tr.awc = awc_forward<T>(outs, alpha_.value);
      tr.logits = tr.awc->fused;
      break;
    case Fusion::sum:
      tr.logits = sum_fusion<T>(outs);
      break;
    case Fusion::max:
      tr.logits = max_fusion<T>(outs, &tr.argmax);
      break;
  }
  return tr;
}

template <class T>
ForwardResult<T> MultiHopModel<T>::forward(const SparseMatrix<T>& features, bool training,
                                           Rng& rng) const {
  Trace tr = run(features, training, rng);
  ForwardResult<T> r;
  r.logits = std::move(tr.logits);
  if (tr.awc) r.weights = std::move(tr.awc->weights);
  r.branch_outputs = std::move(tr.outputs);
  return r;
}

template <class T>
LossBreakdown MultiHopModel<T>::loss_and_grads(const SparseMatrix<T>& features,
                                               std::span<const int> labels,
                                               std::span<const NodeId> train_mask, Rng& rng) {
  return loss_and_grads(features, labels, train_mask, rng, true);
}

template <class T>
LossBreakdown MultiHopModel<T>::loss_and_grads(const SparseMatrix<T>& features,
                                               std::span<const int> labels,
                                               std::span<const NodeId> train_mask, Rng& rng,
                                               bool training) {
  Trace tr = run(features, training, rng);
  auto xent = masked_softmax_xent<T>(tr.logits, labels, train_mask);

  for (auto* p : parameters()) p->grad_buffer().setZero();

  const std::size_t nb = branches_.size();
  std::vector<Matrix<T>> grad_out(nb);
  switch (cfg_.fusion) {
    case Fusion::awc: {
      for (auto& g : grad_out) g = Matrix<T>::Zero(xent.grad.rows(), xent.grad.cols());
      awc_backward<T>(std::span<const Matrix<T>>(tr.outputs), alpha_.value, *tr.awc, xent.grad,
                      std::span<Matrix<T>>(grad_out), alpha_.grad_buffer());
      break;
    }
    case Fusion::sum:
      for (auto& g : grad_out) g = xent.grad;
      break;
    case Fusion::max:
      for (std::size_t bi = 0; bi < nb; ++bi) {
        grad_out[bi] = Matrix<T>::Zero(xent.grad.rows(), xent.grad.cols());
        for (Eigen::Index i = 0; i < xent.grad.size(); ++i) {
          if (tr.argmax.data()[i] == static_cast<int>(bi)) grad_out[bi].data()[i] = xent.grad.data()[i];
        }
      }
      break;
  }

  const std::size_t L = cfg_.layer_widths.size();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    Branch& b = branches_[bi];
    BranchTrace& bt = tr.branches[bi];
    Matrix<T> g = std::move(grad_out[bi]);
    for (std::size_t l = L; l-- > 1;) {
      const Matrix<T>& h = bt.hidden_in[l - 1];
      Matrix<T> gh = Matrix<T>::Zero(h.rows(), h.cols());
      conv_backward(b, l, h, g, &gh);
      gh = gh.cwiseProduct(bt.masks[l - 1]);
      g = elu_backward<T>(bt.activated[l - 1], gh);
    }
    conv_backward(b, 0, bt.input, g, nullptr);
  }

  auto conv = conv_parameters();
  const std::span<Tensor2<T>* const> conv_span(conv);
  LossBreakdown out;
  out.data = xent.loss;
  out.l2 = l2_penalty<T>(conv_span, cfg_.l2_weight);
  l2_backward<T>(conv_span, cfg_.l2_weight);
  out.total = out.data + out.l2;
  return out;
}

template <class T>
std::vector<Matrix<T>> MultiHopModel<T>::snapshot() const {
  std::vector<Matrix<T>> out;
  for (const auto* p : parameters()) out.push_back(p->value);
  return out;
}

template <class T>
void MultiHopModel<T>::restore(const std::vector<Matrix<T>>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ShapeError("snapshot has wrong parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].rows() != params[i]->rows() || values[i].cols() != params[i]->cols()) {
      throw ShapeError("snapshot shape mismatch at parameter " + std::to_string(i));
    }
    params[i]->value = values[i];
  }
}

template class MultiHopModel<float>;
template class MultiHopModel<double>;

template <class T>
void save_checkpoint(const MultiHopModel<T>& model, const std::string& bin_path,
                     const std::string& manifest_path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  nlohmann::json manifest;
  manifest["format"] = "float32-le";
  manifest["config"] = model.config();
  manifest["in_dim"] = model.in_dim();
  auto& entries = manifest["parameters"] = nlohmann::json::array();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + bin_path);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i]->value;
    entries.push_back({{"name", names[i]}, {"shape", {v.rows(), v.cols()}}, {"offset", offset}});
    for (Eigen::Index e = 0; e < v.size(); ++e) {
      const float f = static_cast<float>(v.data()[e]);
      bin.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
    offset += static_cast<std::size_t>(v.size());
  }
  std::ofstream man(manifest_path);
  if (!man) throw std::runtime_error("cannot write " + manifest_path);
  man << manifest.dump(2) << '\n';
}

template <class T>
void load_checkpoint(MultiHopModel<T>& model, const std::string& bin_path,
                     const std::string& manifest_path) {
  std::ifstream man(manifest_path);
  if (!man) throw std::runtime_error("cannot read " + manifest_path);
  nlohmann::json manifest;
  man >> manifest;
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + bin_path);
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::size_t total = raw.size() / sizeof(float);

  auto params = model.parameters();
  const auto names = model.parameter_names();
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) throw ShapeError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != names[i]) {
      throw ShapeError("checkpoint parameter " + std::to_string(i) + " is '" +
                       e.at("name").get<std::string>() + "', expected '" + names[i] + "'");
    }
    const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
    auto& v = params[i]->value;
    if (shape.size() != 2 || shape[0] != v.rows() || shape[1] != v.cols()) {
      throw ShapeError("checkpoint shape mismatch for " + names[i]);
    }
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(v.size()) > total) throw ShapeError("checkpoint payload truncated");
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      float f;
      std::memcpy(&f, raw.data() + (offset + static_cast<std::size_t>(k)) * sizeof(float), sizeof f);
      v.data()[k] = static_cast<T>(f);
    }
  }
}

template void save_checkpoint(const MultiHopModel<float>&, const std::string&, const std::string&);
template void save_checkpoint(const MultiHopModel<double>&, const std::string&, const std::string&);
template void load_checkpoint(MultiHopModel<float>&, const std::string&, const std::string&);
template void load_checkpoint(MultiHopModel<double>&, const std::string&, const std::string&);

}  // namespace multihop

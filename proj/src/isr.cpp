#include "omniisr/isr.hpp"

#include <algorithm>
#include <cmath>

#include "omniisr/errors.hpp"

namespace omniisr {

double combine(const LossBreakdown& parts, const TapPlan& plan) {
  if (parts.mi.size() != plan.count() || parts.ne.size() != plan.count()) {
    throw ContractViolation("loss breakdown does not match the tap plan");
  }
  double total = parts.ce;
  for (std::size_t m = 0; m < plan.count(); ++m) {
    total += plan.alpha[m] * parts.mi[m];
    total += plan.lambda[m] * parts.ne[m];
  }
  return total;
}

double loss_ce(const Tensor& probs, const Tensor& onehot) {
  if (probs.shape() != onehot.shape() || probs.rank() < 2 || probs.dim(0) == 0) {
    throw ShapeError("cross-entropy needs matching [B, K, ...] tensors, got " +
                     to_string(probs.shape()) + " and " + to_string(onehot.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (onehot[i] != 0.0) acc += onehot[i] * std::log(std::max(probs[i], kProbabilityFloor));
  }
  return -acc / static_cast<double>(probs.dim(0));
}

double loss_mi(const Tensor& adapter_probs, const Tensor& onehot) {
  return loss_ce(adapter_probs, onehot);
}

double loss_ne(const Tensor& features) {
  if (features.rank() < 2 || features.dim(1) < 2 || features.dim(0) == 0) {
    throw ShapeError("negative entropy needs [B, C, ...] features with C >= 2, got " +
                     to_string(features.shape()));
  }
  const std::size_t batch = features.dim(0), channels = features.dim(1);
  const std::size_t cells = features.size() / (batch * channels);
  double acc = 0.0;
  std::vector<double> p(channels);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < cells; ++c) {
      double peak = -INFINITY;
      for (std::size_t k = 0; k < channels; ++k) {
        peak = std::max(peak, features[(b * channels + k) * cells + c]);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < channels; ++k) {
        p[k] = std::exp(features[(b * channels + k) * cells + c] - peak);
        z += p[k];
      }
      for (double v : p) {
        const double q = v / z;
        acc += q * std::log(std::max(q, kProbabilityFloor));
      }
    }
  }
  return acc / static_cast<double>(batch);
}

NodeId cross_entropy_node(Graph& graph, NodeId probs, NodeId onehot) {
  const NodeId weighted = graph.mul(onehot, graph.log(probs));
  return graph.scale(graph.batch_mean(weighted), -1.0);
}

NodeId negative_entropy_node(Graph& graph, NodeId features) {
  const NodeId p = graph.softmax(features, 1);
  return graph.batch_mean(graph.mul(p, graph.log(p)));
}

IsrModel::IsrModel(NetworkSpec spec, TapPlan plan) : net_(std::move(spec), std::move(plan)) {
  Graph& g = net_.graph();
  const TapPlan& taps = net_.plan();
  ce_ = cross_entropy_node(g, net_.prediction_node(), net_.labels_node());
  g.set_label(ce_, "loss.ce");
  total_ = ce_;
  for (std::size_t m = 0; m < taps.count(); ++m) {
    const std::string suffix = std::to_string(m + 1);
    const NodeId z = net_.tap_nodes()[m];
    if (net_.spec().widths[taps.indices[m] - 1] < 2) {
      throw ConfigError("tap " + suffix + " needs at least two channels for the entropy term");
    }
    mi_.push_back(cross_entropy_node(g, net_.adapter_nodes()[m], net_.labels_node()));
    g.set_label(mi_.back(), "loss.mi" + suffix);
    ne_.push_back(negative_entropy_node(g, z));
    g.set_label(ne_.back(), "loss.ne" + suffix);
    total_ = g.add(total_, g.scale(mi_.back(), taps.alpha[m]));
    total_ = g.add(total_, g.scale(ne_.back(), taps.lambda[m]));
  }
  g.set_label(total_, "loss.total");
}

LossBreakdown IsrModel::evaluate(const Batch& batch) { return evaluate(batch.inputs, batch.onehot); }

LossBreakdown IsrModel::evaluate(const Tensor& inputs, const Tensor& onehot) {
  net_.forward(inputs, onehot);
  return breakdown();
}

LossBreakdown IsrModel::breakdown() const {
  const Graph& g = net_.graph();
  LossBreakdown out;
  out.ce = g.value(ce_).item();
  for (NodeId n : mi_) out.mi.push_back(g.value(n).item());
  for (NodeId n : ne_) out.ne.push_back(g.value(n).item());
  out.total = g.value(total_).item();
  return out;
}

TappedForward IsrModel::tapped() const {
  const Graph& g = net_.graph();
  TappedForward out;
  out.prediction = g.value(net_.prediction_node());
  for (NodeId t : net_.tap_nodes()) out.taps.push_back(g.value(t));
  for (NodeId q : net_.adapter_nodes()) out.adapters.push_back(g.value(q));
  return out;
}

ParamSet IsrModel::gradient() const { return net_.graph().backward(total_); }

GradientDecomposition IsrModel::decompose() const {
  const Graph& g = net_.graph();
  GradientDecomposition out;
  out.ce = g.backward(ce_);
  for (NodeId n : mi_) out.mi.push_back(g.backward(n));
  for (NodeId n : ne_) out.ne.push_back(g.backward(n));
  out.total = g.backward(total_);
  return out;
}

}  // namespace omniisr

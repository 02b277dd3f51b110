#pragma once

#include <cstddef>
#include <vector>

#include "omniisr/data.hpp"
#include "omniisr/graph.hpp"
#include "omniisr/network.hpp"
#include "omniisr/param_set.hpp"
#include "omniisr/tensor.hpp"

namespace omniisr {

/// Component values of the total objective for one batch.
struct LossBreakdown {
  double ce = 0.0;
  std::vector<double> mi;  // per tap
  std::vector<double> ne;  // per tap
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

/// Weighted sum ce + sum_m (alpha_m * mi_m + lambda_m * ne_m), accumulated in
/// tap order.
double combine(const LossBreakdown& parts, const TapPlan& plan);

/// -(1/B) * sum over cells and classes of y * log(max(p, floor)).
/// `probs` and `onehot` share the layout [B, K, H, W].
double loss_ce(const Tensor& probs, const Tensor& onehot);
/// Same reduction applied to an adapter output.
double loss_mi(const Tensor& adapter_probs, const Tensor& onehot);
/// (1/B) * sum over cells of sum_c p_c log p_c with p the softmax of `features`
/// over the channel axis (axis 1). Requires at least two channels.
double loss_ne(const Tensor& features);

/// Graph builders for the same three reductions.
NodeId cross_entropy_node(Graph& graph, NodeId probs, NodeId onehot);
NodeId negative_entropy_node(Graph& graph, NodeId features);

/// Per-component gradients of one batch plus their weighted total.
struct GradientDecomposition {
  ParamSet ce;
  std::vector<ParamSet> mi;
  std::vector<ParamSet> ne;
  ParamSet total;
};

/// A TappedNetwork with CE, per-tap MI and per-tap NE nodes attached and a
/// single total-loss node.
class IsrModel {
 public:
  IsrModel(NetworkSpec spec, TapPlan plan);

  const NetworkSpec& spec() const { return net_.spec(); }
  const TapPlan& plan() const { return net_.plan(); }
  TappedNetwork& network() { return net_; }
  Graph& graph() { return net_.graph(); }

  void load(const ParamSet& params) { net_.load(params); }
  ParamSet params() const { return net_.params(); }

  /// Forward pass on one batch; returns the loss components.
  LossBreakdown evaluate(const Batch& batch);
  LossBreakdown evaluate(const Tensor& inputs, const Tensor& onehot);
  /// Values of the last evaluate().
  LossBreakdown breakdown() const;
  TappedForward tapped() const;

  /// Gradient of the total objective at the last evaluate().
  ParamSet gradient() const;
  /// One backward pass per component, at the last evaluate().
  GradientDecomposition decompose() const;

  NodeId total_node() const { return total_; }
  NodeId ce_node() const { return ce_; }
  const std::vector<NodeId>& mi_nodes() const { return mi_; }
  const std::vector<NodeId>& ne_nodes() const { return ne_; }

 private:
  TappedNetwork net_;
  NodeId ce_;
  std::vector<NodeId> mi_;
  std::vector<NodeId> ne_;
  NodeId total_;
};

}  // namespace omniisr

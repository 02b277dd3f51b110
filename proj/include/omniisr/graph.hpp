#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "omniisr/param_set.hpp"
#include "omniisr/tensor.hpp"

namespace omniisr {

/// Handle to a node in a Graph. Only meaningful for the graph that issued it.
struct NodeId {
  std::size_t index = 0;
  bool operator==(const NodeId&) const = default;
};

/// Floor applied inside every logarithm so degenerate probabilities never
/// produce NaN or -inf.
inline constexpr double kProbabilityFloor = 1e-12;

/// Explicitly constructed reverse-mode differentiation graph over dense
/// double tensors.
///
/// Nodes are appended in construction order, which is a topological order by
/// construction. `forward` binds the named placeholders, evaluates every node
/// and caches its value; `backward` walks the cache in reverse and returns the
/// gradient of a scalar node with respect to every parameter leaf.
///
/// Tensor layouts used by the layer kinds:
///   affine       x[B, in] . W[in, out] + b[out]             -> [B, out]
///   channel_mix  x[B, C, H, W], W[C, K], b[K]               -> [B, K, H, W]
///   softmax      normalizes along one axis
///   avg_pool2    x[B, C, H, W] with even H, W               -> [B, C, H/2, W/2]
///   upsample_*   x[B, C, h, w]                              -> [B, C, H, W]
///
/// A Graph is single-threaded; distinct graphs share nothing.
class Graph {
 public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;
  /// Returns one gradient per input; an empty Tensor means "no gradient".
  using BackwardFn =
      std::function<std::vector<Tensor>(Inputs, const Tensor& output, const Tensor& grad)>;

  NodeId placeholder(const std::string& name);
  NodeId constant(Tensor value, const std::string& label = "constant");
  NodeId parameter(const std::string& name, Tensor value, ParamTag tag = {});

  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  NodeId channel_mix(NodeId x, NodeId weight, NodeId bias);
  NodeId relu(NodeId x);
  NodeId softmax(NodeId x, std::size_t axis);
  /// Natural log of max(x, kProbabilityFloor).
  NodeId log(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  /// Sum of all elements divided by the leading (batch) dimension.
  NodeId batch_mean(NodeId x);
  NodeId avg_pool2(NodeId x);
  NodeId upsample_nearest(NodeId x, std::size_t height, std::size_t width);
  NodeId upsample_bilinear(NodeId x, std::size_t height, std::size_t width);
  NodeId custom(const std::string& label, std::vector<NodeId> inputs, ForwardFn forward,
                BackwardFn backward);

  void set_label(NodeId node, std::string label);
  const std::string& label(NodeId node) const;
  void mark_output(const std::string& name, NodeId node);

  /// Binds placeholders by name and evaluates every node. Returns the values
  /// of the nodes registered with mark_output.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& inputs);
  /// Re-evaluates with the bindings of the previous call.
  std::map<std::string, Tensor> forward();

  bool evaluated() const { return evaluated_; }
  const Tensor& value(NodeId node) const;

  /// Gradient of the scalar `loss` with respect to every parameter.
  /// Parameters with no dependency path receive exact zeros.
  ParamSet backward(NodeId loss) const;

  ParamSet parameters() const;
  /// Overwrites parameter values by name. Names and shapes must match.
  void load_parameters(const ParamSet& params);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    placeholder, constant, parameter, affine, channel_mix, relu, softmax, log, add, mul,
    scale, sum, mean, batch_mean, avg_pool2, upsample_nearest, upsample_bilinear, custom
  };

  struct Custom {
    ForwardFn forward;
    BackwardFn backward;
  };

  struct Node {
    Node(Op kind, std::vector<std::size_t> in, std::string name)
        : op(kind), inputs(std::move(in)), label(std::move(name)) {}

    Op op;
    std::vector<std::size_t> inputs;
    std::string label;
    double factor = 0.0;
    std::size_t axis = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    ParamTag tag;
    std::shared_ptr<Custom> custom;
    Tensor value;
  };

  NodeId push(Node node);
  void check_id(NodeId id) const;
  void evaluate(std::size_t index);
  void propagate(std::size_t index, const Tensor& grad, std::vector<Tensor>& grads) const;
  [[noreturn]] void fail(std::size_t index, const std::string& message) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> placeholders_;
  std::map<std::string, std::size_t> parameters_;
  std::map<std::string, std::size_t> outputs_;
  std::map<std::string, Tensor> bound_;
  bool evaluated_ = false;
};

/// One parameter entry's finite-difference comparison.
struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Lower bound on the relative-error denominator max(|a|, |n|, floor).
  double denominator_floor = 1e-8;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  bool passed = true;
};

/// Compares backward() against central finite differences for every scalar of
/// every parameter. Re-evaluates the graph with the last bound inputs and
/// restores the original parameter values before returning.
GradCheckReport grad_check(Graph& graph, NodeId loss, const GradCheckOptions& options = {});

}  // namespace omniisr

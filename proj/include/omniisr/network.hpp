#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "omniisr/graph.hpp"
#include "omniisr/param_set.hpp"
#include "omniisr/tensor.hpp"

namespace omniisr {

/// Stack of D blocks. Block b (1-based) is a 1x1 channel mix to widths[b-1]
/// followed by ReLU and, when b is listed in pool_after, a 2x2 average pool.
/// A channel-mix head maps the last block to K classes; when the grid was
/// pooled the head is bilinearly upsampled back to height x width before the
/// softmax over classes.
struct NetworkSpec {
  std::size_t input_channels = 8;
  std::vector<std::size_t> widths = {16, 16, 16, 16};
  std::size_t classes = 4;
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<std::size_t> pool_after;

  std::size_t depth() const { return widths.size(); }
  bool is_classification() const { return height == 1 && width == 1; }
  /// Throws ConfigError when D < 2, K < 2, a width is zero, or pooling would
  /// leave an odd or empty grid.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

enum class Placement { input, middle, output };

std::string to_string(Placement placement);
Placement placement_from_string(const std::string& text);

/// M intermediate extraction points with their MI and NE weights.
struct TapPlan {
  std::vector<std::size_t> indices;  // 1-based block indices, strictly increasing
  std::vector<double> alpha;         // MI weight per tap
  std::vector<double> lambda;        // NE weight per tap
  Placement placement = Placement::input;
  std::size_t spacing = 1;

  std::size_t count() const { return indices.size(); }
  /// Throws ConfigError unless M < D, indices are strictly increasing in
  /// [1, D-1] and the weight lists have length M.
  void validate(std::size_t depth) const;

  bool operator==(const TapPlan&) const = default;
};

/// Tap indices for a run of `count` taps `spacing` blocks apart, anchored at
///   input:  1
///   middle: floor(D/2) - floor((M-1) * spacing / 2)
///   output: D - 1 - (M-1) * spacing
/// Throws ConfigError listing every index that falls outside [1, D-1].
std::vector<std::size_t> plan_taps(std::size_t depth, std::size_t count, Placement placement,
                                   std::size_t spacing);

/// plan_taps plus uniform weights.
TapPlan make_tap_plan(std::size_t depth, std::size_t count, Placement placement,
                      std::size_t spacing, double alpha, double lambda);

/// Parameter names: "block{b}.weight|bias", "head.weight|bias",
/// "adapter{m}.weight|bias" (adapter-tagged).
ParamSet init_params(const NetworkSpec& spec, const TapPlan& plan, std::uint64_t seed);

/// Values produced by one forward pass of a tapped network.
struct TappedForward {
  Tensor prediction;             // [B, K, H, W], simplex over K per cell
  std::vector<Tensor> taps;      // z^m, post-activation block outputs
  std::vector<Tensor> adapters;  // q^m, [B, K, H, W]
};

/// Graph of a NetworkSpec with taps at the blocks of a TapPlan. Adapters
/// read the tap but never feed the main path.
class TappedNetwork {
 public:
  TappedNetwork(NetworkSpec spec, TapPlan plan);

  const NetworkSpec& spec() const { return spec_; }
  const TapPlan& plan() const { return plan_; }

  void load(const ParamSet& params) { graph_.load_parameters(params); }
  ParamSet params() const { return graph_.parameters(); }

  /// Evaluates with inputs [B, C_in, H, W]. `labels` (one-hot [B, K, H, W])
  /// is bound when the graph has loss nodes attached; pass an empty tensor
  /// otherwise.
  TappedForward forward(const Tensor& inputs, const Tensor& labels = {});

  Graph& graph() { return graph_; }
  const Graph& graph() const { return graph_; }
  NodeId input_node() const { return input_; }
  NodeId labels_node() const { return labels_; }
  NodeId prediction_node() const { return prediction_; }
  const std::vector<NodeId>& tap_nodes() const { return taps_; }
  const std::vector<NodeId>& adapter_nodes() const { return adapters_; }
  /// Grid height/width seen at tap m (0-based).
  std::pair<std::size_t, std::size_t> tap_grid(std::size_t m) const;

 private:
  NetworkSpec spec_;
  TapPlan plan_;
  Graph graph_;
  NodeId input_;
  NodeId labels_;
  NodeId prediction_;
  std::vector<NodeId> taps_;
  std::vector<NodeId> adapters_;
  std::vector<std::pair<std::size_t, std::size_t>> tap_grids_;
};

}  // namespace omniisr

#include "omniisr/network.hpp"

#include <algorithm>
#include <cmath>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

void NetworkSpec::validate() const {
  if (depth() < 2) throw ConfigError("network depth D must be >= 2, got " + std::to_string(depth()));
  if (classes < 2) throw ConfigError("network needs K >= 2 classes, got " + std::to_string(classes));
  if (input_channels == 0) throw ConfigError("input_channels must be positive");
  if (height == 0 || width == 0) throw ConfigError("grid height/width must be positive");
  for (std::size_t b = 0; b < widths.size(); ++b) {
    if (widths[b] == 0) throw ConfigError("block " + std::to_string(b + 1) + " has zero width");
  }
  std::size_t h = height, w = width;
  for (std::size_t b : pool_after) {
    if (b < 1 || b > depth()) throw ConfigError("pool_after block " + std::to_string(b) + " out of range");
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("pooling after block " + std::to_string(b) + " needs an even grid, have " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    h /= 2;
    w /= 2;
  }
}

std::string to_string(Placement placement) {
  switch (placement) {
    case Placement::input: return "input";
    case Placement::middle: return "middle";
    case Placement::output: return "output";
  }
  return "input";
}

Placement placement_from_string(const std::string& text) {
  if (text == "input") return Placement::input;
  if (text == "middle") return Placement::middle;
  if (text == "output") return Placement::output;
  throw ConfigError("unknown placement '" + text + "' (expected input|middle|output)");
}

void TapPlan::validate(std::size_t depth) const {
  const std::size_t m = indices.size();
  if (m >= depth) {
    throw ConfigError("tap count M=" + std::to_string(m) + " must be below depth D=" +
                      std::to_string(depth));
  }
  if (alpha.size() != m || lambda.size() != m) {
    throw ConfigError("tap plan needs one alpha and one lambda per tap");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (indices[i] < 1 || indices[i] > depth - 1) {
      throw ConfigError("tap index " + std::to_string(indices[i]) + " outside [1, " +
                        std::to_string(depth - 1) + "]");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw ConfigError("tap indices must be strictly increasing");
    }
    if (!(alpha[i] >= 0.0) || !(lambda[i] >= 0.0)) {
      throw ConfigError("tap weights must be non-negative");
    }
  }
}

std::vector<std::size_t> plan_taps(std::size_t depth, std::size_t count, Placement placement,
                                   std::size_t spacing) {
  if (count == 0) return {};
  if (spacing == 0) throw ConfigError("tap spacing must be a positive integer");
  const auto d = static_cast<long long>(depth);
  const auto m = static_cast<long long>(count);
  const auto s = static_cast<long long>(spacing);
  long long anchor = 1;
  switch (placement) {
    case Placement::input: anchor = 1; break;
    case Placement::middle: anchor = d / 2 - ((m - 1) * s) / 2; break;
    case Placement::output: anchor = d - 1 - (m - 1) * s; break;
  }
  std::vector<std::size_t> taps;
  std::string bad;
  for (long long i = 0; i < m; ++i) {
    const long long index = anchor + i * s;
    if (index < 1 || index > d - 1) {
      if (!bad.empty()) bad += ", ";
      bad += std::to_string(index);
    } else {
      taps.push_back(static_cast<std::size_t>(index));
    }
  }
  if (!bad.empty()) {
    throw ConfigError("tap plan D=" + std::to_string(depth) + " M=" + std::to_string(count) +
                      " placement=" + to_string(placement) + " spacing=" + std::to_string(spacing) +
                      " puts taps outside [1, " + std::to_string(depth - 1) + "]: " + bad);
  }
  return taps;
}

TapPlan make_tap_plan(std::size_t depth, std::size_t count, Placement placement,
                      std::size_t spacing, double alpha, double lambda) {
  TapPlan plan;
  plan.indices = plan_taps(depth, count, placement, spacing);
  plan.alpha.assign(count, alpha);
  plan.lambda.assign(count, lambda);
  plan.placement = placement;
  plan.spacing = spacing;
  return plan;
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::uint64_t seed, std::uint64_t slot) {
  Rng rng = make_rng(seed, Stream::init, slot);
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = normal(rng);
  return t;
}

// Channel count at the output of block b (1-based); block 0 is the input.
std::size_t channels_at(const NetworkSpec& spec, std::size_t b) {
  return b == 0 ? spec.input_channels : spec.widths[b - 1];
}

}  // namespace

ParamSet init_params(const NetworkSpec& spec, const TapPlan& plan, std::uint64_t seed) {
  spec.validate();
  plan.validate(spec.depth());
  ParamSet params;
  for (std::size_t b = 1; b <= spec.depth(); ++b) {
    const std::size_t cin = channels_at(spec, b - 1), cout = channels_at(spec, b);
    const std::string name = "block" + std::to_string(b);
    params.insert(name + ".weight",
                  normal_tensor({cin, cout}, std::sqrt(2.0 / static_cast<double>(cin)), seed, b));
    params.insert(name + ".bias", Tensor({cout}));
  }
  const std::size_t last = channels_at(spec, spec.depth());
  params.insert("head.weight", normal_tensor({last, spec.classes},
                                             std::sqrt(1.0 / static_cast<double>(last)), seed, 1000));
  params.insert("head.bias", Tensor({spec.classes}));
  for (std::size_t m = 0; m < plan.count(); ++m) {
    const std::size_t c = channels_at(spec, plan.indices[m]);
    const std::string name = "adapter" + std::to_string(m + 1);
    params.insert(name + ".weight",
                  normal_tensor({c, spec.classes}, std::sqrt(1.0 / static_cast<double>(c)), seed,
                                2000 + m + 1),
                  ParamTag::adapter(m + 1));
    params.insert(name + ".bias", Tensor({spec.classes}), ParamTag::adapter(m + 1));
  }
  return params;
}

TappedNetwork::TappedNetwork(NetworkSpec spec, TapPlan plan)
    : spec_(std::move(spec)), plan_(std::move(plan)) {
  spec_.validate();
  plan_.validate(spec_.depth());
  const ParamSet shapes = init_params(spec_, plan_, 0);
  auto param = [&](const std::string& name) {
    return graph_.parameter(name, shapes.at(name), shapes.tag(name));
  };

  input_ = graph_.placeholder("inputs");
  labels_ = graph_.placeholder("labels");
  NodeId x = input_;
  std::size_t h = spec_.height, w = spec_.width;
  std::size_t next_tap = 0;
  for (std::size_t b = 1; b <= spec_.depth(); ++b) {
    const std::string name = "block" + std::to_string(b);
    x = graph_.channel_mix(x, param(name + ".weight"), param(name + ".bias"));
    graph_.set_label(x, name + ".mix");
    x = graph_.relu(x);
    graph_.set_label(x, name + ".relu");
    if (std::find(spec_.pool_after.begin(), spec_.pool_after.end(), b) != spec_.pool_after.end()) {
      x = graph_.avg_pool2(x);
      graph_.set_label(x, name + ".pool");
      h /= 2;
      w /= 2;
    }
    if (next_tap < plan_.count() && plan_.indices[next_tap] == b) {
      const std::size_t m = next_tap + 1;
      taps_.push_back(x);
      tap_grids_.emplace_back(h, w);
      const std::string an = "adapter" + std::to_string(m);
      NodeId q = graph_.channel_mix(x, param(an + ".weight"), param(an + ".bias"));
      graph_.set_label(q, an + ".mix");
      if (h != spec_.height || w != spec_.width) {
        q = graph_.upsample_bilinear(q, spec_.height, spec_.width);
        graph_.set_label(q, an + ".upsample");
      }
      q = graph_.softmax(q, 1);
      graph_.set_label(q, an + ".softmax");
      adapters_.push_back(q);
      ++next_tap;
    }
  }
  NodeId logits = graph_.channel_mix(x, param("head.weight"), param("head.bias"));
  graph_.set_label(logits, "head.mix");
  if (h != spec_.height || w != spec_.width) {
    logits = graph_.upsample_bilinear(logits, spec_.height, spec_.width);
    graph_.set_label(logits, "head.upsample");
  }
  prediction_ = graph_.softmax(logits, 1);
  graph_.set_label(prediction_, "head.softmax");
}

std::pair<std::size_t, std::size_t> TappedNetwork::tap_grid(std::size_t m) const {
  return tap_grids_.at(m);
}

TappedForward TappedNetwork::forward(const Tensor& inputs, const Tensor& labels) {
  std::map<std::string, Tensor> bound{{"inputs", inputs}};
  if (labels.size() == 0 && inputs.rank() == 4) {
    bound["labels"] = Tensor({inputs.dim(0), spec_.classes, spec_.height, spec_.width});
  } else {
    bound["labels"] = labels;
  }
  graph_.forward(bound);
  TappedForward out;
  out.prediction = graph_.value(prediction_);
  for (NodeId t : taps_) out.taps.push_back(graph_.value(t));
  for (NodeId q : adapters_) out.adapters.push_back(graph_.value(q));
  return out;
}

}  // namespace omniisr

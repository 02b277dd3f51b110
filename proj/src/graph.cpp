#include "omniisr/graph.hpp"

#include <algorithm>
#include <cmath>

#include "omniisr/errors.hpp"

namespace omniisr {
namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Half-pixel-centre linear interpolation taps for one spatial axis.
struct LerpTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

std::size_t nearest_source(std::size_t o, std::size_t in, std::size_t out) {
  return std::min(in - 1, (o * in) / out);
}

}  // namespace

NodeId Graph::push(Node node) {
  for (std::size_t in : node.inputs) {
    if (in >= nodes_.size()) throw ContractViolation("graph input refers to a later node");
  }
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

void Graph::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) throw ContractViolation("unknown graph node");
}

void Graph::fail(std::size_t index, const std::string& message) const {
  throw ShapeError("node '" + nodes_[index].label + "' (#" + std::to_string(index) +
                   "): " + message);
}

NodeId Graph::placeholder(const std::string& name) {
  if (placeholders_.contains(name)) throw ConfigError("duplicate placeholder '" + name + "'");
  Node n{Op::placeholder, {}, name};
  auto id = push(std::move(n));
  placeholders_[name] = id.index;
  return id;
}

NodeId Graph::constant(Tensor value, const std::string& label) {
  Node n{Op::constant, {}, label};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(const std::string& name, Tensor value, ParamTag tag) {
  if (parameters_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Node n{Op::parameter, {}, name};
  n.value = std::move(value);
  n.tag = tag;
  auto id = push(std::move(n));
  parameters_[name] = id.index;
  return id;
}

NodeId Graph::affine(NodeId x, NodeId weight, NodeId bias) {
  return push(Node{Op::affine, {x.index, weight.index, bias.index}, "affine"});
}

NodeId Graph::channel_mix(NodeId x, NodeId weight, NodeId bias) {
  return push(Node{Op::channel_mix, {x.index, weight.index, bias.index}, "channel_mix"});
}

NodeId Graph::relu(NodeId x) { return push(Node{Op::relu, {x.index}, "relu"}); }

NodeId Graph::softmax(NodeId x, std::size_t axis) {
  Node n{Op::softmax, {x.index}, "softmax"};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::log(NodeId x) { return push(Node{Op::log, {x.index}, "log"}); }

NodeId Graph::add(NodeId a, NodeId b) { return push(Node{Op::add, {a.index, b.index}, "add"}); }

NodeId Graph::mul(NodeId a, NodeId b) { return push(Node{Op::mul, {a.index, b.index}, "mul"}); }

NodeId Graph::scale(NodeId x, double factor) {
  Node n{Op::scale, {x.index}, "scale"};
  n.factor = factor;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) { return push(Node{Op::sum, {x.index}, "sum"}); }

NodeId Graph::mean(NodeId x) { return push(Node{Op::mean, {x.index}, "mean"}); }

NodeId Graph::batch_mean(NodeId x) {
  return push(Node{Op::batch_mean, {x.index}, "batch_mean"});
}

NodeId Graph::avg_pool2(NodeId x) { return push(Node{Op::avg_pool2, {x.index}, "avg_pool2"}); }

NodeId Graph::upsample_nearest(NodeId x, std::size_t height, std::size_t width) {
  Node n{Op::upsample_nearest, {x.index}, "upsample_nearest"};
  n.height = height;
  n.width = width;
  return push(std::move(n));
}

NodeId Graph::upsample_bilinear(NodeId x, std::size_t height, std::size_t width) {
  Node n{Op::upsample_bilinear, {x.index}, "upsample_bilinear"};
  n.height = height;
  n.width = width;
  return push(std::move(n));
}

NodeId Graph::custom(const std::string& label, std::vector<NodeId> inputs, ForwardFn forward,
                     BackwardFn backward) {
  Node n{Op::custom, {}, label};
  for (NodeId id : inputs) n.inputs.push_back(id.index);
  n.custom = std::make_shared<Custom>(Custom{std::move(forward), std::move(backward)});
  return push(std::move(n));
}

void Graph::set_label(NodeId node, std::string label) {
  check_id(node);
  nodes_[node.index].label = std::move(label);
}

const std::string& Graph::label(NodeId node) const {
  check_id(node);
  return nodes_[node.index].label;
}

void Graph::mark_output(const std::string& name, NodeId node) {
  check_id(node);
  outputs_[name] = node.index;
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, index] : placeholders_) {
    if (!inputs.contains(name)) throw ConfigError("graph input '" + name + "' is not bound");
  }
  for (const auto& [name, t] : inputs) {
    if (!placeholders_.contains(name)) throw ConfigError("graph has no input '" + name + "'");
  }
  bound_ = inputs;
  return forward();
}

std::map<std::string, Tensor> Graph::forward() {
  evaluated_ = false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) evaluate(i);
  evaluated_ = true;
  std::map<std::string, Tensor> out;
  for (const auto& [name, index] : outputs_) out[name] = nodes_[index].value;
  return out;
}

const Tensor& Graph::value(NodeId node) const {
  check_id(node);
  if (!evaluated_) throw ContractViolation("graph value requested before forward");
  return nodes_[node.index].value;
}

void Graph::evaluate(std::size_t index) {
  Node& n = nodes_[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

  switch (n.op) {
    case Op::placeholder: {
      auto it = bound_.find(n.label);
      if (it == bound_.end()) fail(index, "input not bound");
      n.value = it->second;
      return;
    }
    case Op::constant:
    case Op::parameter:
      return;

    case Op::affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
          b.dim(0) != w.dim(1)) {
        fail(index, "affine expects x[B,in], W[in,out], b[out]; got " + to_string(x.shape()) +
                        ", " + to_string(w.shape()) + ", " + to_string(b.shape()));
      }
      const std::size_t rows = x.dim(0), cin = w.dim(0), cout = w.dim(1);
      Tensor y({rows, cout});
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = b[o];
          for (std::size_t i = 0; i < cin; ++i) acc += x[r * cin + i] * w[i * cout + o];
          y[r * cout + o] = acc;
        }
      }
      n.value = std::move(y);
      return;
    }

    case Op::channel_mix: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (x.rank() != 4 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
          b.dim(0) != w.dim(1)) {
        fail(index, "channel_mix expects x[B,C,H,W], W[C,K], b[K]; got " +
                        to_string(x.shape()) + ", " + to_string(w.shape()) + ", " +
                        to_string(b.shape()));
      }
      const std::size_t batch = x.dim(0), cin = x.dim(1), cout = w.dim(1);
      const std::size_t cells = x.dim(2) * x.dim(3);
      Tensor y({batch, cout, x.dim(2), x.dim(3)});
      for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t k = 0; k < cout; ++k) {
          double* dst = y.data() + (s * cout + k) * cells;
          std::fill(dst, dst + cells, b[k]);
          for (std::size_t c = 0; c < cin; ++c) {
            const double wk = w[c * cout + k];
            const double* src = x.data() + (s * cin + c) * cells;
            for (std::size_t p = 0; p < cells; ++p) dst[p] += wk * src[p];
          }
        }
      }
      n.value = std::move(y);
      return;
    }

    case Op::relu: {
      Tensor y = in(0);
      for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
      n.value = std::move(y);
      return;
    }

    case Op::softmax: {
      const Tensor& x = in(0);
      if (n.axis >= x.rank()) fail(index, "softmax axis out of range for " + to_string(x.shape()));
      const AxisSplit s = split_axis(x.shape(), n.axis);
      Tensor y(x.shape());
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double top = x[base];
          for (std::size_t k = 1; k < s.extent; ++k) top = std::max(top, x[base + k * s.inner]);
          double z = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) {
            const double e = std::exp(x[base + k * s.inner] - top);
            y[base + k * s.inner] = e;
            z += e;
          }
          for (std::size_t k = 0; k < s.extent; ++k) y[base + k * s.inner] /= z;
        }
      }
      n.value = std::move(y);
      return;
    }

    case Op::log: {
      Tensor y = in(0);
      for (double& v : y.values()) v = std::log(std::max(v, kProbabilityFloor));
      n.value = std::move(y);
      return;
    }

    case Op::add:
    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) {
        fail(index, "operands have shapes " + to_string(a.shape()) + " and " +
                        to_string(b.shape()));
      }
      Tensor y = a;
      if (n.op == Op::add) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
      }
      n.value = std::move(y);
      return;
    }

    case Op::scale: {
      Tensor y = in(0);
      for (double& v : y.values()) v *= n.factor;
      n.value = std::move(y);
      return;
    }

    case Op::sum:
    case Op::mean:
    case Op::batch_mean: {
      const Tensor& x = in(0);
      double acc = 0.0;
      for (double v : x.values()) acc += v;
      if (n.op == Op::mean) {
        if (x.size() == 0) fail(index, "mean of an empty tensor");
        acc /= static_cast<double>(x.size());
      } else if (n.op == Op::batch_mean) {
        if (x.rank() == 0 || x.dim(0) == 0) fail(index, "batch_mean needs a leading batch axis");
        acc /= static_cast<double>(x.dim(0));
      }
      n.value = Tensor::scalar(acc);
      return;
    }

    case Op::avg_pool2: {
      const Tensor& x = in(0);
      if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
        fail(index, "avg_pool2 expects [B,C,H,W] with even H and W; got " + to_string(x.shape()));
      }
      const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      Tensor y({x.dim(0), x.dim(1), h / 2, w / 2});
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < h / 2; ++i) {
          for (std::size_t j = 0; j < w / 2; ++j) {
            const double* src = x.data() + p * h * w;
            y[(p * (h / 2) + i) * (w / 2) + j] =
                0.25 * (src[(2 * i) * w + 2 * j] + src[(2 * i) * w + 2 * j + 1] +
                        src[(2 * i + 1) * w + 2 * j] + src[(2 * i + 1) * w + 2 * j + 1]);
          }
        }
      }
      n.value = std::move(y);
      return;
    }

    case Op::upsample_nearest:
    case Op::upsample_bilinear: {
      const Tensor& x = in(0);
      if (x.rank() != 4 || x.dim(2) == 0 || x.dim(3) == 0 || n.height == 0 || n.width == 0) {
        fail(index, "upsample expects [B,C,h,w] with positive target; got " +
                        to_string(x.shape()));
      }
      const std::size_t planes = x.dim(0) * x.dim(1), ih = x.dim(2), iw = x.dim(3);
      const std::size_t oh = n.height, ow = n.width;
      Tensor y({x.dim(0), x.dim(1), oh, ow});
      if (n.op == Op::upsample_nearest) {
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              y[(p * oh + i) * ow + j] =
                  x[(p * ih + nearest_source(i, ih, oh)) * iw + nearest_source(j, iw, ow)];
            }
          }
        }
      } else {
        const auto ty = lerp_taps(ih, oh);
        const auto tx = lerp_taps(iw, ow);
        for (std::size_t p = 0; p < planes; ++p) {
          const double* src = x.data() + p * ih * iw;
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const double top = (1 - tx[j].frac) * src[ty[i].lo * iw + tx[j].lo] +
                                 tx[j].frac * src[ty[i].lo * iw + tx[j].hi];
              const double bottom = (1 - tx[j].frac) * src[ty[i].hi * iw + tx[j].lo] +
                                    tx[j].frac * src[ty[i].hi * iw + tx[j].hi];
              y[(p * oh + i) * ow + j] = (1 - ty[i].frac) * top + ty[i].frac * bottom;
            }
          }
        }
      }
      n.value = std::move(y);
      return;
    }

    case Op::custom: {
      std::vector<const Tensor*> args;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) args.push_back(&in(k));
      n.value = n.custom->forward(args);
      return;
    }
  }
}

ParamSet Graph::backward(NodeId loss) const {
  check_id(loss);
  if (!evaluated_) throw ContractViolation("backward called before forward");
  const Tensor& out = nodes_[loss.index].value;
  if (out.size() != 1) {
    throw ContractViolation("backward requires a scalar loss; node '" +
                            nodes_[loss.index].label + "' has shape " + to_string(out.shape()));
  }

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.index] = Tensor(out.shape(), 1.0);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (grads[i].size() == 0 && nodes_[i].value.size() != 0) continue;
    if (grads[i].shape() != nodes_[i].value.shape()) continue;
    propagate(i, grads[i], grads);
  }

  ParamSet result;
  for (const auto& [name, index] : parameters_) {
    const Node& p = nodes_[index];
    Tensor g = grads[index].shape() == p.value.shape() ? grads[index] : Tensor(p.value.shape());
    result.insert(name, std::move(g), p.tag);
  }
  return result;
}

void Graph::propagate(std::size_t index, const Tensor& g, std::vector<Tensor>& grads) const {
  const Node& n = nodes_[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  // Accumulates into the gradient slot of input k, allocating on first use.
  auto slot = [&](std::size_t k) -> Tensor& {
    Tensor& s = grads[n.inputs[k]];
    if (s.shape() != in(k).shape() || s.size() != in(k).size()) s = Tensor(in(k).shape());
    return s;
  };

  switch (n.op) {
    case Op::placeholder:
    case Op::constant:
    case Op::parameter:
      return;

    case Op::affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t rows = x.dim(0), cin = w.dim(0), cout = w.dim(1);
      Tensor& gx = slot(0);
      Tensor& gw = slot(1);
      Tensor& gb = slot(2);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < cout; ++o) {
          const double go = g[r * cout + o];
          gb[o] += go;
          for (std::size_t i = 0; i < cin; ++i) {
            gx[r * cin + i] += go * w[i * cout + o];
            gw[i * cout + o] += go * x[r * cin + i];
          }
        }
      }
      return;
    }

    case Op::channel_mix: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t batch = x.dim(0), cin = x.dim(1), cout = w.dim(1);
      const std::size_t cells = x.dim(2) * x.dim(3);
      Tensor& gx = slot(0);
      Tensor& gw = slot(1);
      Tensor& gb = slot(2);
      for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t k = 0; k < cout; ++k) {
          const double* gy = g.data() + (s * cout + k) * cells;
          for (std::size_t p = 0; p < cells; ++p) gb[k] += gy[p];
          for (std::size_t c = 0; c < cin; ++c) {
            const double wk = w[c * cout + k];
            const double* src = x.data() + (s * cin + c) * cells;
            double* dx = gx.data() + (s * cin + c) * cells;
            double acc = 0.0;
            for (std::size_t p = 0; p < cells; ++p) {
              dx[p] += wk * gy[p];
              acc += src[p] * gy[p];
            }
            gw[c * cout + k] += acc;
          }
        }
      }
      return;
    }

    case Op::relu: {
      const Tensor& x = in(0);
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      return;
    }

    case Op::softmax: {
      const Tensor& y = n.value;
      const AxisSplit s = split_axis(y.shape(), n.axis);
      Tensor& gx = slot(0);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) {
            dot += g[base + k * s.inner] * y[base + k * s.inner];
          }
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t at = base + k * s.inner;
            gx[at] += y[at] * (g[at] - dot);
          }
        }
      }
      return;
    }

    case Op::log: {
      const Tensor& x = in(0);
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > kProbabilityFloor) gx[i] += g[i] / x[i];
      }
      return;
    }

    case Op::add: {
      Tensor& ga = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Tensor& gb = slot(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      return;
    }

    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor& ga = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      Tensor& gb = slot(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      return;
    }

    case Op::scale: {
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.factor;
      return;
    }

    case Op::sum:
    case Op::mean:
    case Op::batch_mean: {
      Tensor& gx = slot(0);
      double share = g.item();
      if (n.op == Op::mean) share /= static_cast<double>(gx.size());
      if (n.op == Op::batch_mean) share /= static_cast<double>(gx.dim(0));
      for (double& v : gx.values()) v += share;
      return;
    }

    case Op::avg_pool2: {
      const Tensor& x = in(0);
      Tensor& gx = slot(0);
      const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      for (std::size_t p = 0; p < planes; ++p) {
        double* dst = gx.data() + p * h * w;
        for (std::size_t i = 0; i < h / 2; ++i) {
          for (std::size_t j = 0; j < w / 2; ++j) {
            const double share = 0.25 * g[(p * (h / 2) + i) * (w / 2) + j];
            dst[(2 * i) * w + 2 * j] += share;
            dst[(2 * i) * w + 2 * j + 1] += share;
            dst[(2 * i + 1) * w + 2 * j] += share;
            dst[(2 * i + 1) * w + 2 * j + 1] += share;
          }
        }
      }
      return;
    }

    case Op::upsample_nearest:
    case Op::upsample_bilinear: {
      const Tensor& x = in(0);
      Tensor& gx = slot(0);
      const std::size_t planes = x.dim(0) * x.dim(1), ih = x.dim(2), iw = x.dim(3);
      const std::size_t oh = n.height, ow = n.width;
      if (n.op == Op::upsample_nearest) {
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              gx[(p * ih + nearest_source(i, ih, oh)) * iw + nearest_source(j, iw, ow)] +=
                  g[(p * oh + i) * ow + j];
            }
          }
        }
      } else {
        const auto ty = lerp_taps(ih, oh);
        const auto tx = lerp_taps(iw, ow);
        for (std::size_t p = 0; p < planes; ++p) {
          double* dst = gx.data() + p * ih * iw;
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const double go = g[(p * oh + i) * ow + j];
              const double wy0 = 1 - ty[i].frac, wy1 = ty[i].frac;
              const double wx0 = 1 - tx[j].frac, wx1 = tx[j].frac;
              dst[ty[i].lo * iw + tx[j].lo] += go * wy0 * wx0;
              dst[ty[i].lo * iw + tx[j].hi] += go * wy0 * wx1;
              dst[ty[i].hi * iw + tx[j].lo] += go * wy1 * wx0;
              dst[ty[i].hi * iw + tx[j].hi] += go * wy1 * wx1;
            }
          }
        }
      }
      return;
    }

    case Op::custom: {
      std::vector<const Tensor*> args;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) args.push_back(&in(k));
      std::vector<Tensor> local = n.custom->backward(args, n.value, g);
      for (std::size_t k = 0; k < std::min(local.size(), n.inputs.size()); ++k) {
        if (local[k].size() == 0) continue;
        if (local[k].shape() != in(k).shape()) fail(index, "custom backward returned a bad shape");
        Tensor& s = slot(k);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += local[k][i];
      }
      return;
    }
  }
}

ParamSet Graph::parameters() const {
  ParamSet out;
  for (const auto& [name, index] : parameters_) {
    out.insert(name, nodes_[index].value, nodes_[index].tag);
  }
  return out;
}

void Graph::load_parameters(const ParamSet& params) {
  if (params.size() != parameters_.size()) {
    throw ProtocolError("parameter set has " + std::to_string(params.size()) +
                        " entries, graph expects " + std::to_string(parameters_.size()));
  }
  for (const auto& [name, entry] : params) {
    auto it = parameters_.find(name);
    if (it == parameters_.end()) throw ProtocolError("graph has no parameter '" + name + "'");
    Node& n = nodes_[it->second];
    if (n.value.shape() != entry.value.shape()) {
      throw ProtocolError("parameter '" + name + "' has shape " + to_string(n.value.shape()) +
                          ", got " + to_string(entry.value.shape()));
    }
    n.value = entry.value;
  }
  evaluated_ = false;
}

GradCheckReport grad_check(Graph& graph, NodeId loss, const GradCheckOptions& options) {
  graph.forward();
  const ParamSet analytic = graph.backward(loss);
  const ParamSet original = graph.parameters();

  GradCheckReport report;
  ParamSet probe = original;
  for (const auto& [name, entry] : original) {
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double saved = slot[i];
      slot[i] = saved + options.step;
      graph.load_parameters(probe);
      graph.forward();
      const double up = graph.value(loss).item();
      slot[i] = saved - options.step;
      graph.load_parameters(probe);
      graph.forward();
      const double down = graph.value(loss).item();
      slot[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.at(name)[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      report.entries.push_back({name, i, a, numeric, rel});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  graph.load_parameters(original);
  graph.forward();
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace omniisr

#include "ucag/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "ucag/random.hpp"

namespace ucag {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using ConstRowMap = Eigen::Map<const RowMatrix<double>>;
using RowMap = Eigen::Map<RowMatrix<double>>;

ConstRowMap as_matrix(const Tensor& t, Index rows, Index cols) { return ConstRowMap(t.data(), rows, cols); }
RowMap as_matrix(Tensor& t, Index rows, Index cols) { return RowMap(t.data(), rows, cols); }

// --- convolution helpers -----------------------------------------------------

// Unrolls one [C,H,W] sample into a (C*9) x (H*W) patch matrix (zero padding 1).
void im2col(const double* in, Index channels, Index h, Index w, RowMatrix<double>& cols) {
  constexpr Index k = Conv2D::kKernel;
  cols.resize(channels * k * k, h * w);
  for (Index c = 0; c < channels; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        double* row = cols.row((c * k + ky) * k + kx).data();
        // Destination columns [x0, x1) read source column x + kx - 1.
        const Index x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? w - 1 : w;
        for (Index y = 0; y < h; ++y) {
          double* dst = row + y * w;
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = in + (c * h + sy) * w + kx - 1;
          std::fill(dst, dst + x0, 0.0);
          if (x1 > x0) std::copy(src + x0, src + x1, dst + x0);
          std::fill(dst + std::max(x1, x0), dst + w, 0.0);
        }
      }
}

// Adjoint of im2col: accumulates the patch matrix back onto a [C,H,W] sample.
void col2im(const RowMatrix<double>& cols, Index channels, Index h, Index w, double* out) {
  constexpr Index k = Conv2D::kKernel;
  for (Index c = 0; c < channels; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const double* row = cols.row((c * k + ky) * k + kx).data();
        for (Index y = 0; y < h; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          double* dst = out + (c * h + sy) * w;
          for (Index x = 0; x < w; ++x) {
            const Index sx = x + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += row[y * w + x];
          }
        }
      }
}

ConstRowMap kernel_matrix(const Conv2D& conv) {
  constexpr Index k = Conv2D::kKernel;
  return as_matrix(conv.weight, conv.out_channels(), conv.in_channels() * k * k);
}

Tensor conv_forward(const Conv2D& conv, const Tensor& in) {
  require(in.dim(1) == conv.in_channels(), "conv2d: expected " + std::to_string(conv.in_channels()) +
                                               " input channels, got " + std::to_string(in.dim(1)));
  const Index batch = in.dim(0), h = in.dim(2), w = in.dim(3);
  const Index out_c = conv.out_channels();
  Tensor out({batch, out_c, h, w});
  const auto kernel = kernel_matrix(conv);
  RowMatrix<double> cols;
  for (Index b = 0; b < batch; ++b) {
    im2col(in.data() + b * in.size() / batch, conv.in_channels(), h, w, cols);
    RowMap dst(out.data() + b * out_c * h * w, out_c, h * w);
    dst.noalias() = kernel * cols;
    dst.colwise() += conv.bias.values();
  }
  return out;
}

// Applies the transposed kernel to a [B,O,H,W] signal: returns [B,I,H,W].
Tensor conv_transpose(const Conv2D& conv, const Tensor& signal) {
  const Index batch = signal.dim(0), h = signal.dim(2), w = signal.dim(3);
  const Index in_c = conv.in_channels(), out_c = conv.out_channels();
  Tensor out({batch, in_c, h, w});
  const auto kernel = kernel_matrix(conv);
  RowMatrix<double> cols;
  for (Index b = 0; b < batch; ++b) {
    ConstRowMap g(signal.data() + b * out_c * h * w, out_c, h * w);
    cols.noalias() = kernel.transpose() * g;
    col2im(cols, in_c, h, w, out.data() + b * in_c * h * w);
  }
  return out;
}

void conv_param_grads(const Conv2D& conv, const Tensor& in, const Tensor& grad_out, Tensor& gw, Tensor& gb) {
  const Index batch = in.dim(0), h = in.dim(2), w = in.dim(3);
  const Index out_c = conv.out_channels();
  constexpr Index k = Conv2D::kKernel;
  auto gw_mat = as_matrix(gw, out_c, conv.in_channels() * k * k);
  RowMatrix<double> cols;
  for (Index b = 0; b < batch; ++b) {
    im2col(in.data() + b * in.size() / batch, conv.in_channels(), h, w, cols);
    ConstRowMap g(grad_out.data() + b * out_c * h * w, out_c, h * w);
    gw_mat.noalias() += g * cols.transpose();
    gb.values() += g.rowwise().sum();
  }
}

// --- pooling -------------------------------------------------------------------

// Flat index (within the plane) of the winner of each 2x2 window; ties keep
// the first element in row-major window order.
Index pool_winner(const double* plane, Index w, Index oy, Index ox) {
  Index best = (2 * oy) * w + 2 * ox;
  for (Index dy = 0; dy < 2; ++dy)
    for (Index dx = 0; dx < 2; ++dx) {
      const Index idx = (2 * oy + dy) * w + 2 * ox + dx;
      if (plane[idx] > plane[best]) best = idx;
    }
  return best;
}

Tensor maxpool_forward(const Tensor& in) {
  const Index h = in.dim(2), w = in.dim(3);
  require(h >= 2 && w >= 2, "maxpool: input " + std::to_string(h) + "x" + std::to_string(w) +
                                " is below the receptive minimum");
  const Index oh = h / 2, ow = w / 2;
  Tensor out({in.dim(0), in.dim(1), oh, ow});
  for (Index p = 0; p < in.planes(); ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[pool_winner(src, w, oy, ox)];
  }
  return out;
}

// Routes each output-cell signal to its window winner.
Tensor maxpool_route(const Tensor& in, const Tensor& signal) {
  const Index h = in.dim(2), w = in.dim(3);
  const Index oh = h / 2, ow = w / 2;
  Tensor out(in.shape());
  for (Index p = 0; p < in.planes(); ++p) {
    const double* src = in.data() + p * h * w;
    const double* s = signal.data() + p * oh * ow;
    double* dst = out.data() + p * h * w;
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) dst[pool_winner(src, w, oy, ox)] += s[oy * ow + ox];
  }
  return out;
}

Tensor gap_forward(const Tensor& in) {
  const Index batch = in.dim(0), channels = in.dim(1);
  const Index area = in.spatial().area();
  Tensor out({batch, channels});
  as_matrix(out, batch * channels, 1) = as_matrix(in, batch * channels, area).rowwise().mean();
  return out;
}

// Spreads a [B,C] signal uniformly over the [B,C,H,W] input, scaled by 1/(H*W).
Tensor gap_spread(const Tensor& in, const Tensor& signal) {
  const Index rows = in.dim(0) * in.dim(1);
  const Index area = in.spatial().area();
  Tensor out(in.shape());
  as_matrix(out, rows, area) = (as_matrix(signal, rows, 1) / static_cast<double>(area)).replicate(1, area);
  return out;
}

Tensor dense_forward(const Dense& dense, const Tensor& in) {
  require(in.rank() == 2 && in.dim(1) == dense.in_features(), "dense: feature count mismatch");
  const Index batch = in.dim(0);
  Tensor out({batch, dense.out_features()});
  auto dst = as_matrix(out, batch, dense.out_features());
  dst.noalias() = as_matrix(in, batch, dense.in_features()) *
                  as_matrix(dense.weight, dense.out_features(), dense.in_features()).transpose();
  dst.rowwise() += dense.bias.values().transpose();
  return out;
}

Tensor dense_transpose(const Dense& dense, const Tensor& signal) {
  const Index batch = signal.dim(0);
  Tensor out({batch, dense.in_features()});
  as_matrix(out, batch, dense.in_features()).noalias() =
      as_matrix(signal, batch, dense.out_features()) * as_matrix(dense.weight, dense.out_features(), dense.in_features());
  return out;
}

Tensor apply_layer(const Layer& layer, const Tensor& in) {
  return std::visit(Overloaded{
                        [&](const Conv2D& c) {
                          require(in.rank() == 4, "conv2d expects [B,C,H,W]");
                          return conv_forward(c, in);
                        },
                        [&](const ReLU&) {
                          Tensor out = in;
                          out.values() = out.values().cwiseMax(0.0);
                          return out;
                        },
                        [&](const MaxPool2&) {
                          require(in.rank() == 4, "maxpool expects [B,C,H,W]");
                          return maxpool_forward(in);
                        },
                        [&](const GlobalAvgPool&) {
                          require(in.rank() == 4, "global pooling expects [B,C,H,W]");
                          return gap_forward(in);
                        },
                        [&](const Dense& d) { return dense_forward(d, in); },
                    },
                    layer);
}

Tensor as_batch(const Tensor& t) {
  if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  return t;
}

// Epsilon-stabilised divisor: z + eps * sign(z), with sign(0) = +1.
Tensor stabilised_ratio(const Tensor& relevance, const Tensor& z, double epsilon) {
  Tensor s(z.shape());
  const auto zs = z.values().array();
  s.values() = relevance.values().array() / (zs + epsilon * (zs >= 0.0).cast<double>() * 2.0 - epsilon);
  return s;
}

double he_bound(Index fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2D&) { return std::string("conv2d"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const MaxPool2&) { return std::string("maxpool2"); },
                        [](const GlobalAvgPool&) { return std::string("global_avg_pool"); },
                        [](const Dense&) { return std::string("dense"); },
                    },
                    layer);
}

Network::Network(std::vector<Layer> layers, std::array<Index, 3> input_shape, NetworkMetadata metadata)
    : layers_(std::move(layers)), input_shape_(input_shape), metadata_(std::move(metadata)) {
  require(layers_.size() >= 3, "network needs at least conv, global pooling and dense layers");
  require(std::holds_alternative<Dense>(layers_.back()), "final layer must be dense");
  require(std::holds_alternative<GlobalAvgPool>(layers_[layers_.size() - 2]), "dense head must follow global pooling");
  Index channels = input_shape_[0];
  Index convs = 0;
  for (std::size_t i = 0; i + 2 < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    require(!std::holds_alternative<Dense>(l) && !std::holds_alternative<GlobalAvgPool>(l),
            "dense and global pooling are only allowed as the head");
    if (const auto* conv = std::get_if<Conv2D>(&l)) {
      require(conv->weight.rank() == 4 && conv->weight.dim(2) == 3 && conv->weight.dim(3) == 3,
              "conv2d weight must be [out,in,3,3]");
      require(conv->in_channels() == channels, "layer " + std::to_string(i) + " expects " +
                                                   std::to_string(conv->in_channels()) + " channels, chain provides " +
                                                   std::to_string(channels));
      require(conv->bias.rank() == 1 && conv->bias.dim(0) == conv->out_channels(), "conv2d bias shape");
      channels = conv->out_channels();
      ++convs;
    }
  }
  require(convs >= 1, "network needs at least one conv2d layer");
  const auto& head = std::get<Dense>(layers_.back());
  require(head.weight.rank() == 2 && head.in_features() == channels, "dense head must take " +
                                                                         std::to_string(channels) + " features");
  require(head.bias.rank() == 1 && head.bias.dim(0) == head.out_features(), "dense bias shape");
  num_classes_ = head.out_features();
  require(num_classes_ >= 1, "network needs at least one class");
}

Network make_toy_network(Index in_channels, Index num_classes, std::array<Index, 2> image_size, std::uint64_t seed,
                         std::vector<Index> conv_widths) {
  require(!conv_widths.empty(), "toy network needs at least one conv width");
  Rng rng(seed);
  std::vector<Layer> layers;
  Index channels = in_channels;
  for (std::size_t i = 0; i < conv_widths.size(); ++i) {
    Conv2D conv{Tensor({conv_widths[i], channels, 3, 3}), Tensor({conv_widths[i]})};
    const double bound = he_bound(channels * 9);
    for (Index j = 0; j < conv.weight.size(); ++j) conv.weight[j] = rng.uniform(-bound, bound);
    layers.emplace_back(std::move(conv));
    layers.emplace_back(ReLU{});
    if (i + 1 < conv_widths.size()) layers.emplace_back(MaxPool2{});
    channels = conv_widths[i];
  }
  layers.emplace_back(GlobalAvgPool{});
  Dense dense{Tensor({num_classes, channels}), Tensor({num_classes})};
  const double bound = he_bound(channels);
  for (Index j = 0; j < dense.weight.size(); ++j) dense.weight[j] = rng.uniform(-bound, bound);
  layers.emplace_back(std::move(dense));
  return Network(std::move(layers), {in_channels, image_size[0], image_size[1]}, {seed, ""});
}

ForwardTrace forward(const Network& net, const Tensor& batch) {
  require(batch.rank() == 3 || batch.rank() == 4, "forward expects [C,H,W] or [B,C,H,W]");
  ForwardTrace trace;
  trace.activations.reserve(net.layers().size() + 1);
  trace.activations.push_back(as_batch(batch));
  require(trace.input().dim(1) == net.input_channels(), "network expects " + std::to_string(net.input_channels()) +
                                                            " channels, got " + std::to_string(trace.input().dim(1)));
  for (const Layer& layer : net.layers()) trace.activations.push_back(apply_layer(layer, trace.activations.back()));
  trace.logits = trace.activations.back();
  return trace;
}

Tensor predict_logits(const Network& net, const Tensor& batch) {
  Tensor x = as_batch(batch);
  require(x.dim(1) == net.input_channels(), "network expects " + std::to_string(net.input_channels()) + " channels");
  for (const Layer& layer : net.layers()) x = apply_layer(layer, x);
  return x;
}

Tensor forward_from(const Network& net, Index layer, const Tensor& activation) {
  require(layer >= kInputLayer && layer < net.layer_count(), "unknown layer id " + std::to_string(layer));
  Tensor x = activation;
  for (Index i = layer + 1; i < net.layer_count(); ++i) x = apply_layer(net.layer(i), x);
  return x;
}

Tensor backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_logits, Index stop_layer,
                ParameterGradients* params) {
  require(stop_layer >= kInputLayer && stop_layer < net.layer_count(), "unknown layer id " + std::to_string(stop_layer));
  require(grad_logits.shape() == trace.logits.shape(), "gradient seed must match the logits shape");
  if (params) {
    params->weight.resize(net.layers().size());
    params->bias.resize(net.layers().size());
  }
  Tensor grad = grad_logits;
  for (Index i = net.layer_count() - 1; i > stop_layer; --i) {
    const Tensor& in = trace.activations[static_cast<std::size_t>(i)];
    const auto slot = static_cast<std::size_t>(i);
    grad = std::visit(Overloaded{
                          [&](const Conv2D& c) {
                            if (params) {
                              if (params->weight[slot].empty()) params->weight[slot] = Tensor(c.weight.shape());
                              if (params->bias[slot].empty()) params->bias[slot] = Tensor(c.bias.shape());
                              conv_param_grads(c, in, grad, params->weight[slot], params->bias[slot]);
                            }
                            return conv_transpose(c, grad);
                          },
                          [&](const ReLU&) {
                            Tensor g = grad;
                            g.values() = (in.values().array() > 0.0).select(g.values(), 0.0);
                            return g;
                          },
                          [&](const MaxPool2&) { return maxpool_route(in, grad); },
                          [&](const GlobalAvgPool&) { return gap_spread(in, grad); },
                          [&](const Dense& d) {
                            if (params) {
                              if (params->weight[slot].empty()) params->weight[slot] = Tensor(d.weight.shape());
                              if (params->bias[slot].empty()) params->bias[slot] = Tensor(d.bias.shape());
                              as_matrix(params->weight[slot], d.out_features(), d.in_features()).noalias() +=
                                  as_matrix(grad, in.dim(0), d.out_features()).transpose() *
                                  as_matrix(in, in.dim(0), d.in_features());
                              params->bias[slot].values() +=
                                  as_matrix(grad, in.dim(0), d.out_features()).colwise().sum().transpose();
                            }
                            return dense_transpose(d, grad);
                          },
                      },
                      net.layer(i));
  }
  return grad;
}

Tensor grad_wrt_activation(const Network& net, const ForwardTrace& trace, Index class_k, Index layer) {
  require(class_k >= 0 && class_k < net.num_classes(), "class index " + std::to_string(class_k) + " out of range");
  require(layer >= kInputLayer && layer < net.layer_count() - 1,
          "layer id " + std::to_string(layer) + " does not precede the head");
  Tensor seed(trace.logits.shape());
  for (Index b = 0; b < trace.batch(); ++b) seed(b, class_k) = 1.0;
  return backward(net, trace, seed, layer);
}

std::vector<Tensor> lrp_relevances(const Network& net, const ForwardTrace& trace, Index class_k, double epsilon) {
  require(epsilon > 0.0, "lrp epsilon must be positive");
  require(class_k >= 0 && class_k < net.num_classes(), "class index " + std::to_string(class_k) + " out of range");
  std::vector<Tensor> relevance(trace.activations.size());
  Tensor r(trace.logits.shape());
  for (Index b = 0; b < trace.batch(); ++b) r(b, class_k) = trace.logits(b, class_k);
  relevance.back() = r;
  for (Index i = net.layer_count() - 1; i >= 0; --i) {
    const Tensor& in = trace.activations[static_cast<std::size_t>(i)];
    const Tensor& z = trace.activations[static_cast<std::size_t>(i + 1)];
    r = std::visit(Overloaded{
                       [&](const Conv2D& c) {
                         Tensor out = conv_transpose(c, stabilised_ratio(r, z, epsilon));
                         out.values().array() *= in.values().array();
                         return out;
                       },
                       [&](const ReLU&) { return r; },
                       [&](const MaxPool2&) { return maxpool_route(in, r); },
                       [&](const GlobalAvgPool&) {
                         Tensor out = gap_spread(in, stabilised_ratio(r, z, epsilon));
                         out.values().array() *= in.values().array();
                         return out;
                       },
                       [&](const Dense& d) {
                         Tensor out = dense_transpose(d, stabilised_ratio(r, z, epsilon));
                         out.values().array() *= in.values().array();
                         return out;
                       },
                   },
                   net.layer(i));
    relevance[static_cast<std::size_t>(i)] = r;
  }
  return relevance;
}

Tensor lrp_propagate(const Network& net, const ForwardTrace& trace, Index class_k, double epsilon) {
  return lrp_relevances(net, trace, class_k, epsilon).front();
}

}  // namespace ucag

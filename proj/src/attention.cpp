#include "dysk/attention.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace dysk {

namespace {

Tensor conv1x1_init(int channels, Rng& rng, ParamStore& params, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  return params.add(name, uniform_tensor({channels, channels, 1, 1}, rng, -bound, bound, true));
}

}  // namespace

QKVProjection make_qkv_projection(int channels, int heads, Rng& rng, ParamStore& params,
                                  const std::string& prefix) {
  if (channels < 1 || heads < 1 || channels % heads != 0)
    throw std::invalid_argument("qkv projection: channels " + std::to_string(channels) +
                                " not divisible by heads " + std::to_string(heads));
  QKVProjection proj;
  proj.channels = channels;
  proj.heads = heads;
  proj.wq = conv1x1_init(channels, rng, params, prefix + ".q.weight");
  proj.bq = params.add(prefix + ".q.bias", Tensor::zeros({channels}, true));
  proj.wk = conv1x1_init(channels, rng, params, prefix + ".k.weight");
  proj.bk = params.add(prefix + ".k.bias", Tensor::zeros({channels}, true));
  proj.wv = conv1x1_init(channels, rng, params, prefix + ".v.weight");
  proj.bv = params.add(prefix + ".v.bias", Tensor::zeros({channels}, true));
  proj.wo = conv1x1_init(channels, rng, params, prefix + ".out.weight");
  proj.bo = params.add(prefix + ".out.bias", Tensor::zeros({channels}, true));
  return proj;
}

std::tuple<Tensor, Tensor, Tensor> project_qkv(const Tensor& feat_a, const Tensor& feat_b,
                                               const QKVProjection& proj) {
  if (feat_a.shape() != feat_b.shape())
    throw std::invalid_argument("project_qkv: feature shapes differ, " +
                                shape_str(feat_a.shape()) + " vs " + shape_str(feat_b.shape()));
  if (feat_a.shape()[1] != proj.channels)
    throw std::invalid_argument("project_qkv: projection built for " +
                                std::to_string(proj.channels) + " channels, features have " +
                                std::to_string(feat_a.shape()[1]));
  Tensor q = conv2d(feat_a, proj.wq, proj.bq, 1, 0);
  Tensor k = conv2d(feat_b, proj.wk, proj.bk, 1, 0);
  Tensor v = conv2d(feat_b, proj.wv, proj.bv, 1, 0);
  return {q, k, v};
}

Tensor to_heads(const Tensor& t, int heads) {
  const Shape& s = t.shape();
  if (s.size() != 4 || s[1] % heads != 0)
    throw std::invalid_argument("to_heads: cannot split " + shape_str(s) + " into " +
                                std::to_string(heads) + " heads");
  return reshape(t, {s[0], s[1] / heads, heads, s[2], s[3]});
}

Tensor to_heads_tapped(const Tensor& t, int heads) {
  const Shape& s = t.shape();
  if (s.size() != 5 || s[1] % heads != 0)
    throw std::invalid_argument("to_heads_tapped: cannot split " + shape_str(s) + " into " +
                                std::to_string(heads) + " heads");
  return reshape(t, {s[0], s[1] / heads, heads, s[2], s[3], s[4]});
}

Tensor from_heads(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() != 5)
    throw std::invalid_argument("from_heads: expected B x d x h x H x W, got " + shape_str(s));
  return reshape(t, {s[0], s[1] * s[2], s[3], s[4]});
}

AttentionWeights point_attention(const Tensor& query_heads, const Tensor& key_heads_tapped) {
  if (key_heads_tapped.rank() != 6 || key_heads_tapped.shape()[3] < 1)
    throw std::invalid_argument("point_attention: need at least one sampled tap, got " +
                                shape_str(key_heads_tapped.shape()));
  Tensor logits = scaled_dot_taps(query_heads, key_heads_tapped);  // B x h x U x H x W
  return AttentionWeights{softmax(logits, 2)};
}

DynamicKernel fuse_kernel(const AttentionWeights& spatial, const Tensor& channel_weights) {
  const int heads = spatial.heads();
  if (channel_weights.size() % heads != 0)
    throw std::invalid_argument("fuse_kernel: channel weight count " +
                                std::to_string(channel_weights.size()) +
                                " not divisible by " + std::to_string(heads) + " heads");
  return DynamicKernel{spatial, channel_weights};
}

double fused_kernel_weight(const DynamicKernel& kernel, int batch, int tap, int channel, int y,
                           int x) {
  const int heads = kernel.spatial.heads();
  const int head = channel % heads;
  const double rho = kernel.spatial.rho.at({batch, head, tap, y, x});
  return rho * kernel.channel.value()[channel];
}

Tensor aggregate(const DynamicKernel& kernel, const Tensor& sampled_values,
                 const QKVProjection& proj) {
  if (sampled_values.rank() != 5)
    throw std::invalid_argument("aggregate: sampled values must be B x C x U x H x W, got " +
                                shape_str(sampled_values.shape()));
  if (sampled_values.shape()[2] != kernel.spatial.tap_count())
    throw std::invalid_argument("aggregate: kernel has " +
                                std::to_string(kernel.spatial.tap_count()) +
                                " taps, values have " +
                                std::to_string(sampled_values.shape()[2]));
  Tensor values_heads = to_heads_tapped(sampled_values, kernel.spatial.heads());
  Tensor per_head = weighted_tap_sum(kernel.spatial.rho, values_heads);  // B x d x h x H x W
  Tensor combined = from_heads(per_head);
  Tensor weighted = mul_channel(combined, kernel.channel);
  return conv2d(weighted, proj.wo, proj.bo, 1, 0);
}

DsbBlock make_dsb_block(int channels, int heads, const BaseWindow& window, Rng& rng,
                        ParamStore& params, const std::string& prefix) {
  DsbBlock block{make_qkv_projection(channels, heads, rng, params, prefix),
                 make_offset_net(channels, window.size(), rng, params, prefix + ".offset"),
                 params.add(prefix + ".channel", Tensor::full({1, channels}, 1.0, true)),
                 window};
  return block;
}

Tensor dsb_forward(const Tensor& feat_a, const Tensor& feat_b, const DsbBlock& block,
                   AttentionWeights* attention_out) {
  auto [q, k, v] = project_qkv(feat_a, feat_b, block.proj);
  OffsetField offsets = predict_offsets(feat_a, feat_b, block.offset_net);
  DeformedWindow window = deform_window(block.window, offsets);
  auto [k_m, v_m] = sample_deformed_kv(k, v, window);
  AttentionWeights rho =
      point_attention(to_heads(q, block.proj.heads), to_heads_tapped(k_m, block.proj.heads));
  if (attention_out) *attention_out = rho;
  DynamicKernel kernel = fuse_kernel(rho, block.channel_weights);
  return aggregate(kernel, v_m, block.proj);
}

EffectiveTapStats effective_tap_stats(const AttentionWeights& weights, double eps) {
  const Shape& s = weights.rho.shape();
  const long batch = s[0], heads = s[1], taps = s[2], plane = long(s[3]) * s[4];
  const double* rv = weights.rho.value().data();
  EffectiveTapStats stats;
  double pr_total = 0, active_total = 0;
  long positions = 0;
  for (long b = 0; b < batch; ++b)
    for (long hd = 0; hd < heads; ++hd)
      for (long i = 0; i < plane; ++i) {
        double sum_sq = 0;
        int active = 0;
        for (long j = 0; j < taps; ++j) {
          const double r = rv[((b * heads + hd) * taps + j) * plane + i];
          sum_sq += r * r;
          if (r > eps) ++active;
        }
        pr_total += sum_sq > 0 ? 1.0 / sum_sq : 0.0;
        active_total += active;
        stats.max_active_taps = std::max(stats.max_active_taps, active);
        ++positions;
      }
  stats.mean_participation_ratio = pr_total / double(positions);
  stats.mean_active_taps = active_total / double(positions);
  return stats;
}

OpCost count_flops_params(int channels, int heads, int tap_count, int height, int width) {
  if (channels < 1 || heads < 1 || channels % heads != 0 || tap_count < 1 || height < 1 ||
      width < 1)
    throw std::invalid_argument("count_flops_params: degenerate configuration");
  const std::uint64_t c = channels, u = tap_count, h = heads;
  const std::uint64_t plane = std::uint64_t(height) * width;

  OpCost cost;
  // Multiply-adds per forward pass of one block.
  cost.flops += 2 * c * c * 9 * plane;  // offset conv1 (2C -> C, 3x3)
  cost.flops += 2 * u * c * 9 * plane;  // offset conv2 (C -> 2U, 3x3)
  cost.flops += 3 * c * c * plane;      // q/k/v 1x1 projections
  cost.flops += 2 * 4 * c * u * plane;  // bilinear sampling of K and V
  cost.flops += c * u * plane;          // dot-product logits over all heads
  cost.flops += 3 * h * u * plane;      // softmax (exp, accumulate, divide)
  cost.flops += c * u * plane;          // weighted tap sums
  cost.flops += c * plane;              // channel weighting
  cost.flops += c * c * plane;          // output projection

  cost.params += 4 * (c * c + c);            // q/k/v/out projections
  cost.params += c;                          // channel weights
  cost.params += c * 2 * c * 9 + c;          // offset conv1
  cost.params += 2 * u * c * 9 + 2 * u;      // offset conv2 (the only U-dependent part)
  return cost;
}

void export_attention_csv(const AttentionWeights& weights,
                          const std::vector<std::pair<int, int>>& pixels, std::ostream& out) {
  const Shape& s = weights.rho.shape();
  out << "b,head,tap,y,x,weight\n";
  for (const auto& [y, x] : pixels) {
    if (y < 0 || y >= s[3] || x < 0 || x >= s[4])
      throw std::invalid_argument("export_attention_csv: pixel (" + std::to_string(y) + "," +
                                  std::to_string(x) + ") outside " + shape_str(s));
    for (int b = 0; b < s[0]; ++b)
      for (int hd = 0; hd < s[1]; ++hd)
        for (int j = 0; j < s[2]; ++j)
          out << b << ',' << hd << ',' << j << ',' << y << ',' << x << ','
              << weights.rho.at({b, hd, j, y, x}) << '\n';
  }
}

}  // namespace dysk

#pragma once

#include "dysk/sampling.hpp"

#include <cstdint>
#include <iosfwd>
#include <tuple>
#include <utility>

namespace dysk {

// 1x1 projections for queries/keys/values plus the output projection, all
// C -> C, with the multi-head split d = C/h.
struct QKVProjection {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  int channels = 0;
  int heads = 0;
  int head_dim() const { return channels / heads; }
};

QKVProjection make_qkv_projection(int channels, int heads, Rng& rng, ParamStore& params,
                                  const std::string& prefix);

// Q from the first map, K and V from the second.
std::tuple<Tensor, Tensor, Tensor> project_qkv(const Tensor& feat_a, const Tensor& feat_b,
                                               const QKVProjection& proj);

// Lossless head views; channel c maps to (k, head) with c = k*heads + head.
Tensor to_heads(const Tensor& t, int heads);         // B x C x H x W -> B x d x h x H x W
Tensor to_heads_tapped(const Tensor& t, int heads);  // B x C x U x H x W -> B x d x h x U x H x W
Tensor from_heads(const Tensor& t);                  // inverse of to_heads

// One normalized distribution over taps per (batch, head, position).
struct AttentionWeights {
  Tensor rho;  // B x h x U x H x W
  int tap_count() const { return rho.shape()[2]; }
  int heads() const { return rho.shape()[1]; }
};

// Scaled dot-product logits over the sampled taps, softmax-normalized.
AttentionWeights point_attention(const Tensor& query_heads, const Tensor& key_heads_tapped);

// Per-position kernel factored into spatial attention and shared channel
// weights; the fused view is their outer product.
struct DynamicKernel {
  AttentionWeights spatial;
  Tensor channel;  // 1 x C, shared across positions
};

DynamicKernel fuse_kernel(const AttentionWeights& spatial, const Tensor& channel_weights);

// Fused kernel entry theta(j, c) at one position (test/inspection view).
double fused_kernel_weight(const DynamicKernel& kernel, int batch, int tap, int channel, int y,
                           int x);

// Weighted tap sums per head, recombined across heads, scaled by the channel
// weights, and passed through the output projection.
Tensor aggregate(const DynamicKernel& kernel, const Tensor& sampled_values,
                 const QKVProjection& proj);

// One dynamic stream block: offset-deformed sampling plus point attention
// fused into a per-position kernel.
struct DsbBlock {
  QKVProjection proj;
  OffsetNet offset_net;
  Tensor channel_weights;
  BaseWindow window;
};

DsbBlock make_dsb_block(int channels, int heads, const BaseWindow& window, Rng& rng,
                        ParamStore& params, const std::string& prefix);

// Full block: project -> predict offsets -> deform -> sample -> attend ->
// fuse -> aggregate. Optionally reports the attention weights.
Tensor dsb_forward(const Tensor& feat_a, const Tensor& feat_b, const DsbBlock& block,
                   AttentionWeights* attention_out = nullptr);

// Participation statistics of the attention distributions: how many taps
// carry weight above eps, and the 1/sum(rho^2) effective tap count.
struct EffectiveTapStats {
  double mean_participation_ratio = 0;
  double mean_active_taps = 0;
  int max_active_taps = 0;
};
EffectiveTapStats effective_tap_stats(const AttentionWeights& weights, double eps = 1e-3);

// Analytic multiply-add and parameter counts for one block configuration.
struct OpCost {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};
OpCost count_flops_params(int channels, int heads, int tap_count, int height, int width);

// CSV dump "b,head,tap,y,x,weight" for the designated (y, x) pixels.
void export_attention_csv(const AttentionWeights& weights,
                          const std::vector<std::pair<int, int>>& pixels, std::ostream& out);

}  // namespace dysk

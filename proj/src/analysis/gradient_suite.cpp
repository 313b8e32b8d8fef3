#include "styleswin/gradient_suite.hpp"

#include "styleswin/discriminator.hpp"
#include "styleswin/generator.hpp"
#include "styleswin/training.hpp"

namespace styleswin {

namespace {

constexpr double kPrimitiveTol = 1e-4;
constexpr double kCompositeTol = 1e-3;

Tensor random(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return randn(shape, rng, scale);
}

/// Fixed random contraction so every output element reaches the gradient.
Tensor contract(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, random(y.shape(), seed)));
}

/// Replaces small initial weights by O(scale) values so attention and style
/// paths are far from their near-linear regime.
void randomize(const ParamList& params, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (const auto& [name, t] : params) {
    for (double& v : Tensor(t).mutable_data()) v = scale * rng.normal();
  }
}

GeneratorConfig micro_generator(StyleVariant style) {
  GeneratorConfig c;
  c.start_size = 4;
  c.target_size = 8;
  c.scales = {{8, 2, 2}, {4, 4, 2}};
  c.style = style;
  c.z_dim = 4;
  c.w_dim = 4;
  c.mapping_depth = 2;
  c.mlp_ratio = 2.0;
  c.spe_divisor = 4.0;
  c.style_tokens = 2;
  return c;
}

DiscriminatorConfig micro_discriminator(DiscriminatorKind kind) {
  DiscriminatorConfig c;
  c.kind = kind;
  c.image_size = 8;
  c.channels = {4, 6, 8};
  c.patch_stages = 1;
  return c;
}

/// Zero-initialized biases put zero-padded regions exactly on leaky-ReLU's
/// kink, where central differences average the two slopes.
void offset_biases(const ParamList& params, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [name, t] : params) {
    if (name.ends_with("bias"))
      for (double& v : Tensor(t).mutable_data()) v = 0.1 * rng.normal();
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(
    const std::function<void(const GradSuiteEntry&)>& on_entry) {
  std::vector<GradSuiteEntry> out;
  auto check = [&](const std::string& name, bool composite, const std::function<Tensor()>& f,
                   const std::vector<Tensor>& params, std::size_t max_elements = 0) {
    GradSuiteEntry e;
    e.name = name;
    e.composite = composite;
    e.tolerance = composite ? kCompositeTol : kPrimitiveTol;
    e.result = finite_diff_check(f, params, 1e-5, max_elements);
    if (on_entry) on_entry(e);
    out.push_back(std::move(e));
  };
  auto primitive = [&](const std::string& name, const std::function<Tensor()>& f,
                       const std::vector<Tensor>& params) { check(name, false, f, params); };

  // Elementwise, reductions and layout.
  const Tensor a = random({2, 3, 4}, 1);
  const Tensor b = random({3, 1}, 2);
  const Tensor pos = add_scalar(abs(random({2, 3, 4}, 3)), 0.5).detach();
  primitive("add", [&] { return contract(add(a, b)); }, {a, b});
  primitive("sub", [&] { return contract(sub(b, a)); }, {a, b});
  primitive("mul", [&] { return contract(mul(a, b)); }, {a, b});
  primitive("div", [&] { return contract(div(a, add_scalar(square(b), 1.0))); }, {a, b});
  primitive("add_scalar", [&] { return contract(add_scalar(a, 0.7)); }, {a});
  primitive("mul_scalar", [&] { return contract(mul_scalar(a, -1.3)); }, {a});
  primitive("neg", [&] { return contract(neg(a)); }, {a});
  primitive("exp", [&] { return contract(exp(a)); }, {a});
  primitive("log", [&] { return contract(log(pos)); }, {pos});
  primitive("pow", [&] { return contract(pow(pos, -0.5)); }, {pos});
  primitive("sqrt", [&] { return contract(sqrt(pos)); }, {pos});
  primitive("square", [&] { return contract(square(a)); }, {a});
  primitive("abs", [&] { return contract(abs(a)); }, {a});
  primitive("tanh", [&] { return contract(tanh(a)); }, {a});
  primitive("sigmoid", [&] { return contract(sigmoid(a)); }, {a});
  primitive("softplus", [&] { return contract(softplus(a)); }, {a});
  primitive("leaky_relu", [&] { return contract(leaky_relu(a, 0.2)); }, {a});
  primitive("gelu", [&] { return contract(gelu(a)); }, {a});
  primitive("sum", [&] { return mul_scalar(sum(square(a)), 0.5); }, {a});
  primitive("sum_axes", [&] { return contract(sum(a, {0, 2})); }, {a});
  primitive("mean", [&] { return mean(square(a)); }, {a});
  primitive("mean_axes", [&] { return contract(mean(a, {1}, true)); }, {a});
  primitive("sum_to", [&] { return contract(sum_to(a, {3, 1})); }, {a});
  primitive("broadcast_to", [&] { return contract(broadcast_to(b, {2, 3, 4})); }, {b});
  primitive("reshape", [&] { return contract(reshape(a, {4, 6})); }, {a});
  primitive("permute", [&] { return contract(permute(a, {2, 0, 1})); }, {a});
  primitive("transpose", [&] { return contract(transpose(a, 0, 2)); }, {a});
  primitive("concat", [&] { return contract(concat({a, mul_scalar(a, 2.0)}, 1)); }, {a});
  primitive("slice", [&] { return contract(slice(a, 2, 1, 3)); }, {a});
  primitive("pad_slice", [&] { return contract(pad_slice(a, 1, 2, 6)); }, {a});

  // Linear algebra and gathers.
  const Tensor m1 = random({2, 3, 4}, 4);
  const Tensor m2 = random({4, 5}, 5);
  const Tensor m3 = random({2, 5, 4}, 6);
  primitive("matmul", [&] { return contract(matmul(m1, m2)); }, {m1, m2});
  primitive("matmul_t", [&] { return contract(matmul_t(m1, m3, false, true)); }, {m1, m3});
  const Tensor table = random({5, 2}, 7);
  const std::vector<std::int64_t> idx = {4, 0, 0, 3, 1};
  primitive("index_select", [&] { return contract(index_select(table, idx)); }, {table});
  primitive("index_add", [&] { return contract(index_add(table, idx, 6)); }, {table});

  // Neural-net kernels.
  const Tensor x = random({2, 4, 4, 3}, 8);
  const Tensor gain = random({3}, 9), bias = random({3}, 10);
  primitive("softmax", [&] { return contract(softmax(a, 1)); }, {a});
  primitive("normalize", [&] { return contract(normalize(x, {1, 2})); }, {x});
  primitive("layer_norm", [&] { return contract(layer_norm(x, gain, bias)); }, {x, gain, bias});
  primitive("instance_stats", [&] {
    const auto s = instance_stats(x);
    return add(contract(s.mean, 11), contract(s.std, 12));
  }, {x});
  primitive("upsample_bilinear2x", [&] { return contract(upsample_bilinear2x(x)); }, {x});
  const Tensor big = random({2, 8, 8, 3}, 13);
  primitive("upsample_bilinear2x_adjoint", [&] { return contract(upsample_bilinear2x_adjoint(big)); },
            {big});
  primitive("unfold", [&] { return contract(unfold(x, 3, 1, 1)); }, {x});
  const Tensor cols = random({2, 2, 2, 4 * 4 * 3}, 14);
  primitive("fold", [&] { return contract(fold(cols, {2, 4, 4, 3}, 4, 2, 1)); }, {cols});
  primitive("avg_pool2x", [&] { return contract(avg_pool2x(x)); }, {x});
  primitive("roll2d", [&] { return contract(roll2d(x, 1, -3)); }, {x});

  // Window layout.
  const WindowGrid grid = WindowGrid::make(4, 4, 2);
  primitive("window_partition", [&] { return contract(window_partition(x, grid)); }, {x});
  const Tensor wins = random({8, 2, 2, 3}, 15);
  primitive("window_reverse", [&] { return contract(window_reverse(wins, grid)); }, {wins});
  primitive("cyclic_shift", [&] { return contract(cyclic_shift(x, 1)); }, {x});

  // Discriminator and loss primitives.
  primitive("haar_dwt", [&] { return contract(haar_dwt_packed(x)); }, {x});
  const Tensor packed = random({1, 2, 2, 8}, 16);
  primitive("haar_idwt", [&] { return contract(haar_idwt_packed(packed)); }, {packed});
  Rng sn_rng(17);
  const Tensor sn_w = random({6, 4}, 18);
  SpectralNorm sn = SpectralNorm::init(6, 4, sn_rng);
  for (int i = 0; i < 5; ++i) sn.power_iteration(sn_w);
  primitive("spectral_normalize", [&] { return contract(sn.normalize(sn_w)); }, {sn_w});
  primitive("tv_loss", [&] { return tv_loss(x); }, {x});
  const Tensor rl = random({5}, 19), fl = random({5}, 20);
  primitive("loss_d", [&] { return loss_d(rl, fl); }, {rl, fl});
  primitive("loss_g", [&] { return loss_g(fl); }, {fl});

  // Composite blocks, with weights scaled up to O(0.3).
  Rng rng(21);
  const Tensor tokens = random({2, 4, 4, 8}, 22);
  AttentionParams attn = AttentionParams::init(8, 2, 2, rng);
  ParamList attn_params;
  attn.collect("attn", attn_params);
  randomize(attn_params, 23, 0.3);
  std::vector<Tensor> attn_leaves = tensors_of(attn_params);
  attn_leaves.push_back(tokens);
  check("window_attention", true,
        [&] { return contract(window_attention(window_partition(tokens, grid), attn, true,
                                               attn.all_heads())); },
        attn_leaves);
  check("window_msa_shifted", true, [&] { return contract(window_msa(tokens, attn, true, true)); },
        attn_leaves);
  check("double_attention", true, [&] { return contract(double_attention(tokens, attn, true)); },
        attn_leaves);

  TransformerBlockParams blk_a = TransformerBlockParams::init(8, 2, 2, 2.0, rng);
  TransformerBlockParams blk_b = TransformerBlockParams::init(8, 2, 2, 2.0, rng);
  ParamList blk_params;
  blk_a.collect("a", blk_params);
  blk_b.collect("b", blk_params);
  randomize(blk_params, 24, 0.3);
  std::vector<Tensor> blk_leaves = tensors_of(blk_params);
  blk_leaves.push_back(tokens);
  check("transformer_block_double", true,
        [&] { return contract(transformer_block(tokens, blk_a, AttentionKind::Double, true)); },
        blk_leaves);
  check("swin_block_pair", true, [&] { return contract(swin_block_pair(tokens, blk_a, blk_b)); },
        blk_leaves);

  const Tensor w = random({2, 4}, 25);
  StyleAffine affine = StyleAffine::init(4, 8, true, rng);
  ParamList affine_params;
  affine.collect("style", affine_params);
  randomize(affine_params, 26, 0.3);
  std::vector<Tensor> affine_leaves = tensors_of(affine_params);
  affine_leaves.push_back(tokens);
  affine_leaves.push_back(w);
  check("adain_path", true, [&] {
    const ScaleShift s = affine(w);
    return contract(adain(tokens, s.gamma, s.beta));
  }, affine_leaves);

  const MappingNetwork mapping = MappingNetwork::init(4, 4, 3, rng);
  ParamList mapping_params;
  mapping.collect("map", mapping_params);
  std::vector<Tensor> mapping_leaves = tensors_of(mapping_params);
  mapping_leaves.push_back(w);
  check("mapping_network", true, [&] { return contract(mapping(w)); }, mapping_leaves);

  const Linear mod_layer = Linear::truncated(8, 6, rng, 0.3);
  const Tensor mod_s = add_scalar(abs(random({2, 8}, 27)), 0.5).detach();
  check("modulated_linear", true,
        [&] { return contract(modulated_linear(tokens, mod_s, mod_layer)); },
        {tokens, mod_s, mod_layer.weight, mod_layer.bias});

  CrossAttentionParams cross = CrossAttentionParams::init(8, 2, 2, 4, rng);
  ParamList cross_params;
  cross.collect("cross", cross_params);
  randomize(cross_params, 28, 0.3);
  std::vector<Tensor> cross_leaves = tensors_of(cross_params);
  cross_leaves.push_back(tokens);
  check("cross_attention_style", true,
        [&] { return contract(cross_attention_style(tokens, w, cross)); }, cross_leaves);

  for (auto style : {StyleVariant::AdaIN, StyleVariant::ModulatedMLP}) {
    Rng g_rng(29);
    const Generator g(micro_generator(style), g_rng);
    const Tensor z = random({2, 4}, 30);
    check("generator_" + to_string(style), true, [&] { return contract(g.forward(z)); },
          tensors_of(g.parameters()), 4);
  }

  const Tensor img = random({2, 8, 8, 3}, 31, 0.5);
  for (auto kind : {DiscriminatorKind::Conv, DiscriminatorKind::Wavelet, DiscriminatorKind::Patch}) {
    Rng d_rng(32);
    Discriminator d(micro_discriminator(kind), d_rng);
    offset_biases(d.parameters(), 36);
    d.power_iteration();
    std::vector<Tensor> leaves = tensors_of(d.parameters());
    leaves.push_back(img);
    check("discriminator_" + to_string(kind), true, [&] { return contract(d.forward(img)); },
          leaves, 8);
  }

  // R1 differentiates the input gradient again, w.r.t. D's weights. (In x it
  // is piecewise constant: D is piecewise linear in its input.)
  Rng r1_rng(33);
  Discriminator wavelet(micro_discriminator(DiscriminatorKind::Wavelet), r1_rng);
  offset_biases(wavelet.parameters(), 37);
  wavelet.power_iteration();
  const DiscriminatorFn wavelet_fn = [&](const Tensor& t) { return wavelet.forward(t); };
  std::vector<Tensor> r1_leaves = tensors_of(wavelet.parameters());
  check("r1_penalty_wavelet_weights", true, [&] { return r1_penalty(wavelet_fn, img, 10.0); },
        r1_leaves, 6);

  const Tensor fake = random({2, 8, 8, 3}, 34, 0.5);
  const Rng bcr_rng(35);
  check("bcr_loss_wavelet", true, [&] {
    Rng local = bcr_rng;
    return bcr_loss(wavelet_fn, img, fake, AugmentationSpec{}, 10.0, 10.0, local);
  }, r1_leaves, 6);
  return out;
}

}  // namespace styleswin

#include "vct/model_gradcheck.hpp"

#include <algorithm>

#include "vct/ops.hpp"

namespace vct {

double ModelGradChecks::max_rel_err() const {
  return std::max({rec.max_rel_err, dis_scoped.max_rel_err, dis_nodetach.max_rel_err});
}

bool ModelGradChecks::passed(double tol) const {
  return max_rel_err() < tol && decoder_zero_before_mask && outside_zero_after_mask &&
         nodetach_decoder_nonzero;
}

ExperimentConfig gradcheck_default_config() {
  ExperimentConfig c;
  c.image_size = 16;
  c.patch_size = 8;  // 4 image tokens
  c.dim = 8;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.concepts = 3;
  c.init_std = 0.1;
  c.batch = 4;
  return c;
}

namespace {

bool grads_all_zero(const Parameter<double>& p) {
  for (double v : p.grad.data)
    if (v != 0.0) return false;
  return true;
}

bool is_decoder_param(const std::string& name) {
  return name.rfind("dt.", 0) == 0 || name.rfind("id.", 0) == 0 || name == "queries";
}

}  // namespace

ModelGradChecks run_model_gradchecks(ExperimentConfig cfg, uint64_t seed, int probes_per_param) {
  ModelGradChecks out;
  const double step = 1e-5;
  const int64_t B = cfg.batch;

  Rng data_rng(mix_seed(seed, "gradcheck"));
  Tensor<double> x = Tensor<double>::zeros({B, cfg.image_size * cfg.image_size * 3});
  for (auto& v : x.data) v = data_rng.uniform();
  SwapPlan plan = draw_swap_plan(data_rng, B, cfg.concepts);

  // ---- reconstruction path ----
  {
    cfg.no_detach = false;
    VctModel<double> model(cfg, seed);
    {
      Graph<double> g;
      model.bind(g);
      LossNodes<double> nodes = build_losses(model, g, x, B, plan);
      model.params().zero_grads();
      g.backward(nodes.rec);
    }
    auto rec_fn = [&]() {
      Graph<double> g(false);
      model.bind(g);
      Var X = g.constant(x);
      return g.value(ops::mse(g, model.reconstruct(g, X, B), X))[0];
    };
    Rng probe_rng(mix_seed(seed, "probe", 0));
    out.rec = check_gradients<double>(model.params(), rec_fn, step, probes_per_param, probe_rng);
  }

  // ---- disentangling path, default detach ----
  {
    cfg.no_detach = false;
    VctModel<double> model(cfg, seed);
    Tensor<double> re_in;
    {
      Graph<double> g;
      model.bind(g);
      LossNodes<double> nodes = build_losses(model, g, x, B, plan);
      re_in = nodes.reencode_input;
      model.params().zero_grads();
      g.backward(nodes.dis);
      out.decoder_zero_before_mask = true;
      for (const auto& p : model.params())
        if (is_decoder_param(p.name) && !grads_all_zero(p)) out.decoder_zero_before_mask = false;
      model.params().keep_grads_with_prefix(model.dis_scope());
      out.outside_zero_after_mask = true;
      for (const auto& p : model.params())
        if (!ParameterStore<double>::name_has_prefix(p.name, model.dis_scope()) &&
            !grads_all_zero(p))
          out.outside_zero_after_mask = false;
    }
    // the decoded images are held fixed, matching what the analytic gradient
    // differentiates
    auto dis_fn = [&]() {
      Graph<double> g(false);
      model.bind(g);
      Var c_re = model.encode(g, g.constant(re_in), 2 * B);
      DisTail<double> tail = dis_from_reencoded(g, c_re, plan.slots, B, cfg.concepts);
      return g.value(tail.dis)[0];
    };
    Rng probe_rng(mix_seed(seed, "probe", 1));
    auto scope = model.dis_scope();
    auto in_scope = [scope](const std::string& name) {
      return ParameterStore<double>::name_has_prefix(name, scope);
    };
    out.dis_scoped =
        check_gradients<double>(model.params(), dis_fn, step, probes_per_param, probe_rng, in_scope);
  }

  // ---- disentangling path, detach off ----
  {
    cfg.no_detach = true;
    VctModel<double> model(cfg, seed);
    {
      Graph<double> g;
      model.bind(g);
      LossNodes<double> nodes = build_losses(model, g, x, B, plan);
      model.params().zero_grads();
      g.backward(nodes.dis);
      out.nodetach_decoder_nonzero = false;
      for (const auto& p : model.params())
        if (is_decoder_param(p.name) && !grads_all_zero(p)) out.nodetach_decoder_nonzero = true;
    }
    auto dis_fn = [&]() {
      Graph<double> g(false);
      model.bind(g);
      return build_losses(model, g, x, B, plan).dis_value;
    };
    Rng probe_rng(mix_seed(seed, "probe", 2));
    out.dis_nodetach =
        check_gradients<double>(model.params(), dis_fn, step, probes_per_param, probe_rng);
  }

  return out;
}

}  // namespace vct

#include "biseg/roi_head.hpp"

namespace biseg {

void HeadOptions::validate() const {
  if (coarse_resolution < 1) throw ConfigError("head: coarse resolution must be >= 1");
  if (fine_resolution != 2 * coarse_resolution) {
    throw ConfigError("head: fine resolution " + std::to_string(fine_resolution) + " must be twice the coarse resolution " +
                      std::to_string(coarse_resolution));
  }
}

template <typename T>
RoiHeadTrace<T> roi_head_forward(const RoiHeadInputs<T>& in, const Roi& roi, const HeadOptions& opts) {
  if (!in.set1) throw ConfigError("head: score-map set 1 is required");
  if (opts.use_fusion && !in.set2) throw ConfigError("head: fusion requested without score-map set 2");
  if (opts.use_prior && !in.sem) throw ConfigError("head: prior product requested without a semantic head");
  RoiHeadTrace<T> t;
  const auto& s1 = *in.set1;
  s1.validate();
  t.plan1 = plan_assembly(s1.maps.shape(), s1.k, s1.stride, s1.num_categories, roi, opts.coarse_resolution);
  const auto coarse = gather_likelihood(s1.maps, t.plan1);
  if (opts.use_fusion) {
    const auto& s2 = *in.set2;
    s2.validate();
    t.plan2 = plan_assembly(s2.maps.shape(), s2.k, s2.stride, s2.num_categories, roi, opts.fine_resolution);
    t.likelihood = fuse(coarse, gather_likelihood(s2.maps, t.plan2));
  } else {
    t.likelihood = upsample_likelihood(coarse);
  }
  if (opts.use_prior) {
    t.prior_plan = plan_crop(in.sem->probs.shape(), roi, in.sem->stride, opts.fine_resolution);
    t.prior = apply_crop(in.sem->probs, t.prior_plan);
    t.posterior = bayes_combine(t.prior, t.likelihood);
  } else {
    t.posterior = passthrough_posterior(t.likelihood);
  }
  t.scores = mask_and_score(t.posterior);
  return t;
}

template <typename T>
void roi_head_backward(const RoiHeadTrace<T>& t, const HeadOptions& opts, const BasicRoiScoresGrad<T>& grad,
                       RoiHeadGradSink<T>& sink) {
  const auto g_post = mask_and_score_backward(t.posterior, t.scores, grad);
  BasicRoiLikelihood<T> g_lik;
  if (opts.use_prior) {
    auto g = bayes_combine_backward(t.prior, t.likelihood, g_post);
    scatter_crop_grad(sink.sem_probs, t.prior_plan, g.prior);
    g_lik = std::move(g.likelihood);
  } else {
    g_lik = {g_post.inside, g_post.outside};
  }
  auto [g_coarse, g_fine] = fuse_backward(g_lik, opts.coarse_resolution);
  scatter_likelihood_grad(sink.set1_maps, t.plan1, g_coarse);
  if (opts.use_fusion) scatter_likelihood_grad(sink.set2_maps, t.plan2, g_fine);
}

template RoiHeadTrace<float> roi_head_forward(const RoiHeadInputs<float>&, const Roi&, const HeadOptions&);
template RoiHeadTrace<double> roi_head_forward(const RoiHeadInputs<double>&, const Roi&, const HeadOptions&);
template void roi_head_backward(const RoiHeadTrace<float>&, const HeadOptions&, const BasicRoiScoresGrad<float>&,
                                RoiHeadGradSink<float>&);
template void roi_head_backward(const RoiHeadTrace<double>&, const HeadOptions&, const BasicRoiScoresGrad<double>&,
                                RoiHeadGradSink<double>&);

}  // namespace biseg

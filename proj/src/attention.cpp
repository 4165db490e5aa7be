#include "pararec/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pararec/ctc.hpp"
#include "pararec/errors.hpp"
#include "pararec/ops.hpp"

namespace pararec {

AttentionParams::AttentionParams(int feat_channels, int hidden_dim,
                                 const AttentionConfig& cfg)
    : w_feat({cfg.att_dim, feat_channels}),
      w_cov({cfg.att_dim, cfg.coverage_channels}),
      w_hidden({cfg.att_dim, hidden_dim}),
      score_v({cfg.att_dim}),
      cov_kernel({cfg.coverage_channels, cfg.coverage_kernel}),
      cov_bias({cfg.coverage_channels}),
      end_weight({2, cfg.att_dim + hidden_dim}),
      end_bias({2}),
      grad_w_feat({cfg.att_dim, feat_channels}),
      grad_w_cov({cfg.att_dim, cfg.coverage_channels}),
      grad_w_hidden({cfg.att_dim, hidden_dim}),
      grad_score_v({cfg.att_dim}),
      grad_cov_kernel({cfg.coverage_channels, cfg.coverage_kernel}),
      grad_cov_bias({cfg.coverage_channels}),
      grad_end_weight({2, cfg.att_dim + hidden_dim}),
      grad_end_bias({2}) {
  if (cfg.coverage_kernel % 2 == 0)
    throw std::invalid_argument("attention: coverage kernel must be odd");
}

void AttentionParams::init(Rng& rng) {
  init_uniform_fan(w_feat, feat_channels(), att_dim(), rng);
  init_uniform_fan(w_cov, coverage_channels(), att_dim(), rng);
  init_uniform_fan(w_hidden, hidden_dim(), att_dim(), rng);
  init_uniform_fan(score_v, att_dim(), 1, rng);
  init_uniform_fan(cov_kernel, cov_kernel.dim(1), coverage_channels(), rng);
  cov_bias.fill(0);
  init_uniform_fan(end_weight, end_weight.dim(1), 2, rng);
  end_bias.fill(0);
}

void AttentionParams::collect_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w_feat", w_feat, grad_w_feat);
  ps.add(prefix + ".w_cov", w_cov, grad_w_cov);
  ps.add(prefix + ".w_hidden", w_hidden, grad_w_hidden);
  ps.add(prefix + ".score_v", score_v, grad_score_v);
  ps.add(prefix + ".cov_kernel", cov_kernel, grad_cov_kernel);
  ps.add(prefix + ".cov_bias", cov_bias, grad_cov_bias);
  ps.add(prefix + ".end_weight", end_weight, grad_end_weight);
  ps.add(prefix + ".end_bias", end_bias, grad_end_bias);
}

Tensor line_from_weights(const Tensor& features,
                         const std::vector<real>& beta) {
  const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (static_cast<int>(beta.size()) != h)
    throw std::invalid_argument("line_from_weights: weight count " +
                                std::to_string(beta.size()) + " != rows " +
                                std::to_string(h));
  Tensor line({w, c});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i) {
      const real b = beta[static_cast<size_t>(i)];
      if (b == real(0)) continue;
      const real* frow =
          features.data() + (static_cast<size_t>(ch) * h + i) * w;
      for (int x = 0; x < w; ++x) line.at(x, ch) += b * frow[x];
    }
  }
  return line;
}

ParagraphAttention::ParagraphAttention(const Tensor& features,
                                       const AttentionParams& params)
    : features_(&features), params_(&params) {
  if (features.rank() != 3 ||
      features.dim(0) != params.feat_channels())
    throw std::invalid_argument("attention: features must be [C,H,W] with C=" +
                                std::to_string(params.feat_channels()) +
                                ", got " + features.shape_str());
  const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
  fprime_ = Tensor({h, c});
  const real inv_w = real(1) / static_cast<real>(w);
  for (int i = 0; i < h; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const real* frow =
          features.data() + (static_cast<size_t>(ch) * h + i) * w;
      real s = 0;
      for (int x = 0; x < w; ++x) s += frow[x];
      fprime_.at(i, ch) = s * inv_w;
    }
  coverage_.assign(static_cast<size_t>(h), real(0));
  feature_grad_ = Tensor(features.shape());
  coverage_grad_.assign(static_cast<size_t>(h), real(0));
}

AttentionStepOutput ParagraphAttention::step(const std::vector<real>& h_prev) {
  const AttentionParams& p = *params_;
  const int h = features_->dim(1);
  const int a = p.att_dim();
  const int k = p.coverage_channels();
  const int ker = p.cov_kernel.dim(1);
  const int off = ker / 2;
  if (static_cast<int>(h_prev.size()) != p.hidden_dim())
    throw std::invalid_argument("attention: h_prev dimension mismatch");

  StepCache cache;
  cache.coverage = coverage_;
  cache.h_prev = h_prev;

  // Location context: 1-d convolution over the running coverage vector.
  cache.context = Tensor({h, k});
  for (int i = 0; i < h; ++i) {
    for (int f = 0; f < k; ++f) {
      real s = p.cov_bias[static_cast<size_t>(f)];
      for (int u = 0; u < ker; ++u) {
        const int src = i + u - off;
        if (src < 0 || src >= h) continue;
        s += p.cov_kernel.at(f, u) * coverage_[static_cast<size_t>(src)];
      }
      cache.context.at(i, f) = s;
    }
  }

  // Multiscale score per row, one scalar after the v projection.
  const std::vector<real> hidden_proj = matvec(p.w_hidden, h_prev);
  cache.scores = Tensor({h, a});
  std::vector<real> row_scores(static_cast<size_t>(h));
  for (int i = 0; i < h; ++i) {
    real e = 0;
    for (int d = 0; d < a; ++d) {
      real z = hidden_proj[static_cast<size_t>(d)];
      const real* wf = p.w_feat.data() + static_cast<size_t>(d) * p.feat_channels();
      const real* fp = fprime_.data() + static_cast<size_t>(i) * p.feat_channels();
      for (int ch = 0; ch < p.feat_channels(); ++ch) z += wf[ch] * fp[ch];
      const real* wc = p.w_cov.data() + static_cast<size_t>(d) * k;
      const real* ctx = cache.context.data() + static_cast<size_t>(i) * k;
      for (int f = 0; f < k; ++f) z += wc[f] * ctx[f];
      const real s = std::tanh(z);
      cache.scores.at(i, d) = s;
      e += p.score_v[static_cast<size_t>(d)] * s;
    }
    row_scores[static_cast<size_t>(i)] = e;
    if (!std::isfinite(e))
      throw NumericError("attention.step" + std::to_string(cache_.size() + 1),
                         "non-finite row score");
  }

  // Softmax over rows.
  real mx = row_scores[0];
  for (real v : row_scores) mx = std::max(mx, v);
  real sum = 0;
  cache.beta.assign(static_cast<size_t>(h), real(0));
  for (int i = 0; i < h; ++i) {
    cache.beta[static_cast<size_t>(i)] = std::exp(row_scores[static_cast<size_t>(i)] - mx);
    sum += cache.beta[static_cast<size_t>(i)];
  }
  for (auto& b : cache.beta) b /= sum;

  AttentionStepOutput out;
  out.beta = cache.beta;
  out.line = line_from_weights(*features_, cache.beta);

  // Stop/continue head over the max-pooled scores and the carried state.
  cache.pool_argmax.assign(static_cast<size_t>(a), 0);
  std::vector<real> u(static_cast<size_t>(a + p.hidden_dim()));
  for (int d = 0; d < a; ++d) {
    int best = 0;
    real bv = cache.scores.at(0, d);
    for (int i = 1; i < h; ++i)
      if (cache.scores.at(i, d) > bv) {
        bv = cache.scores.at(i, d);
        best = i;
      }
    cache.pool_argmax[static_cast<size_t>(d)] = best;
    u[static_cast<size_t>(d)] = bv;
  }
  for (int d = 0; d < p.hidden_dim(); ++d)
    u[static_cast<size_t>(a + d)] = h_prev[static_cast<size_t>(d)];
  std::vector<real> logits = matvec(p.end_weight, u);
  logits[0] += p.end_bias[0];
  logits[1] += p.end_bias[1];
  const real m = std::max(logits[0], logits[1]);
  const real e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  out.decision = {e0 / (e0 + e1), e1 / (e0 + e1)};
  cache.decision = out.decision;

  for (int i = 0; i < h; ++i)
    coverage_[static_cast<size_t>(i)] += cache.beta[static_cast<size_t>(i)];
  cache_.push_back(std::move(cache));
  back_cursor_ = static_cast<int>(cache_.size()) - 1;
  return out;
}

std::vector<real> ParagraphAttention::backward_step(
    const Tensor* grad_line, const std::array<real, 2>& grad_decision_logits,
    AttentionParams& params) {
  if (back_cursor_ < 0)
    throw std::logic_error("attention: backward_step without matching step");
  const StepCache& cache = cache_[static_cast<size_t>(back_cursor_)];
  --back_cursor_;

  const Tensor& feats = *features_;
  const int c = feats.dim(0), h = feats.dim(1), w = feats.dim(2);
  const int a = params.att_dim();
  const int k = params.coverage_channels();
  const int ker = params.cov_kernel.dim(1);
  const int off = ker / 2;
  const int hidden = params.hidden_dim();

  // d(loss)/d(beta): directly through the line output, plus whatever later
  // steps propagated into the running coverage (coverage_{t+1} = coverage_t
  // + beta_t).
  std::vector<real> gbeta = coverage_grad_;
  if (grad_line) {
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i) {
        const real* frow = feats.data() + (static_cast<size_t>(ch) * h + i) * w;
        real s = 0;
        for (int x = 0; x < w; ++x) s += grad_line->at(x, ch) * frow[x];
        gbeta[static_cast<size_t>(i)] += s;
      }
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i) {
        const real b = cache.beta[static_cast<size_t>(i)];
        if (b == real(0)) continue;
        real* grow = feature_grad_.data() + (static_cast<size_t>(ch) * h + i) * w;
        for (int x = 0; x < w; ++x) grow[x] += b * grad_line->at(x, ch);
      }
  }

  // Softmax backward over rows.
  real dot = 0;
  for (int i = 0; i < h; ++i)
    dot += gbeta[static_cast<size_t>(i)] * cache.beta[static_cast<size_t>(i)];
  std::vector<real> gscore_row(static_cast<size_t>(h));
  for (int i = 0; i < h; ++i)
    gscore_row[static_cast<size_t>(i)] =
        cache.beta[static_cast<size_t>(i)] *
        (gbeta[static_cast<size_t>(i)] - dot);

  // Through the score vector v and the stop/continue head into s.
  Tensor gs({h, a});
  for (int i = 0; i < h; ++i) {
    const real gi = gscore_row[static_cast<size_t>(i)];
    for (int d = 0; d < a; ++d) {
      gs.at(i, d) = gi * params.score_v[static_cast<size_t>(d)];
      params.grad_score_v[static_cast<size_t>(d)] += gi * cache.scores.at(i, d);
    }
  }

  std::vector<real> u(static_cast<size_t>(a + hidden));
  for (int d = 0; d < a; ++d)
    u[static_cast<size_t>(d)] = cache.scores.at(cache.pool_argmax[static_cast<size_t>(d)], d);
  for (int d = 0; d < hidden; ++d)
    u[static_cast<size_t>(a + d)] = cache.h_prev[static_cast<size_t>(d)];
  const std::vector<real> gl = {grad_decision_logits[0], grad_decision_logits[1]};
  outer_acc(params.grad_end_weight, gl, u);
  params.grad_end_bias[0] += gl[0];
  params.grad_end_bias[1] += gl[1];
  const std::vector<real> gu = matvec_t(params.end_weight, gl);
  for (int d = 0; d < a; ++d)
    gs.at(cache.pool_argmax[static_cast<size_t>(d)], d) += gu[static_cast<size_t>(d)];

  std::vector<real> gh_prev(static_cast<size_t>(hidden), real(0));
  for (int d = 0; d < hidden; ++d)
    gh_prev[static_cast<size_t>(d)] = gu[static_cast<size_t>(a + d)];

  // tanh backward, then the three projection paths.
  std::vector<real> gz(static_cast<size_t>(a));
  std::vector<real> fp_row(static_cast<size_t>(c));
  std::vector<real> ctx_row(static_cast<size_t>(k));
  Tensor gcontext({h, k});
  for (int i = 0; i < h; ++i) {
    for (int d = 0; d < a; ++d) {
      const real s = cache.scores.at(i, d);
      gz[static_cast<size_t>(d)] = gs.at(i, d) * (real(1) - s * s);
    }
    for (int ch = 0; ch < c; ++ch) fp_row[static_cast<size_t>(ch)] = fprime_.at(i, ch);
    for (int f = 0; f < k; ++f) ctx_row[static_cast<size_t>(f)] = cache.context.at(i, f);
    outer_acc(params.grad_w_feat, gz, fp_row);
    outer_acc(params.grad_w_cov, gz, ctx_row);
    outer_acc(params.grad_w_hidden, gz, cache.h_prev);

    const std::vector<real> gfp = matvec_t(params.w_feat, gz);
    const real inv_w = real(1) / static_cast<real>(w);
    for (int ch = 0; ch < c; ++ch) {
      const real g = gfp[static_cast<size_t>(ch)] * inv_w;
      if (g == real(0)) continue;
      real* grow = feature_grad_.data() + (static_cast<size_t>(ch) * h + i) * w;
      for (int x = 0; x < w; ++x) grow[x] += g;
    }
    const std::vector<real> gctx = matvec_t(params.w_cov, gz);
    for (int f = 0; f < k; ++f) gcontext.at(i, f) = gctx[static_cast<size_t>(f)];
    const std::vector<real> ghp = matvec_t(params.w_hidden, gz);
    for (int d = 0; d < hidden; ++d)
      gh_prev[static_cast<size_t>(d)] += ghp[static_cast<size_t>(d)];
  }

  // Coverage conv backward; the input gradient joins the running coverage
  // accumulator that earlier steps will consume.
  for (int i = 0; i < h; ++i) {
    for (int f = 0; f < k; ++f) {
      const real g = gcontext.at(i, f);
      if (g == real(0)) continue;
      params.grad_cov_bias[static_cast<size_t>(f)] += g;
      for (int uu = 0; uu < ker; ++uu) {
        const int src = i + uu - off;
        if (src < 0 || src >= h) continue;
        params.grad_cov_kernel.at(f, uu) +=
            g * cache.coverage[static_cast<size_t>(src)];
        coverage_grad_[static_cast<size_t>(src)] +=
            g * params.cov_kernel.at(f, uu);
      }
    }
  }
  return gh_prev;
}

JointLossResult joint_loss(const std::vector<Tensor>& line_probs,
                           const std::vector<std::vector<int>>& line_targets,
                           const std::vector<std::array<real, 2>>& decisions,
                           real lambda) {
  const std::size_t lines = line_targets.size();
  if (lines == 0)
    throw std::invalid_argument("joint_loss: paragraph must have at least one line");
  if (line_probs.size() != lines)
    throw std::invalid_argument("joint_loss: " + std::to_string(line_probs.size()) +
                                " predictions vs " + std::to_string(lines) +
                                " targets");
  if (decisions.size() != lines + 1)
    throw std::invalid_argument("joint_loss: need " + std::to_string(lines + 1) +
                                " decisions, got " + std::to_string(decisions.size()));

  JointLossResult result;
  for (std::size_t i = 0; i < lines; ++i) {
    CtcResult ctc = ctc_loss(line_probs[i], line_targets[i]);
    if (!ctc.feasible) {
      result.feasible = false;
      result.infeasible_line = static_cast<int>(i);
      return result;
    }
    result.ctc_sum += ctc.loss;
    result.line_logit_grads.push_back(std::move(ctc.logit_grad));
  }
  for (std::size_t s = 0; s <= lines; ++s) {
    const int target = s < lines ? kContinueClass : kStopClass;
    const real p = decisions[s][static_cast<size_t>(target)];
    result.ce_sum += -std::log(std::max(p, real(1e-300)));
    std::array<real, 2> g = {lambda * decisions[s][0], lambda * decisions[s][1]};
    g[static_cast<size_t>(target)] -= lambda;
    result.decision_logit_grads.push_back(g);
  }
  result.total = result.ctc_sum + lambda * result.ce_sum;
  return result;
}

std::vector<AttentionStepOutput> run_paragraph_train(ParagraphAttention& att,
                                                     int line_count,
                                                     int hidden_dim,
                                                     const LineProcessor& fn) {
  if (line_count < 1)
    throw std::invalid_argument("run_paragraph_train: need at least one line");
  std::vector<AttentionStepOutput> steps;
  std::vector<real> h(static_cast<size_t>(hidden_dim), real(0));
  for (int t = 0; t <= line_count; ++t) {
    AttentionStepOutput out = att.step(h);
    if (t < line_count) h = fn(t, out.line);
    steps.push_back(std::move(out));
  }
  return steps;
}

std::vector<AttentionStepOutput> run_paragraph_infer(ParagraphAttention& att,
                                                     int max_line_length,
                                                     int hidden_dim,
                                                     const LineProcessor& fn) {
  if (max_line_length < 1)
    throw std::invalid_argument("run_paragraph_infer: max_line_length must be >= 1");
  std::vector<AttentionStepOutput> steps;
  std::vector<real> h(static_cast<size_t>(hidden_dim), real(0));
  for (int t = 0; t < max_line_length; ++t) {
    AttentionStepOutput out = att.step(h);
    if (out.decision[kStopClass] > out.decision[kContinueClass]) break;
    h = fn(t, out.line);
    steps.push_back(std::move(out));
  }
  return steps;
}

}  // namespace pararec

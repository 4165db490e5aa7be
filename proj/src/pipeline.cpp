#include "pararec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pararec/ctc.hpp"
#include "pararec/errors.hpp"

namespace pararec {

Model::Model(const RunConfig& cfg, const std::u32string& alphabet)
    : config_(cfg),
      alphabet_(alphabet),
      encoder_(1, cfg.encoder_config()),
      attention_(cfg.encoder_config().output_channels(), cfg.hidden_size,
                 cfg.attention_config()),
      lstm_(cfg.encoder_config().output_channels(), cfg.hidden_size),
      projection_(cfg.hidden_size, static_cast<int>(alphabet.size()) + 1) {
  if (alphabet.empty()) throw DataError("model: empty alphabet");
  collect_params(params_);
}

void Model::init_params(Rng& rng) {
  encoder_.init(rng);
  attention_.init(rng);
  lstm_.init(rng);
  projection_.init(rng);
}

void Model::collect_params(ParamSet& ps) {
  encoder_.collect_params(ps, "encoder");
  attention_.collect_params(ps, "attention");
  lstm_.collect_params(ps, "lstm");
  projection_.collect_params(ps, "projection");
}

Model::SampleLoss Model::run_sample(const ParagraphSample& sample,
                                    Rng& dropout_rng, bool use_dropout,
                                    bool do_backward) {
  const int line_count = static_cast<int>(sample.lines.size());
  if (line_count < 1) throw DataError(sample.id + ": paragraph has no lines");

  std::vector<std::vector<int>> targets;
  for (const std::string& line : sample.lines)
    targets.push_back(encode_text(alphabet_, line));

  const Tensor features = encoder_.forward(sample.image, use_dropout, dropout_rng);

  ParagraphAttention attention_run(features, attention_);
  std::vector<LstmLineRunner> runners(static_cast<size_t>(line_count));
  std::vector<Tensor> logits(static_cast<size_t>(line_count));
  std::vector<Tensor> probs(static_cast<size_t>(line_count));
  std::vector<AttentionStepOutput> steps;
  LstmState state = LstmState::zero(config_.hidden_size);

  for (int t = 0; t <= line_count; ++t) {
    steps.push_back(attention_run.step(state.h));
    if (t < line_count) {
      const Tensor& hidden =
          runners[static_cast<size_t>(t)].forward(steps.back().line, state, lstm_);
      logits[static_cast<size_t>(t)] = projection_.forward(hidden);
      probs[static_cast<size_t>(t)] =
          prob_matrix_from_logits(logits[static_cast<size_t>(t)]);
      if (!probs[static_cast<size_t>(t)].all_finite())
        throw NumericError("decoder.line" + std::to_string(t + 1),
                           "non-finite posterior");
      state = runners[static_cast<size_t>(t)].final_state();
    }
  }

  std::vector<std::array<real, 2>> decisions;
  for (const auto& s : steps) decisions.push_back(s.decision);
  const JointLossResult jl = joint_loss(probs, targets, decisions, config_.lambda);

  SampleLoss loss;
  if (!jl.feasible) {
    loss.skipped = true;
    return loss;
  }
  loss.total = jl.total;
  loss.ctc = jl.ctc_sum;
  loss.ce = jl.ce_sum;
  if (!do_backward) return loss;

  // Reverse pass. grad_state[t] collects the gradient w.r.t. the carried
  // (h,c) after line t, fed by line t+1's init and attention step t+1's
  // h_prev use.
  std::vector<LstmState> grad_state(static_cast<size_t>(line_count),
                                    LstmState::zero(config_.hidden_size));
  for (int t = line_count; t >= 0; --t) {
    Tensor grad_line;
    const Tensor* grad_line_ptr = nullptr;
    if (t < line_count) {
      Tensor ghidden = projection_.backward(
          jl.line_logit_grads[static_cast<size_t>(t)],
          runners[static_cast<size_t>(t)].hidden_seq());
      LstmInputGrads lg = runners[static_cast<size_t>(t)].backward(
          ghidden, grad_state[static_cast<size_t>(t)], lstm_);
      if (t > 0) {
        LstmState& dst = grad_state[static_cast<size_t>(t - 1)];
        for (std::size_t j = 0; j < dst.h.size(); ++j) {
          dst.h[j] += lg.grad_init.h[j];
          dst.c[j] += lg.grad_init.c[j];
        }
      }
      grad_line = std::move(lg.grad_input);
      grad_line_ptr = &grad_line;
    }
    const std::vector<real> gh = attention_run.backward_step(
        grad_line_ptr, jl.decision_logit_grads[static_cast<size_t>(t)],
        attention_);
    if (t > 0) {
      LstmState& dst = grad_state[static_cast<size_t>(t - 1)];
      for (std::size_t j = 0; j < dst.h.size(); ++j) dst.h[j] += gh[j];
    }
  }
  encoder_.backward(attention_run.feature_grad());
  return loss;
}

Model::SampleLoss Model::train_sample(const ParagraphSample& sample,
                                      Rng& dropout_rng, bool use_dropout) {
  return run_sample(sample, dropout_rng, use_dropout, /*do_backward=*/true);
}

Model::SampleLoss Model::forward_loss(const ParagraphSample& sample) {
  Rng unused(0);
  return run_sample(sample, unused, /*use_dropout=*/false, /*do_backward=*/false);
}

std::vector<Tensor> Model::infer(const Tensor& image) {
  Rng unused(0);
  const Tensor features = encoder_.forward(image, /*train=*/false, unused);
  ParagraphAttention attention_run(features, attention_);
  std::vector<Tensor> lines;
  LstmState state = LstmState::zero(config_.hidden_size);
  for (int t = 0; t < config_.max_line_length; ++t) {
    const AttentionStepOutput out = attention_run.step(state.h);
    if (out.decision[kStopClass] > out.decision[kContinueClass]) break;
    LstmLineRunner runner;
    const Tensor& hidden = runner.forward(out.line, state, lstm_);
    lines.push_back(prob_matrix_from_logits(projection_.forward(hidden)));
    state = runner.final_state();
  }
  return lines;
}

std::string Model::greedy_text(const std::vector<Tensor>& line_probs) const {
  std::vector<std::string> lines;
  for (const Tensor& probs : line_probs)
    lines.push_back(decode_labels(alphabet_, greedy_decode(probs)));
  return join_lines(lines);
}

// ---------------------------------------------------------------- Optimizer

Optimizer::Optimizer(std::string kind, real learning_rate)
    : kind_(std::move(kind)), lr_(learning_rate) {}

void Optimizer::step(ParamSet& params) {
  if (kind_ == "sgd") {
    for (const auto& p : params.items())
      axpy_inplace(*p.value, -lr_, *p.grad);
    return;
  }
  // Adam with the usual constants.
  constexpr real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (m_.empty()) {
    for (const auto& p : params.items()) {
      m_.emplace_back(p.value->size(), real(0));
      v_.emplace_back(p.value->size(), real(0));
    }
  }
  ++t_;
  const real bc1 = real(1) - std::pow(beta1, static_cast<real>(t_));
  const real bc2 = real(1) - std::pow(beta2, static_cast<real>(t_));
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    const auto& p = params.items()[i];
    for (std::size_t j = 0; j < p.value->size(); ++j) {
      const real g = (*p.grad)[j];
      m_[i][j] = beta1 * m_[i][j] + (1 - beta1) * g;
      v_[i][j] = beta2 * v_[i][j] + (1 - beta2) * g * g;
      const real mhat = m_[i][j] / bc1;
      const real vhat = v_[i][j] / bc2;
      (*p.value)[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ------------------------------------------------------------------ Trainer

Trainer::Trainer(Model& model, std::vector<ParagraphSample> dataset,
                 const RunConfig& cfg)
    : model_(model),
      dataset_(std::move(dataset)),
      config_(cfg),
      optimizer_(cfg.optimizer, cfg.learning_rate),
      dropout_rng_(cfg.seed * 7919 + 1),
      order_rng_(cfg.seed * 104729 + 2),
      augment_rng_(cfg.seed * 1299709 + 3) {
  if (dataset_.empty()) throw DataError("trainer: empty dataset");
  order_.resize(dataset_.size());
  std::iota(order_.begin(), order_.end(), std::size_t(0));
}

IterationStats Trainer::run_iteration() {
  if (lambda_override_) model_.set_lambda(*lambda_override_);
  IterationStats stats;
  stats.iteration = iterations_done() + 1;

  model_.params().zero_grads();
  int used = 0;
  for (int b = 0; b < config_.batch_size; ++b) {
    if (cursor_ == 0)
      std::shuffle(order_.begin(), order_.end(), order_rng_);
    const ParagraphSample& base = dataset_[order_[cursor_]];
    cursor_ = (cursor_ + 1) % order_.size();

    ParagraphSample sample = base;
    if (config_.augment) {
      AugmentConfig acfg;
      acfg.prob = config_.augment_prob;
      sample.image = augment(sample.image, augment_rng_, acfg);
    }
    Model::SampleLoss loss;
    try {
      loss = model_.train_sample(sample, dropout_rng_, config_.dropout);
    } catch (const NumericError& e) {
      throw NumericError(e.where(), "iteration " +
                                        std::to_string(stats.iteration) + ": " +
                                        e.what());
    }
    if (loss.skipped) continue;
    stats.total += loss.total;
    stats.ctc += loss.ctc;
    stats.ce += loss.ce;
    ++used;
  }
  if (used > 0) {
    const real inv = real(1) / used;
    stats.total *= inv;
    stats.ctc *= inv;
    stats.ce *= inv;
    for (const auto& p : model_.params().items())
      for (std::size_t j = 0; j < p.grad->size(); ++j) (*p.grad)[j] *= inv;
  }
  if (!std::isfinite(stats.total))
    throw NumericError("loss", "iteration " + std::to_string(stats.iteration) +
                                   ": non-finite training loss");
  optimizer_.step(model_.params());
  for (const auto& p : model_.params().items())
    if (!p.value->all_finite())
      throw NumericError("optimizer." + p.name,
                         "iteration " + std::to_string(stats.iteration) +
                             ": parameter became non-finite");
  history_.push_back(stats);
  return stats;
}

// --------------------------------------------------------------------- eval

ParagraphSample preprocess_sample(const ParagraphSample& raw, int target_h,
                                  int target_w) {
  ParagraphSample out = raw;
  out.image = preprocess(raw.image, target_h, target_w);
  return out;
}

EvalResult evaluate_split(Model& model,
                          const std::vector<ParagraphSample>& samples,
                          const EvalOptions& options) {
  EvalResult result;
  std::optional<Lexicon> lexicon;
  if (options.wbs) {
    std::vector<std::string> corpus = options.corpus;
    if (corpus.empty())
      for (const auto& s : samples)
        for (const auto& line : s.lines) corpus.push_back(line);
    lexicon = build_lexicon(corpus, CharClassing::alphabetic(model.alphabet()));
  }

  std::vector<std::string> ids;
  for (const ParagraphSample& sample : samples) {
    const std::vector<Tensor> lines = model.infer(sample.image);
    result.refs.push_back(join_lines(sample.lines));
    result.true_line_counts.push_back(static_cast<int>(sample.lines.size()));
    result.predicted_line_counts.push_back(static_cast<int>(lines.size()));
    ids.push_back(sample.id);
    if (options.greedy) {
      result.greedy_hyps.push_back(lines.empty() ? std::string()
                                                 : model.greedy_text(lines));
    }
    if (options.wbs) {
      result.wbs_hyps.push_back(
          lines.empty() ? std::string()
                        : decode_paragraph(lines, model.alphabet(), *lexicon,
                                           options.wbs_options));
    }
  }
  if (options.greedy)
    result.greedy = evaluate_corpus(result.refs, result.greedy_hyps, ids);
  if (options.wbs)
    result.wbs = evaluate_corpus(result.refs, result.wbs_hyps, ids);
  return result;
}

// ---------------------------------------------------------- gradient suite

std::vector<GradCheckEntry> model_gradient_check(std::uint64_t seed) {
  RunConfig cfg;
  cfg.cb_channels = {2, 3};
  cfg.cb_strides = {{2, 2}, {2, 2}};
  cfg.dscb_channels = {3};
  cfg.hidden_size = 5;
  cfg.att_dim = 4;
  cfg.cov_channels = 3;
  cfg.cov_kernel = 5;
  cfg.dropout = false;
  cfg.lambda = 1.0;

  const std::u32string alphabet = U"ab ";
  Model model(cfg, alphabet);
  Rng rng(seed);
  model.init_params(rng);

  ParagraphSample sample;
  sample.id = "gradcheck";
  sample.image = Tensor({1, 16, 24});
  fill_uniform(sample.image, 0, 1, rng);
  sample.lines = {"ab", "ba b"};

  Rng no_dropout(0);
  auto compute_grads = [&]() {
    model.params().zero_grads();
    model.train_sample(sample, no_dropout, /*use_dropout=*/false);
  };
  auto forward_loss = [&]() { return model.forward_loss(sample).total; };

  GradCheckOptions opt;
  opt.seed = seed;
  return check_gradients(model.params(), forward_loss, compute_grads, opt);
}

}  // namespace pararec

#include "pararec/decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace pararec {

namespace {

real sigmoid(real x) { return real(1) / (real(1) + std::exp(-x)); }

}  // namespace

LstmParams::LstmParams(int input_dim, int hidden_dim)
    : w_input({4 * hidden_dim, input_dim}),
      w_hidden({4 * hidden_dim, hidden_dim}),
      bias({4 * hidden_dim}),
      grad_w_input({4 * hidden_dim, input_dim}),
      grad_w_hidden({4 * hidden_dim, hidden_dim}),
      grad_bias({4 * hidden_dim}) {}

void LstmParams::init(Rng& rng) {
  init_uniform_fan(w_input, input_dim(), hidden_dim(), rng);
  init_uniform_fan(w_hidden, hidden_dim(), hidden_dim(), rng);
  bias.fill(0);
}

void LstmParams::collect_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w_input", w_input, grad_w_input);
  ps.add(prefix + ".w_hidden", w_hidden, grad_w_hidden);
  ps.add(prefix + ".bias", bias, grad_bias);
}

const Tensor& LstmLineRunner::forward(const Tensor& x, const LstmState& init,
                                      const LstmParams& params) {
  if (x.rank() != 2 || x.dim(1) != params.input_dim())
    throw std::invalid_argument("lstm: input must be [T," +
                                std::to_string(params.input_dim()) +
                                "], got " + x.shape_str());
  const int frames = x.dim(0);
  const int d = params.hidden_dim();
  if (static_cast<int>(init.h.size()) != d ||
      static_cast<int>(init.c.size()) != d)
    throw std::invalid_argument("lstm: init state dimension mismatch");

  input_ = x;
  init_ = init;
  hidden_ = Tensor({frames, d});
  gate_i_ = Tensor({frames, d});
  gate_f_ = Tensor({frames, d});
  gate_g_ = Tensor({frames, d});
  gate_o_ = Tensor({frames, d});
  cell_ = Tensor({frames, d});
  cell_tanh_ = Tensor({frames, d});

  std::vector<real> h = init.h, c = init.c;
  std::vector<real> xrow(static_cast<size_t>(params.input_dim()));
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < params.input_dim(); ++j)
      xrow[static_cast<size_t>(j)] = x.at(t, j);
    std::vector<real> z = matvec(params.w_input, xrow);
    const std::vector<real> zh = matvec(params.w_hidden, h);
    for (int j = 0; j < 4 * d; ++j)
      z[static_cast<size_t>(j)] +=
          zh[static_cast<size_t>(j)] + params.bias[static_cast<size_t>(j)];
    for (int j = 0; j < d; ++j) {
      const real gi = sigmoid(z[static_cast<size_t>(j)]);
      const real gf = sigmoid(z[static_cast<size_t>(d + j)]);
      const real gg = std::tanh(z[static_cast<size_t>(2 * d + j)]);
      const real go = sigmoid(z[static_cast<size_t>(3 * d + j)]);
      const real cc = gf * c[static_cast<size_t>(j)] + gi * gg;
      const real ct = std::tanh(cc);
      gate_i_.at(t, j) = gi;
      gate_f_.at(t, j) = gf;
      gate_g_.at(t, j) = gg;
      gate_o_.at(t, j) = go;
      cell_.at(t, j) = cc;
      cell_tanh_.at(t, j) = ct;
      c[static_cast<size_t>(j)] = cc;
      h[static_cast<size_t>(j)] = go * ct;
      hidden_.at(t, j) = h[static_cast<size_t>(j)];
    }
  }
  final_ = {h, c};
  has_forward_ = true;
  return hidden_;
}

LstmInputGrads LstmLineRunner::backward(const Tensor& grad_hidden,
                                        const LstmState& grad_final,
                                        LstmParams& params) {
  if (!has_forward_)
    throw std::logic_error("lstm: backward called before forward");
  const int frames = input_.dim(0);
  const int d = params.hidden_dim();
  const int in_dim = params.input_dim();

  LstmInputGrads out;
  out.grad_input = Tensor({frames, in_dim});
  std::vector<real> dh = grad_final.h;
  std::vector<real> dc = grad_final.c;
  std::vector<real> dz(static_cast<size_t>(4 * d));
  std::vector<real> xrow(static_cast<size_t>(in_dim));
  std::vector<real> hprev(static_cast<size_t>(d));

  for (int t = frames - 1; t >= 0; --t) {
    for (int j = 0; j < d; ++j)
      dh[static_cast<size_t>(j)] += grad_hidden.at(t, j);
    const real* cprev =
        t > 0 ? &cell_.at(t - 1, 0) : init_.c.data();
    for (int j = 0; j < d; ++j) {
      const real gi = gate_i_.at(t, j), gf = gate_f_.at(t, j);
      const real gg = gate_g_.at(t, j), go = gate_o_.at(t, j);
      const real ct = cell_tanh_.at(t, j);
      const real dhj = dh[static_cast<size_t>(j)];
      const real dgo = dhj * ct;
      real dcj = dc[static_cast<size_t>(j)] + dhj * go * (real(1) - ct * ct);
      const real dgi = dcj * gg;
      const real dgg = dcj * gi;
      const real dgf = dcj * cprev[j];
      dc[static_cast<size_t>(j)] = dcj * gf;
      dz[static_cast<size_t>(j)] = dgi * gi * (real(1) - gi);
      dz[static_cast<size_t>(d + j)] = dgf * gf * (real(1) - gf);
      dz[static_cast<size_t>(2 * d + j)] = dgg * (real(1) - gg * gg);
      dz[static_cast<size_t>(3 * d + j)] = dgo * go * (real(1) - go);
    }
    for (int j = 0; j < in_dim; ++j) xrow[static_cast<size_t>(j)] = input_.at(t, j);
    if (t > 0)
      for (int j = 0; j < d; ++j) hprev[static_cast<size_t>(j)] = hidden_.at(t - 1, j);
    else
      hprev = init_.h;

    for (int j = 0; j < 4 * d; ++j)
      params.grad_bias[static_cast<size_t>(j)] += dz[static_cast<size_t>(j)];
    outer_acc(params.grad_w_input, dz, xrow);
    outer_acc(params.grad_w_hidden, dz, hprev);
    const std::vector<real> dx = matvec_t(params.w_input, dz);
    for (int j = 0; j < in_dim; ++j) out.grad_input.at(t, j) = dx[static_cast<size_t>(j)];
    dh = matvec_t(params.w_hidden, dz);
  }
  out.grad_init = {dh, dc};
  return out;
}

ClassProjection::ClassProjection(int hidden_dim, int classes)
    : weight({classes, hidden_dim}),
      bias({classes}),
      grad_weight({classes, hidden_dim}),
      grad_bias({classes}) {}

void ClassProjection::init(Rng& rng) {
  init_uniform_fan(weight, weight.dim(1), weight.dim(0), rng);
  bias.fill(0);
}

Tensor ClassProjection::forward(const Tensor& hidden) const {
  if (hidden.rank() != 2 || hidden.dim(1) != weight.dim(1))
    throw std::invalid_argument("projection: hidden must be [T," +
                                std::to_string(weight.dim(1)) + "], got " +
                                hidden.shape_str());
  const int frames = hidden.dim(0), classes = weight.dim(0), d = weight.dim(1);
  Tensor logits({frames, classes});
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < classes; ++k) {
      real s = bias[static_cast<size_t>(k)];
      const real* wrow = weight.data() + static_cast<size_t>(k) * d;
      const real* hrow = hidden.data() + static_cast<size_t>(t) * d;
      for (int j = 0; j < d; ++j) s += wrow[j] * hrow[j];
      logits.at(t, k) = s;
    }
  }
  return logits;
}

Tensor ClassProjection::backward(const Tensor& grad_logits,
                                 const Tensor& hidden) {
  if (hidden.rank() != 2 || hidden.dim(0) != grad_logits.dim(0) ||
      hidden.dim(1) != weight.dim(1))
    throw std::invalid_argument("projection backward: hidden shape " +
                                hidden.shape_str() + " does not match");
  const int frames = hidden.dim(0);
  const int classes = weight.dim(0), d = weight.dim(1);
  Tensor ghidden({frames, d});
  for (int t = 0; t < frames; ++t) {
    const real* hrow = hidden.data() + static_cast<size_t>(t) * d;
    real* grow = ghidden.data() + static_cast<size_t>(t) * d;
    for (int k = 0; k < classes; ++k) {
      const real g = grad_logits.at(t, k);
      if (g == real(0)) continue;
      grad_bias[static_cast<size_t>(k)] += g;
      real* gw = grad_weight.data() + static_cast<size_t>(k) * d;
      const real* wrow = weight.data() + static_cast<size_t>(k) * d;
      for (int j = 0; j < d; ++j) {
        gw[j] += g * hrow[j];
        grow[j] += g * wrow[j];
      }
    }
  }
  return ghidden;
}

void ClassProjection::collect_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".weight", weight, grad_weight);
  ps.add(prefix + ".bias", bias, grad_bias);
}

Tensor prob_matrix_from_logits(const Tensor& logits) {
  return softmax(logits, 1);
}

}  // namespace pararec

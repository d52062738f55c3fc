#include "capsid/ops.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "capsid/errors.hpp"
#include "capsid/kernels.hpp"

namespace capsid::ops {

namespace {

const kernels::Backend& bk() { return kernels::active(); }

TensorPtr finish(Graph& g, const char* op, TensorPtr out,
                 std::vector<TensorPtr> inputs, std::function<void()> bwd) {
  bool need = false;
  for (const auto& in : inputs) need = need || in->requires_grad;
  out->requires_grad = need;
  if (!need) bwd = nullptr;
  return g.node(op, std::move(out), std::move(inputs), std::move(bwd));
}

void require_rank(const TensorPtr& t, std::size_t rank, const char* what) {
  if (t->shape.size() != rank)
    throw ShapeError(std::string(what) + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t->shape));
}

void require_same_shape(const TensorPtr& x, const TensorPtr& y,
                        const char* op) {
  if (x->shape != y->shape)
    throw ShapeError(std::string(op) + " shape mismatch: " +
                     shape_str(x->shape) + " vs " + shape_str(y->shape));
}

// cols[(ci*kh+r)*kw+s][oy*Wo+ox] = x[ci][oy*sh+r][ox*sw+s]
void im2col(const double* x, std::size_t Ci, std::size_t H, std::size_t W,
            std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
            std::size_t Ho, std::size_t Wo, double* cols) {
  const std::size_t np = Ho * Wo;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < Ci; ++ci) {
    const double* plane = x + ci * H * W;
    for (std::size_t r = 0; r < kh; ++r)
      for (std::size_t s = 0; s < kw; ++s, ++row) {
        double* dst = cols + row * np;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const double* src = plane + (oy * sh + r) * W + s;
          for (std::size_t ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = src[ox * sw];
        }
      }
  }
}

void col2im_add(const double* cols, std::size_t Ci, std::size_t H,
                std::size_t W, std::size_t kh, std::size_t kw, std::size_t sh,
                std::size_t sw, std::size_t Ho, std::size_t Wo, double* dx) {
  const std::size_t np = Ho * Wo;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < Ci; ++ci) {
    double* plane = dx + ci * H * W;
    for (std::size_t r = 0; r < kh; ++r)
      for (std::size_t s = 0; s < kw; ++s, ++row) {
        const double* src = cols + row * np;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          double* dst = plane + (oy * sh + r) * W + s;
          for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox * sw] += src[oy * Wo + ox];
        }
      }
  }
}

}  // namespace

TensorPtr conv2d(Graph& g, TensorPtr x, TensorPtr w, TensorPtr bias,
                 std::size_t sh, std::size_t sw) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  if (sh == 0 || sw == 0) throw ShapeError("conv2d stride must be positive");
  const std::size_t B = x->shape[0], Ci = x->shape[1], H = x->shape[2],
                    W = x->shape[3];
  const std::size_t Co = w->shape[0], kh = w->shape[2], kw = w->shape[3];
  if (w->shape[1] != Ci)
    throw ShapeError("conv2d kernels expect " + std::to_string(w->shape[1]) +
                     " input channels, input has " + std::to_string(Ci));
  if (bias->shape[0] != Co)
    throw ShapeError("conv2d bias size " + std::to_string(bias->shape[0]) +
                     " does not match " + std::to_string(Co) + " kernels");
  if (kh > H || kw > W)
    throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " is larger than input " +
                     std::to_string(H) + "x" + std::to_string(W));
  const std::size_t Ho = (H - kh) / sh + 1, Wo = (W - kw) / sw + 1;
  const std::size_t Kp = Ci * kh * kw, Np = Ho * Wo;

  auto out = make_tensor({B, Co, Ho, Wo});
  thread_local std::vector<double> cols;
  cols.resize(Kp * Np);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(x->value.data() + b * Ci * H * W, Ci, H, W, kh, kw, sh, sw, Ho, Wo,
           cols.data());
    double* ob = out->value.data() + b * Co * Np;
    for (std::size_t co = 0; co < Co; ++co)
      std::fill(ob + co * Np, ob + (co + 1) * Np, bias->value[co]);
    bk().gemm_nn(Co, Np, Kp, w->value.data(), Kp, cols.data(), Np, ob, Np);
  }

  auto bwd = [x, w, bias, out, B, Ci, H, W, Co, kh, kw, sh, sw, Ho, Wo, Kp,
              Np] {
    const auto& k = bk();
    const double* dout = out->grad.data();
    if (bias->requires_grad)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Co; ++co)
          bias->grad[co] += k.sum(dout + (b * Co + co) * Np, Np);
    if (w->requires_grad) {
      thread_local std::vector<double> cols_b, cols_t;
      cols_b.resize(Kp * Np);
      cols_t.resize(Np * Kp);
      for (std::size_t b = 0; b < B; ++b) {
        im2col(x->value.data() + b * Ci * H * W, Ci, H, W, kh, kw, sh, sw, Ho,
               Wo, cols_b.data());
        kernels::transpose(cols_b.data(), Kp, Np, cols_t.data());
        k.gemm_nn(Co, Kp, Np, dout + b * Co * Np, Np, cols_t.data(), Kp,
                  w->grad.data(), Kp);
      }
    }
    if (x->requires_grad) {
      thread_local std::vector<double> wt, dcols;
      wt.resize(Kp * Co);
      kernels::transpose(w->value.data(), Co, Kp, wt.data());
      dcols.resize(Kp * Np);
      for (std::size_t b = 0; b < B; ++b) {
        std::fill(dcols.begin(), dcols.end(), 0.0);
        k.gemm_nn(Kp, Np, Co, wt.data(), Co, dout + b * Co * Np, Np,
                  dcols.data(), Np);
        col2im_add(dcols.data(), Ci, H, W, kh, kw, sh, sw, Ho, Wo,
                   x->grad.data() + b * Ci * H * W);
      }
    }
  };
  return finish(g, "conv2d", std::move(out), {x, w, bias}, std::move(bwd));
}

TensorPtr maxpool2d(Graph& g, TensorPtr x, std::size_t ph, std::size_t pw) {
  require_rank(x, 4, "maxpool2d input");
  if (ph == 0 || pw == 0) throw ShapeError("maxpool2d pool must be positive");
  const std::size_t B = x->shape[0], C = x->shape[1], H = x->shape[2],
                    W = x->shape[3];
  const std::size_t Ho = H / ph, Wo = W / pw;
  if (Ho == 0 || Wo == 0)
    throw ShapeError("maxpool2d pool " + std::to_string(ph) + "x" +
                     std::to_string(pw) + " is larger than input " +
                     std::to_string(H) + "x" + std::to_string(W));
  auto out = make_tensor({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out->size());
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* plane = x->value.data() + bc * H * W;
    double* oplane = out->value.data() + bc * Ho * Wo;
    std::size_t* aplane = argmax->data() + bc * Ho * Wo;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (oy * ph) * W + ox * pw;
        double best_v = plane[best];
        for (std::size_t r = 0; r < ph; ++r)
          for (std::size_t s = 0; s < pw; ++s) {
            const std::size_t idx = (oy * ph + r) * W + ox * pw + s;
            if (plane[idx] > best_v) {
              best_v = plane[idx];
              best = idx;
            }
          }
        oplane[oy * Wo + ox] = best_v;
        aplane[oy * Wo + ox] = best;
      }
  }
  auto bwd = [x, out, argmax, B, C, H, W, Ho, Wo] {
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      double* gplane = x->grad.data() + bc * H * W;
      const double* dplane = out->grad.data() + bc * Ho * Wo;
      const std::size_t* aplane = argmax->data() + bc * Ho * Wo;
      for (std::size_t p = 0; p < Ho * Wo; ++p) gplane[aplane[p]] += dplane[p];
    }
  };
  return finish(g, "maxpool2d", std::move(out), {x}, std::move(bwd));
}

TensorPtr batchnorm(Graph& g, TensorPtr x, TensorPtr gamma, TensorPtr beta,
                    TensorPtr running_mean, TensorPtr running_var,
                    double momentum, double eps, bool training) {
  if (x->shape.size() < 2) throw ShapeError("batchnorm input needs rank >= 2");
  const std::size_t B = x->shape[0], C = x->shape[1];
  std::size_t inner = 1;
  for (std::size_t d = 2; d < x->shape.size(); ++d) inner *= x->shape[d];
  require_rank(gamma, 1, "batchnorm gamma");
  require_rank(beta, 1, "batchnorm beta");
  if (gamma->shape[0] != C || beta->shape[0] != C ||
      running_mean->shape[0] != C || running_var->shape[0] != C)
    throw ShapeError("batchnorm parameter size does not match " +
                     std::to_string(C) + " channels");
  const std::size_t n = B * inner;

  auto out = make_tensor(x->shape);
  auto xhat = std::make_shared<std::vector<double>>(x->size());
  auto inv_sigma = std::make_shared<std::vector<double>>(C);

  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        s += bk().sum(x->value.data() + (b * C + c) * inner, inner);
      mu = s / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = x->value.data() + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = row[i] - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(n);
      running_mean->value[c] = momentum * running_mean->value[c] + (1.0 - momentum) * mu;
      running_var->value[c] = momentum * running_var->value[c] + (1.0 - momentum) * var;
    } else {
      mu = running_mean->value[c];
      var = running_var->value[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[c] = is;
    const double gm = gamma->value[c], bt = beta->value[c];
    for (std::size_t b = 0; b < B; ++b) {
      const double* row = x->value.data() + (b * C + c) * inner;
      double* xh = xhat->data() + (b * C + c) * inner;
      double* orow = out->value.data() + (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        xh[i] = (row[i] - mu) * is;
        orow[i] = gm * xh[i] + bt;
      }
    }
  }

  auto bwd = [x, gamma, beta, out, xhat, inv_sigma, B, C, inner, n, training] {
    for (std::size_t c = 0; c < C; ++c) {
      double dg = 0.0, db = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* dorow = out->grad.data() + (b * C + c) * inner;
        const double* xh = xhat->data() + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          dg += dorow[i] * xh[i];
          db += dorow[i];
        }
      }
      if (gamma->requires_grad) gamma->grad[c] += dg;
      if (beta->requires_grad) beta->grad[c] += db;
      if (!x->requires_grad) continue;
      const double gm = gamma->value[c], is = (*inv_sigma)[c];
      if (training) {
        const double m_do = db / static_cast<double>(n);
        const double m_doxh = dg / static_cast<double>(n);
        for (std::size_t b = 0; b < B; ++b) {
          const double* dorow = out->grad.data() + (b * C + c) * inner;
          const double* xh = xhat->data() + (b * C + c) * inner;
          double* dxrow = x->grad.data() + (b * C + c) * inner;
          for (std::size_t i = 0; i < inner; ++i)
            dxrow[i] += gm * is * (dorow[i] - m_do - xh[i] * m_doxh);
        }
      } else {
        for (std::size_t b = 0; b < B; ++b) {
          const double* dorow = out->grad.data() + (b * C + c) * inner;
          double* dxrow = x->grad.data() + (b * C + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) dxrow[i] += gm * is * dorow[i];
        }
      }
    }
  };
  return finish(g, "batchnorm", std::move(out), {x, gamma, beta},
                std::move(bwd));
}

TensorPtr dropout(Graph& g, TensorPtr x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1), got " +
                      std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x->size());
  for (auto& m : *mask) m = rng.next_double() < rate ? 0.0 : keep_scale;
  auto out = make_tensor(x->shape);
  bk().mul(x->value.data(), mask->data(), out->value.data(), x->size());
  auto bwd = [x, out, mask] {
    for (std::size_t i = 0; i < x->size(); ++i)
      x->grad[i] += out->grad[i] * (*mask)[i];
  };
  return finish(g, "dropout", std::move(out), {x}, std::move(bwd));
}

TensorPtr dense(Graph& g, TensorPtr x, TensorPtr w, TensorPtr bias) {
  require_rank(x, 2, "dense input");
  require_rank(w, 2, "dense weights");
  require_rank(bias, 1, "dense bias");
  const std::size_t B = x->shape[0], in = x->shape[1], out_n = w->shape[0];
  if (w->shape[1] != in)
    throw ShapeError("dense weights expect " + std::to_string(w->shape[1]) +
                     " inputs, got " + std::to_string(in));
  if (bias->shape[0] != out_n)
    throw ShapeError("dense bias size " + std::to_string(bias->shape[0]) +
                     " does not match " + std::to_string(out_n) + " outputs");
  auto out = make_tensor({B, out_n});
  for (std::size_t b = 0; b < B; ++b)
    std::memcpy(out->value.data() + b * out_n, bias->value.data(),
                out_n * sizeof(double));
  bk().gemm_nt(B, out_n, in, x->value.data(), in, w->value.data(), in,
               out->value.data(), out_n);
  auto bwd = [x, w, bias, out, B, in, out_n] {
    const auto& k = bk();
    if (x->requires_grad)
      k.gemm_nn(B, in, out_n, out->grad.data(), out_n, w->value.data(), in,
                x->grad.data(), in);
    if (w->requires_grad) {
      thread_local std::vector<double> dout_t;
      dout_t.resize(out_n * B);
      kernels::transpose(out->grad.data(), B, out_n, dout_t.data());
      k.gemm_nn(out_n, in, B, dout_t.data(), B, x->value.data(), in,
                w->grad.data(), in);
    }
    if (bias->requires_grad)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out_n; ++o)
          bias->grad[o] += out->grad[b * out_n + o];
  };
  return finish(g, "dense", std::move(out), {x, w, bias}, std::move(bwd));
}

TensorPtr relu(Graph& g, TensorPtr x) {
  auto out = make_tensor(x->shape);
  bk().relu(x->value.data(), out->value.data(), x->size());
  auto bwd = [x, out] {
    for (std::size_t i = 0; i < x->size(); ++i)
      if (x->value[i] > 0.0) x->grad[i] += out->grad[i];
  };
  return finish(g, "relu", std::move(out), {x}, std::move(bwd));
}

TensorPtr sigmoid(Graph& g, TensorPtr x) {
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i)
    out->value[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  auto bwd = [x, out] {
    for (std::size_t i = 0; i < x->size(); ++i) {
      const double y = out->value[i];
      x->grad[i] += out->grad[i] * y * (1.0 - y);
    }
  };
  return finish(g, "sigmoid", std::move(out), {x}, std::move(bwd));
}

TensorPtr softmax(Graph& g, TensorPtr x, std::size_t axis) {
  if (axis >= x->shape.size())
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " out of range for " + shape_str(x->shape));
  const std::size_t n = x->shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x->shape[d];
  for (std::size_t d = axis + 1; d < x->shape.size(); ++d) inner *= x->shape[d];
  auto out = make_tensor(x->shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double m = x->value[base];
      for (std::size_t j = 1; j < n; ++j)
        m = std::max(m, x->value[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(x->value[base + j * inner] - m);
        out->value[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < n; ++j) out->value[base + j * inner] /= s;
    }
  auto bwd = [x, out, outer, n, inner] {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          dot += out->grad[base + j * inner] * out->value[base + j * inner];
        for (std::size_t j = 0; j < n; ++j)
          x->grad[base + j * inner] += out->value[base + j * inner] *
                                       (out->grad[base + j * inner] - dot);
      }
  };
  return finish(g, "softmax", std::move(out), {x}, std::move(bwd));
}

TensorPtr reshape(Graph& g, TensorPtr x, std::vector<std::size_t> shape) {
  if (shape_size(shape) != x->size())
    throw ShapeError("reshape " + shape_str(x->shape) + " -> " +
                     shape_str(shape) + " changes element count");
  auto out = make_tensor(std::move(shape));
  out->value = x->value;
  auto bwd = [x, out] {
    bk().add(x->grad.data(), out->grad.data(), x->grad.data(), x->size());
  };
  return finish(g, "reshape", std::move(out), {x}, std::move(bwd));
}

TensorPtr add(Graph& g, TensorPtr x, TensorPtr y) {
  require_same_shape(x, y, "add");
  auto out = make_tensor(x->shape);
  bk().add(x->value.data(), y->value.data(), out->value.data(), x->size());
  auto bwd = [x, y, out] {
    if (x->requires_grad)
      bk().add(x->grad.data(), out->grad.data(), x->grad.data(), x->size());
    if (y->requires_grad)
      bk().add(y->grad.data(), out->grad.data(), y->grad.data(), y->size());
  };
  return finish(g, "add", std::move(out), {x, y}, std::move(bwd));
}

TensorPtr sub(Graph& g, TensorPtr x, TensorPtr y) {
  require_same_shape(x, y, "sub");
  auto out = make_tensor(x->shape);
  bk().sub(x->value.data(), y->value.data(), out->value.data(), x->size());
  auto bwd = [x, y, out] {
    if (x->requires_grad)
      bk().add(x->grad.data(), out->grad.data(), x->grad.data(), x->size());
    if (y->requires_grad)
      bk().axpy(-1.0, out->grad.data(), y->grad.data(), y->size());
  };
  return finish(g, "sub", std::move(out), {x, y}, std::move(bwd));
}

TensorPtr mul(Graph& g, TensorPtr x, TensorPtr y) {
  require_same_shape(x, y, "mul");
  auto out = make_tensor(x->shape);
  bk().mul(x->value.data(), y->value.data(), out->value.data(), x->size());
  auto bwd = [x, y, out] {
    if (x->requires_grad)
      for (std::size_t i = 0; i < x->size(); ++i)
        x->grad[i] += out->grad[i] * y->value[i];
    if (y->requires_grad)
      for (std::size_t i = 0; i < y->size(); ++i)
        y->grad[i] += out->grad[i] * x->value[i];
  };
  return finish(g, "mul", std::move(out), {x, y}, std::move(bwd));
}

TensorPtr scale(Graph& g, TensorPtr x, double a) {
  auto out = make_tensor(x->shape);
  bk().scale(x->value.data(), a, out->value.data(), x->size());
  auto bwd = [x, out, a] {
    bk().axpy(a, out->grad.data(), x->grad.data(), x->size());
  };
  return finish(g, "scale", std::move(out), {x}, std::move(bwd));
}

TensorPtr sum(Graph& g, TensorPtr x) {
  auto out = make_tensor({std::size_t{1}});
  out->value[0] = bk().sum(x->value.data(), x->size());
  auto bwd = [x, out] {
    const double go = out->grad[0];
    for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += go;
  };
  return finish(g, "sum", std::move(out), {x}, std::move(bwd));
}

TensorPtr mean(Graph& g, TensorPtr x) {
  auto out = make_tensor({std::size_t{1}});
  const double n = static_cast<double>(x->size());
  out->value[0] = bk().sum(x->value.data(), x->size()) / n;
  auto bwd = [x, out, n] {
    const double go = out->grad[0] / n;
    for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += go;
  };
  return finish(g, "mean", std::move(out), {x}, std::move(bwd));
}

TensorPtr mse(Graph& g, TensorPtr x, TensorPtr y) {
  require_same_shape(x, y, "mse");
  auto diff = std::make_shared<std::vector<double>>(x->size());
  bk().sub(x->value.data(), y->value.data(), diff->data(), x->size());
  const double n = static_cast<double>(x->size());
  auto out = make_tensor({std::size_t{1}});
  out->value[0] = bk().sq_sum(diff->data(), diff->size()) / n;
  auto bwd = [x, y, out, diff, n] {
    const double coef = 2.0 * out->grad[0] / n;
    if (x->requires_grad)
      bk().axpy(coef, diff->data(), x->grad.data(), x->size());
    if (y->requires_grad)
      bk().axpy(-coef, diff->data(), y->grad.data(), y->size());
  };
  return finish(g, "mse", std::move(out), {x, y}, std::move(bwd));
}

TensorPtr global_avg_pool(Graph& g, TensorPtr x) {
  if (x->shape.size() < 3)
    throw ShapeError("global_avg_pool input needs rank >= 3, got " +
                     shape_str(x->shape));
  const std::size_t B = x->shape[0], C = x->shape[1];
  std::size_t inner = 1;
  for (std::size_t d = 2; d < x->shape.size(); ++d) inner *= x->shape[d];
  auto out = make_tensor({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc)
    out->value[bc] = bk().sum(x->value.data() + bc * inner, inner) /
                     static_cast<double>(inner);
  auto bwd = [x, out, B, C, inner] {
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double go = out->grad[bc] / static_cast<double>(inner);
      double* gx = x->grad.data() + bc * inner;
      for (std::size_t i = 0; i < inner; ++i) gx[i] += go;
    }
  };
  return finish(g, "global_avg_pool", std::move(out), {x}, std::move(bwd));
}

TensorPtr length_last(Graph& g, TensorPtr x) {
  if (x->shape.empty()) throw ShapeError("length_last needs rank >= 1");
  const std::size_t D = x->shape.back();
  const std::size_t M = x->size() / D;
  std::vector<std::size_t> oshape(x->shape.begin(), x->shape.end() - 1);
  if (oshape.empty()) oshape = {1};
  auto out = make_tensor(oshape);
  for (std::size_t m = 0; m < M; ++m)
    out->value[m] = std::sqrt(bk().sq_sum(x->value.data() + m * D, D) + 1e-18);
  auto bwd = [x, out, M, D] {
    for (std::size_t m = 0; m < M; ++m) {
      const double coef = out->grad[m] / out->value[m];
      bk().axpy(coef, x->value.data() + m * D, x->grad.data() + m * D, D);
    }
  };
  return finish(g, "length_last", std::move(out), {x}, std::move(bwd));
}

TensorPtr squash_last(Graph& g, TensorPtr x) {
  if (x->shape.empty()) throw ShapeError("squash_last needs rank >= 1");
  const std::size_t D = x->shape.back();
  const std::size_t M = x->size() / D;
  auto out = make_tensor(x->shape);
  auto sq_norm = std::make_shared<std::vector<double>>(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double n2 = bk().sq_sum(x->value.data() + m * D, D);
    (*sq_norm)[m] = n2;
    const double f = std::sqrt(n2) / (1.0 + n2);
    bk().scale(x->value.data() + m * D, f, out->value.data() + m * D, D);
  }
  auto bwd = [x, out, sq_norm, M, D] {
    for (std::size_t m = 0; m < M; ++m) {
      const double n2 = (*sq_norm)[m];
      const double n = std::sqrt(n2);
      const double f = n / (1.0 + n2);
      const double sdot =
          bk().dot(x->value.data() + m * D, out->grad.data() + m * D, D);
      const double coef =
          (1.0 - n2) / ((1.0 + n2) * (1.0 + n2) * (n + 1e-9)) * sdot;
      bk().axpy(f, out->grad.data() + m * D, x->grad.data() + m * D, D);
      bk().axpy(coef, x->value.data() + m * D, x->grad.data() + m * D, D);
    }
  };
  return finish(g, "squash_last", std::move(out), {x}, std::move(bwd));
}

TensorPtr capsule_reshape(Graph& g, TensorPtr x, std::size_t d) {
  if (x->shape.size() != 4)
    throw ShapeError("capsule_reshape needs [B,C,H,W], got " +
                     shape_str(x->shape));
  const std::size_t B = x->shape[0], C = x->shape[1], H = x->shape[2],
                    W = x->shape[3];
  if (d == 0 || C % d != 0)
    throw ShapeError("capsule_reshape: " + std::to_string(C) +
                     " channels do not split into vectors of " +
                     std::to_string(d));
  const std::size_t maps = C / d;
  const std::size_t caps = maps * H * W;
  auto out = make_tensor({B, caps, d});
  const std::size_t hw = H * W;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < maps; ++m)
      for (std::size_t yx = 0; yx < hw; ++yx) {
        const std::size_t cap = m * hw + yx;
        for (std::size_t k = 0; k < d; ++k)
          out->value[(b * caps + cap) * d + k] =
              x->value[(b * C + m * d + k) * hw + yx];
      }
  auto bwd = [x, out, B, C, hw, maps, caps, d] {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < maps; ++m)
        for (std::size_t yx = 0; yx < hw; ++yx) {
          const std::size_t cap = m * hw + yx;
          for (std::size_t k = 0; k < d; ++k)
            x->grad[(b * C + m * d + k) * hw + yx] +=
                out->grad[(b * caps + cap) * d + k];
        }
  };
  return finish(g, "capsule_reshape", std::move(out), {x}, std::move(bwd));
}

TensorPtr caps_predict(Graph& g, TensorPtr w, TensorPtr u) {
  require_rank(w, 4, "caps_predict weights");
  require_rank(u, 3, "caps_predict input");
  const std::size_t Ni = w->shape[0], No = w->shape[1], Du = w->shape[2],
                    Dl = w->shape[3];
  const std::size_t B = u->shape[0];
  if (u->shape[1] != Ni || u->shape[2] != Dl)
    throw ShapeError("caps_predict input " + shape_str(u->shape) +
                     " does not match weights " + shape_str(w->shape));
  auto out = make_tensor({B, Ni, No, Du});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Ni; ++i) {
      const double* ui = u->value.data() + (b * Ni + i) * Dl;
      const double* wi = w->value.data() + i * No * Du * Dl;
      double* oi = out->value.data() + ((b * Ni + i) * No) * Du;
      for (std::size_t jd = 0; jd < No * Du; ++jd)
        oi[jd] = bk().dot(wi + jd * Dl, ui, Dl);
    }
  auto bwd = [w, u, out, B, Ni, No, Du, Dl] {
    const auto& k = bk();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < Ni; ++i) {
        const double* ui = u->value.data() + (b * Ni + i) * Dl;
        const double* gi = out->grad.data() + ((b * Ni + i) * No) * Du;
        const double* wi = w->value.data() + i * No * Du * Dl;
        for (std::size_t jd = 0; jd < No * Du; ++jd) {
          const double go = gi[jd];
          if (go == 0.0) continue;
          if (w->requires_grad)
            k.axpy(go, ui, w->grad.data() + (i * No * Du + jd) * Dl, Dl);
          if (u->requires_grad)
            k.axpy(go, wi + jd * Dl, u->grad.data() + (b * Ni + i) * Dl, Dl);
        }
      }
  };
  return finish(g, "caps_predict", std::move(out), {w, u}, std::move(bwd));
}

TensorPtr caps_weighted_sum(Graph& g, TensorPtr c, TensorPtr u_hat) {
  require_rank(c, 3, "caps_weighted_sum couplings");
  require_rank(u_hat, 4, "caps_weighted_sum predictions");
  const std::size_t B = u_hat->shape[0], Ni = u_hat->shape[1],
                    No = u_hat->shape[2], Du = u_hat->shape[3];
  if (c->shape[0] != B || c->shape[1] != Ni || c->shape[2] != No)
    throw ShapeError("caps_weighted_sum couplings " + shape_str(c->shape) +
                     " do not match predictions " + shape_str(u_hat->shape));
  auto out = make_tensor({B, No, Du});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Ni; ++i)
      for (std::size_t j = 0; j < No; ++j)
        bk().axpy(c->value[(b * Ni + i) * No + j],
                  u_hat->value.data() + ((b * Ni + i) * No + j) * Du,
                  out->value.data() + (b * No + j) * Du, Du);
  auto bwd = [c, u_hat, out, B, Ni, No, Du] {
    const auto& k = bk();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < Ni; ++i)
        for (std::size_t j = 0; j < No; ++j) {
          const double* ds = out->grad.data() + (b * No + j) * Du;
          const double* uh =
              u_hat->value.data() + ((b * Ni + i) * No + j) * Du;
          if (c->requires_grad)
            c->grad[(b * Ni + i) * No + j] += k.dot(ds, uh, Du);
          if (u_hat->requires_grad)
            k.axpy(c->value[(b * Ni + i) * No + j], ds,
                   u_hat->grad.data() + ((b * Ni + i) * No + j) * Du, Du);
        }
  };
  return finish(g, "caps_weighted_sum", std::move(out), {c, u_hat},
                std::move(bwd));
}

TensorPtr caps_agreement(Graph& g, TensorPtr u_hat, TensorPtr v) {
  require_rank(u_hat, 4, "caps_agreement predictions");
  require_rank(v, 3, "caps_agreement outputs");
  const std::size_t B = u_hat->shape[0], Ni = u_hat->shape[1],
                    No = u_hat->shape[2], Du = u_hat->shape[3];
  if (v->shape[0] != B || v->shape[1] != No || v->shape[2] != Du)
    throw ShapeError("caps_agreement outputs " + shape_str(v->shape) +
                     " do not match predictions " + shape_str(u_hat->shape));
  auto out = make_tensor({B, Ni, No});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Ni; ++i)
      for (std::size_t j = 0; j < No; ++j)
        out->value[(b * Ni + i) * No + j] =
            bk().dot(u_hat->value.data() + ((b * Ni + i) * No + j) * Du,
                     v->value.data() + (b * No + j) * Du, Du);
  auto bwd = [u_hat, v, out, B, Ni, No, Du] {
    const auto& k = bk();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < Ni; ++i)
        for (std::size_t j = 0; j < No; ++j) {
          const double da = out->grad[(b * Ni + i) * No + j];
          if (da == 0.0) continue;
          if (u_hat->requires_grad)
            k.axpy(da, v->value.data() + (b * No + j) * Du,
                   u_hat->grad.data() + ((b * Ni + i) * No + j) * Du, Du);
          if (v->requires_grad)
            k.axpy(da, u_hat->value.data() + ((b * Ni + i) * No + j) * Du,
                   v->grad.data() + (b * No + j) * Du, Du);
        }
  };
  return finish(g, "caps_agreement", std::move(out), {u_hat, v},
                std::move(bwd));
}

TensorPtr margin_loss(Graph& g, TensorPtr lengths,
                      const std::vector<std::size_t>& labels, double m_plus,
                      double m_minus, double lam) {
  require_rank(lengths, 2, "margin_loss lengths");
  const std::size_t B = lengths->shape[0], C = lengths->shape[1];
  if (labels.size() != B)
    throw ShapeError("margin_loss got " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(B));
  for (std::size_t lb : labels)
    if (lb >= C)
      throw ContractError("margin_loss label " + std::to_string(lb) +
                          " out of range for " + std::to_string(C) +
                          " classes");
  auto out = make_tensor({std::size_t{1}});
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double L = lengths->value[b * C + c];
      if (c == labels[b]) {
        const double h = std::max(0.0, m_plus - L);
        total += h * h;
      } else {
        const double h = std::max(0.0, L - m_minus);
        total += lam * h * h;
      }
    }
  out->value[0] = total / static_cast<double>(B);
  auto labels_copy = labels;
  auto bwd = [lengths, out, labels_copy, B, C, m_plus, m_minus, lam] {
    const double go = out->grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const double L = lengths->value[b * C + c];
        if (c == labels_copy[b]) {
          const double h = std::max(0.0, m_plus - L);
          lengths->grad[b * C + c] += go * -2.0 * h;
        } else {
          const double h = std::max(0.0, L - m_minus);
          lengths->grad[b * C + c] += go * lam * 2.0 * h;
        }
      }
  };
  return finish(g, "margin_loss", std::move(out), {lengths}, std::move(bwd));
}

TensorPtr softmax_xent(Graph& g, TensorPtr logits,
                       const std::vector<std::size_t>& labels) {
  require_rank(logits, 2, "softmax_xent logits");
  const std::size_t B = logits->shape[0], C = logits->shape[1];
  if (labels.size() != B)
    throw ShapeError("softmax_xent got " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(B));
  for (std::size_t lb : labels)
    if (lb >= C)
      throw ContractError("softmax_xent label " + std::to_string(lb) +
                          " out of range for " + std::to_string(C) +
                          " classes");
  auto probs = std::make_shared<std::vector<double>>(logits->size());
  auto out = make_tensor({std::size_t{1}});
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits->value.data() + b * C;
    double m = row[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < C; ++c)
      (*probs)[b * C + c] = std::exp(row[c] - lse);
    total += lse - row[labels[b]];
  }
  out->value[0] = total / static_cast<double>(B);
  auto labels_copy = labels;
  auto bwd = [logits, out, probs, labels_copy, B, C] {
    const double go = out->grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        logits->grad[b * C + c] +=
            go * ((*probs)[b * C + c] - (c == labels_copy[b] ? 1.0 : 0.0));
  };
  return finish(g, "softmax_xent", std::move(out), {logits}, std::move(bwd));
}

TensorPtr mask_select(Graph& g, TensorPtr v,
                      const std::vector<std::size_t>& labels) {
  require_rank(v, 3, "mask_select input");
  const std::size_t B = v->shape[0], C = v->shape[1], D = v->shape[2];
  if (labels.size() != B)
    throw ShapeError("mask_select got " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(B));
  for (std::size_t lb : labels)
    if (lb >= C)
      throw ContractError("mask_select label " + std::to_string(lb) +
                          " out of range for " + std::to_string(C) +
                          " classes");
  auto out = make_tensor({B, C * D});
  for (std::size_t b = 0; b < B; ++b)
    std::memcpy(out->value.data() + b * C * D + labels[b] * D,
                v->value.data() + (b * C + labels[b]) * D, D * sizeof(double));
  auto labels_copy = labels;
  auto bwd = [v, out, labels_copy, B, C, D] {
    for (std::size_t b = 0; b < B; ++b)
      bk().add(v->grad.data() + (b * C + labels_copy[b]) * D,
               out->grad.data() + b * C * D + labels_copy[b] * D,
               v->grad.data() + (b * C + labels_copy[b]) * D, D);
  };
  return finish(g, "mask_select", std::move(out), {v}, std::move(bwd));
}

}  // namespace capsid::ops

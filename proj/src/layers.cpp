#include "molgen/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace molgen {

namespace {

// Valid loop indices o (clamped to [0, count)) with 0 <= o*stride + off < lim.
void valid_range(int64_t off, int64_t stride, int64_t lim, int64_t count,
                 int64_t& lo, int64_t& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int64_t top = lim - 1 - off;
  hi = top < 0 ? -1 : top / stride;
  if (hi > count - 1) hi = count - 1;
}

int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
  const int64_t o = (in + 2 * pad - k) / stride + 1;
  if (o <= 0 || in + 2 * pad < k)
    throw std::invalid_argument("conv3d: input smaller than kernel");
  return o;
}

void check_4d(const Tensor& t, int64_t c, const char* who) {
  if (t.rank() != 4 || t.dim(0) != c)
    throw std::invalid_argument(std::string(who) + ": bad input shape");
}

// y[o, n] += sum_i w[o, i] * x[i, n]  (+ bias if given); x viewed as [ci, n].
Tensor project(const Tensor& w, const Tensor* b, const double* x, int64_t ci,
               int64_t n) {
  const int64_t co = w.dim(0);
  Tensor y({co, n});
  for (int64_t o = 0; o < co; ++o) {
    double* yp = y.data.data() + o * n;
    if (b) {
      const double bv = b->data[static_cast<size_t>(o)];
      for (int64_t t = 0; t < n; ++t) yp[t] = bv;
    }
    const double* wrow = w.data.data() + o * ci;
    for (int64_t i = 0; i < ci; ++i) {
      const double wv = wrow[i];
      const double* xp = x + i * n;
      for (int64_t t = 0; t < n; ++t) yp[t] += wv * xp[t];
    }
  }
  return y;
}

// gw[o, i] += sum_n g[o, n] * x[i, n]; gb[o] += sum_n g[o, n];
// gx[i, n] += sum_o w[o, i] * g[o, n].
void project_backward(const Tensor& w, const double* x, const double* g,
                      int64_t ci, int64_t co, int64_t n, Tensor& gw, Tensor* gb,
                      double* gx) {
  for (int64_t o = 0; o < co; ++o) {
    const double* gp = g + o * n;
    if (gb) {
      double s = 0.0;
      for (int64_t t = 0; t < n; ++t) s += gp[t];
      gb->data[static_cast<size_t>(o)] += s;
    }
    const double* wrow = w.data.data() + o * ci;
    double* gwrow = gw.data.data() + o * ci;
    for (int64_t i = 0; i < ci; ++i) {
      const double* xp = x + i * n;
      double acc = 0.0;
      const double wv = wrow[i];
      double* gxp = gx + i * n;
      for (int64_t t = 0; t < n; ++t) {
        acc += gp[t] * xp[t];
        gxp[t] += wv * gp[t];
      }
      gwrow[i] += acc;
    }
  }
}

}  // namespace

// --------------------------------------------------------------------------
// Conv3d
// --------------------------------------------------------------------------

Conv3d::Conv3d(int64_t cin, int64_t cout, int k, int stride, int pad, Rng& rng)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
  if (cin <= 0 || cout <= 0 || k <= 0 || stride <= 0 || pad < 0)
    throw std::invalid_argument("conv3d: bad constructor arguments");
  const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
  weight = Tensor::randn({cout, cin, k, k, k}, rng, std);
  bias = Tensor::zeros({cout});
  gweight = Tensor::zeros(weight.shape);
  gbias = Tensor::zeros(bias.shape);
}

Tensor Conv3d::forward(const Tensor& in, LayerCache& cache, bool) {
  check_4d(in, cin_, "conv3d");
  const int64_t D = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t OD = conv_out_dim(D, k_, stride_, pad_);
  const int64_t OH = conv_out_dim(H, k_, stride_, pad_);
  const int64_t OW = conv_out_dim(W, k_, stride_, pad_);
  Tensor out({cout_, OD, OH, OW});
  const int64_t ospatial = OD * OH * OW;
  for (int64_t co = 0; co < cout_; ++co) {
    const double bv = bias.data[static_cast<size_t>(co)];
    double* op = out.data.data() + co * ospatial;
    for (int64_t s = 0; s < ospatial; ++s) op[s] = bv;
  }
  for (int64_t co = 0; co < cout_; ++co) {
    for (int64_t ci = 0; ci < cin_; ++ci) {
      const double* wtap =
          weight.data.data() + ((co * cin_ + ci) * k_) * k_ * k_;
      for (int64_t kd = 0; kd < k_; ++kd) {
        int64_t odlo, odhi;
        valid_range(kd - pad_, stride_, D, OD, odlo, odhi);
        for (int64_t kh = 0; kh < k_; ++kh) {
          int64_t ohlo, ohhi;
          valid_range(kh - pad_, stride_, H, OH, ohlo, ohhi);
          for (int64_t kw = 0; kw < k_; ++kw) {
            const double wv = wtap[(kd * k_ + kh) * k_ + kw];
            int64_t owlo, owhi;
            valid_range(kw - pad_, stride_, W, OW, owlo, owhi);
            const int64_t wshift = kw - pad_;
            for (int64_t od = odlo; od <= odhi; ++od) {
              const int64_t id = od * stride_ + kd - pad_;
              for (int64_t oh = ohlo; oh <= ohhi; ++oh) {
                const int64_t ih = oh * stride_ + kh - pad_;
                const double* ip = in.data.data() + ((ci * D + id) * H + ih) * W;
                double* op =
                    out.data.data() + ((co * OD + od) * OH + oh) * OW;
                if (stride_ == 1) {
                  const double* ips = ip + wshift;
                  for (int64_t ow = owlo; ow <= owhi; ++ow)
                    op[ow] += wv * ips[ow];
                } else {
                  for (int64_t ow = owlo; ow <= owhi; ++ow)
                    op[ow] += wv * ip[ow * stride_ + wshift];
                }
              }
            }
          }
        }
      }
    }
  }
  out.require_finite("conv3d");
  cache.input = in;
  return out;
}

Tensor Conv3d::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  check_4d(in, cin_, "conv3d");
  check_4d(gout, cout_, "conv3d backward");
  const int64_t D = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t OD = gout.dim(1), OH = gout.dim(2), OW = gout.dim(3);
  Tensor gin(in.shape);
  const int64_t ospatial = OD * OH * OW;
  for (int64_t co = 0; co < cout_; ++co) {
    const double* gp = gout.data.data() + co * ospatial;
    double s = 0.0;
    for (int64_t i = 0; i < ospatial; ++i) s += gp[i];
    gbias.data[static_cast<size_t>(co)] += s;
  }
  for (int64_t co = 0; co < cout_; ++co) {
    for (int64_t ci = 0; ci < cin_; ++ci) {
      const double* wtap =
          weight.data.data() + ((co * cin_ + ci) * k_) * k_ * k_;
      double* gwtap = gweight.data.data() + ((co * cin_ + ci) * k_) * k_ * k_;
      for (int64_t kd = 0; kd < k_; ++kd) {
        int64_t odlo, odhi;
        valid_range(kd - pad_, stride_, D, OD, odlo, odhi);
        for (int64_t kh = 0; kh < k_; ++kh) {
          int64_t ohlo, ohhi;
          valid_range(kh - pad_, stride_, H, OH, ohlo, ohhi);
          for (int64_t kw = 0; kw < k_; ++kw) {
            const double wv = wtap[(kd * k_ + kh) * k_ + kw];
            int64_t owlo, owhi;
            valid_range(kw - pad_, stride_, W, OW, owlo, owhi);
            const int64_t wshift = kw - pad_;
            double acc = 0.0;
            for (int64_t od = odlo; od <= odhi; ++od) {
              const int64_t id = od * stride_ + kd - pad_;
              for (int64_t oh = ohlo; oh <= ohhi; ++oh) {
                const int64_t ih = oh * stride_ + kh - pad_;
                const double* ip = in.data.data() + ((ci * D + id) * H + ih) * W;
                double* gip = gin.data.data() + ((ci * D + id) * H + ih) * W;
                const double* gp =
                    gout.data.data() + ((co * OD + od) * OH + oh) * OW;
                for (int64_t ow = owlo; ow <= owhi; ++ow) {
                  const double g = gp[ow];
                  const int64_t iw = ow * stride_ + wshift;
                  acc += g * ip[iw];
                  gip[iw] += wv * g;
                }
              }
            }
            gwtap[(kd * k_ + kh) * k_ + kw] += acc;
          }
        }
      }
    }
  }
  gin.require_finite("conv3d backward");
  return gin;
}

void Conv3d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &gweight});
  out.push_back({prefix + ".bias", &bias, &gbias});
}

void Conv3d::zero_grad() {
  gweight.fill(0.0);
  gbias.fill(0.0);
}

// --------------------------------------------------------------------------
// ConvTranspose3d
// --------------------------------------------------------------------------

ConvTranspose3d::ConvTranspose3d(int64_t cin, int64_t cout, int k, int stride,
                                 int pad, Rng& rng)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
  if (cin <= 0 || cout <= 0 || k <= 0 || stride <= 0 || pad < 0)
    throw std::invalid_argument("conv3d_transpose: bad constructor arguments");
  const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
  weight = Tensor::randn({cin, cout, k, k, k}, rng, std);
  bias = Tensor::zeros({cout});
  gweight = Tensor::zeros(weight.shape);
  gbias = Tensor::zeros(bias.shape);
}

Tensor ConvTranspose3d::forward(const Tensor& in, LayerCache& cache, bool) {
  check_4d(in, cin_, "conv3d_transpose");
  const int64_t D = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t OD = (D - 1) * stride_ - 2 * pad_ + k_;
  const int64_t OH = (H - 1) * stride_ - 2 * pad_ + k_;
  const int64_t OW = (W - 1) * stride_ - 2 * pad_ + k_;
  if (OD <= 0 || OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv3d_transpose: empty output");
  Tensor out({cout_, OD, OH, OW});
  const int64_t ospatial = OD * OH * OW;
  for (int64_t co = 0; co < cout_; ++co) {
    const double bv = bias.data[static_cast<size_t>(co)];
    double* op = out.data.data() + co * ospatial;
    for (int64_t s = 0; s < ospatial; ++s) op[s] = bv;
  }
  for (int64_t ci = 0; ci < cin_; ++ci) {
    for (int64_t co = 0; co < cout_; ++co) {
      const double* wtap =
          weight.data.data() + ((ci * cout_ + co) * k_) * k_ * k_;
      for (int64_t kd = 0; kd < k_; ++kd) {
        int64_t idlo, idhi;
        valid_range(kd - pad_, stride_, OD, D, idlo, idhi);
        for (int64_t kh = 0; kh < k_; ++kh) {
          int64_t ihlo, ihhi;
          valid_range(kh - pad_, stride_, OH, H, ihlo, ihhi);
          for (int64_t kw = 0; kw < k_; ++kw) {
            const double wv = wtap[(kd * k_ + kh) * k_ + kw];
            int64_t iwlo, iwhi;
            valid_range(kw - pad_, stride_, OW, W, iwlo, iwhi);
            const int64_t wshift = kw - pad_;
            for (int64_t id = idlo; id <= idhi; ++id) {
              const int64_t od = id * stride_ + kd - pad_;
              for (int64_t ih = ihlo; ih <= ihhi; ++ih) {
                const int64_t oh = ih * stride_ + kh - pad_;
                const double* ip = in.data.data() + ((ci * D + id) * H + ih) * W;
                double* op =
                    out.data.data() + ((co * OD + od) * OH + oh) * OW;
                for (int64_t iw = iwlo; iw <= iwhi; ++iw)
                  op[iw * stride_ + wshift] += wv * ip[iw];
              }
            }
          }
        }
      }
    }
  }
  out.require_finite("conv3d_transpose");
  cache.input = in;
  return out;
}

Tensor ConvTranspose3d::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  check_4d(in, cin_, "conv3d_transpose");
  check_4d(gout, cout_, "conv3d_transpose backward");
  const int64_t D = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t OD = gout.dim(1), OH = gout.dim(2), OW = gout.dim(3);
  Tensor gin(in.shape);
  const int64_t ospatial = OD * OH * OW;
  for (int64_t co = 0; co < cout_; ++co) {
    const double* gp = gout.data.data() + co * ospatial;
    double s = 0.0;
    for (int64_t i = 0; i < ospatial; ++i) s += gp[i];
    gbias.data[static_cast<size_t>(co)] += s;
  }
  for (int64_t ci = 0; ci < cin_; ++ci) {
    for (int64_t co = 0; co < cout_; ++co) {
      const double* wtap =
          weight.data.data() + ((ci * cout_ + co) * k_) * k_ * k_;
      double* gwtap = gweight.data.data() + ((ci * cout_ + co) * k_) * k_ * k_;
      for (int64_t kd = 0; kd < k_; ++kd) {
        int64_t idlo, idhi;
        valid_range(kd - pad_, stride_, OD, D, idlo, idhi);
        for (int64_t kh = 0; kh < k_; ++kh) {
          int64_t ihlo, ihhi;
          valid_range(kh - pad_, stride_, OH, H, ihlo, ihhi);
          for (int64_t kw = 0; kw < k_; ++kw) {
            const double wv = wtap[(kd * k_ + kh) * k_ + kw];
            int64_t iwlo, iwhi;
            valid_range(kw - pad_, stride_, OW, W, iwlo, iwhi);
            const int64_t wshift = kw - pad_;
            double acc = 0.0;
            for (int64_t id = idlo; id <= idhi; ++id) {
              const int64_t od = id * stride_ + kd - pad_;
              for (int64_t ih = ihlo; ih <= ihhi; ++ih) {
                const int64_t oh = ih * stride_ + kh - pad_;
                const double* ip = in.data.data() + ((ci * D + id) * H + ih) * W;
                double* gip = gin.data.data() + ((ci * D + id) * H + ih) * W;
                const double* gp =
                    gout.data.data() + ((co * OD + od) * OH + oh) * OW;
                for (int64_t iw = iwlo; iw <= iwhi; ++iw) {
                  const double g = gp[iw * stride_ + wshift];
                  acc += g * ip[iw];
                  gip[iw] += wv * g;
                }
              }
            }
            gwtap[(kd * k_ + kh) * k_ + kw] += acc;
          }
        }
      }
    }
  }
  gin.require_finite("conv3d_transpose backward");
  return gin;
}

void ConvTranspose3d::collect(const std::string& prefix,
                              std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &gweight});
  out.push_back({prefix + ".bias", &bias, &gbias});
}

void ConvTranspose3d::zero_grad() {
  gweight.fill(0.0);
  gbias.fill(0.0);
}

// --------------------------------------------------------------------------
// GroupNorm
// --------------------------------------------------------------------------

GroupNorm::GroupNorm(int64_t channels, int64_t groups, double eps)
    : channels_(channels), groups_(groups), eps_(eps) {
  if (channels <= 0 || groups <= 0 || channels % groups != 0)
    throw std::invalid_argument("groupnorm: channels must divide into groups");
  gamma = Tensor::full({channels}, 1.0);
  beta = Tensor::zeros({channels});
  ggamma = Tensor::zeros({channels});
  gbeta = Tensor::zeros({channels});
}

Tensor GroupNorm::forward(const Tensor& in, LayerCache& cache, bool) {
  if (in.rank() < 1 || in.dim(0) != channels_)
    throw std::invalid_argument("groupnorm: bad input shape");
  const int64_t S = in.numel() / channels_;
  const int64_t cpg = channels_ / groups_;
  const int64_t N = cpg * S;
  Tensor out(in.shape);
  Tensor mean({groups_}), invstd({groups_});
  for (int64_t g = 0; g < groups_; ++g) {
    const double* xp = in.data.data() + g * cpg * S;
    double mu = 0.0;
    for (int64_t i = 0; i < N; ++i) mu += xp[i];
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (int64_t i = 0; i < N; ++i) {
      const double d = xp[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(N);
    const double inv = 1.0 / std::sqrt(var + eps_);
    mean.data[static_cast<size_t>(g)] = mu;
    invstd.data[static_cast<size_t>(g)] = inv;
    for (int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
      const double gc = gamma.data[static_cast<size_t>(c)];
      const double bc = beta.data[static_cast<size_t>(c)];
      const double* xc = in.data.data() + c * S;
      double* yc = out.data.data() + c * S;
      for (int64_t s = 0; s < S; ++s) yc[s] = gc * (xc[s] - mu) * inv + bc;
    }
  }
  out.require_finite("groupnorm");
  cache.input = in;
  cache.extra = {std::move(mean), std::move(invstd)};
  return out;
}

Tensor GroupNorm::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  const Tensor& mean = cache.extra[0];
  const Tensor& invstd = cache.extra[1];
  const int64_t S = in.numel() / channels_;
  const int64_t cpg = channels_ / groups_;
  const int64_t N = cpg * S;
  Tensor gin(in.shape);
  for (int64_t g = 0; g < groups_; ++g) {
    const double mu = mean.data[static_cast<size_t>(g)];
    const double inv = invstd.data[static_cast<size_t>(g)];
    double s1 = 0.0, s2 = 0.0;
    for (int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
      const double gc = gamma.data[static_cast<size_t>(c)];
      const double* xc = in.data.data() + c * S;
      const double* gp = gout.data.data() + c * S;
      double dg = 0.0, db = 0.0;
      for (int64_t s = 0; s < S; ++s) {
        const double xhat = (xc[s] - mu) * inv;
        const double d = gp[s] * gc;
        s1 += d;
        s2 += d * xhat;
        dg += gp[s] * xhat;
        db += gp[s];
      }
      ggamma.data[static_cast<size_t>(c)] += dg;
      gbeta.data[static_cast<size_t>(c)] += db;
    }
    const double m1 = s1 / static_cast<double>(N);
    const double m2 = s2 / static_cast<double>(N);
    for (int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
      const double gc = gamma.data[static_cast<size_t>(c)];
      const double* xc = in.data.data() + c * S;
      const double* gp = gout.data.data() + c * S;
      double* gi = gin.data.data() + c * S;
      for (int64_t s = 0; s < S; ++s) {
        const double xhat = (xc[s] - mu) * inv;
        gi[s] = inv * (gp[s] * gc - m1 - xhat * m2);
      }
    }
  }
  gin.require_finite("groupnorm backward");
  return gin;
}

void GroupNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggamma});
  out.push_back({prefix + ".beta", &beta, &gbeta});
}

void GroupNorm::zero_grad() {
  ggamma.fill(0.0);
  gbeta.fill(0.0);
}

// --------------------------------------------------------------------------
// SiLU / Sigmoid
// --------------------------------------------------------------------------

Tensor SiLU::forward(const Tensor& in, LayerCache& cache, bool) {
  Tensor out(in.shape);
  const size_t n = in.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double x = in.data[i];
    out.data[i] = x / (1.0 + std::exp(-x));
  }
  out.require_finite("silu");
  cache.input = in;
  return out;
}

Tensor SiLU::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  Tensor gin(in.shape);
  const size_t n = in.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double x = in.data[i];
    const double sig = 1.0 / (1.0 + std::exp(-x));
    gin.data[i] = gout.data[i] * sig * (1.0 + x * (1.0 - sig));
  }
  return gin;
}

Tensor Sigmoid::forward(const Tensor& in, LayerCache& cache, bool) {
  Tensor out(in.shape);
  const size_t n = in.data.size();
  for (size_t i = 0; i < n; ++i)
    out.data[i] = 1.0 / (1.0 + std::exp(-in.data[i]));
  out.require_finite("sigmoid");
  cache.extra = {out};
  return out;
}

Tensor Sigmoid::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& y = cache.extra[0];
  Tensor gin(y.shape);
  const size_t n = y.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double yv = y.data[i];
    gin.data[i] = gout.data[i] * yv * (1.0 - yv);
  }
  return gin;
}

// --------------------------------------------------------------------------
// Attention
// --------------------------------------------------------------------------

Attention::Attention(int64_t channels, int64_t heads, Rng& rng)
    : channels_(channels), heads_(heads) {
  if (channels <= 0 || heads <= 0 || channels % heads != 0)
    throw std::invalid_argument("attention: heads must divide channels");
  const double std = std::sqrt(1.0 / static_cast<double>(channels));
  wq = Tensor::randn({channels, channels}, rng, std);
  wk = Tensor::randn({channels, channels}, rng, std);
  wv = Tensor::randn({channels, channels}, rng, std);
  wo = Tensor::randn({channels, channels}, rng, std);
  bq = Tensor::zeros({channels});
  bk = Tensor::zeros({channels});
  bv = Tensor::zeros({channels});
  bo = Tensor::zeros({channels});
  gwq = Tensor::zeros(wq.shape);
  gwk = Tensor::zeros(wk.shape);
  gwv = Tensor::zeros(wv.shape);
  gwo = Tensor::zeros(wo.shape);
  gbq = Tensor::zeros(bq.shape);
  gbk = Tensor::zeros(bk.shape);
  gbv = Tensor::zeros(bv.shape);
  gbo = Tensor::zeros(bo.shape);
}

Tensor Attention::forward(const Tensor& in, LayerCache& cache, bool) {
  if (in.rank() < 1 || in.dim(0) != channels_)
    throw std::invalid_argument("attention: bad input shape");
  const int64_t C = channels_;
  const int64_t N = in.numel() / C;
  const int64_t dh = C / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = project(wq, &bq, in.data.data(), C, N);
  Tensor k = project(wk, &bk, in.data.data(), C, N);
  Tensor v = project(wv, &bv, in.data.data(), C, N);

  Tensor attn({heads_, N, N});
  Tensor ocat({C, N});
  for (int64_t h = 0; h < heads_; ++h) {
    double* ap = attn.data.data() + h * N * N;
    const int64_t row0 = h * dh;
    for (int64_t i = 0; i < N; ++i) {
      double* arow = ap + i * N;
      for (int64_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d)
          s += q.data[(row0 + d) * N + i] * k.data[(row0 + d) * N + j];
        arow[j] = s * scale;
      }
      double mx = arow[0];
      for (int64_t j = 1; j < N; ++j) mx = std::max(mx, arow[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < N; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        sum += arow[j];
      }
      const double invsum = 1.0 / sum;
      for (int64_t j = 0; j < N; ++j) arow[j] *= invsum;
    }
    for (int64_t d = 0; d < dh; ++d) {
      const double* vrow = v.data.data() + (row0 + d) * N;
      double* orow = ocat.data.data() + (row0 + d) * N;
      for (int64_t i = 0; i < N; ++i) {
        const double* arow = ap + i * N;
        double s = 0.0;
        for (int64_t j = 0; j < N; ++j) s += arow[j] * vrow[j];
        orow[i] = s;
      }
    }
  }

  Tensor yflat = project(wo, &bo, ocat.data.data(), C, N);
  Tensor out = yflat.reshaped(in.shape);
  out.require_finite("attention");
  cache.input = in;
  cache.extra = {std::move(q), std::move(k), std::move(v), std::move(attn),
                 std::move(ocat)};
  return out;
}

Tensor Attention::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  const Tensor& q = cache.extra[0];
  const Tensor& k = cache.extra[1];
  const Tensor& v = cache.extra[2];
  const Tensor& attn = cache.extra[3];
  const Tensor& ocat = cache.extra[4];
  const int64_t C = channels_;
  const int64_t N = in.numel() / C;
  const int64_t dh = C / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor gin(in.shape);
  Tensor go({C, N});
  // y = wo * ocat + bo
  project_backward(wo, ocat.data.data(), gout.data.data(), C, C, N, gwo, &gbo,
                   go.data.data());

  Tensor gq({C, N}), gk({C, N}), gv({C, N});
  Tensor ga({N, N});
  for (int64_t h = 0; h < heads_; ++h) {
    const double* ap = attn.data.data() + h * N * N;
    const int64_t row0 = h * dh;
    // dA[i][j] = sum_d go[d][i] * v[d][j]; gv[d][j] += sum_i A[i][j] go[d][i]
    for (int64_t i = 0; i < N; ++i) {
      double* garow = ga.data.data() + i * N;
      for (int64_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d)
          s += go.data[(row0 + d) * N + i] * v.data[(row0 + d) * N + j];
        garow[j] = s;
      }
    }
    for (int64_t d = 0; d < dh; ++d) {
      const double* gorow = go.data.data() + (row0 + d) * N;
      double* gvrow = gv.data.data() + (row0 + d) * N;
      for (int64_t i = 0; i < N; ++i) {
        const double* arow = ap + i * N;
        const double g = gorow[i];
        for (int64_t j = 0; j < N; ++j) gvrow[j] += arow[j] * g;
      }
    }
    // softmax backward in place on ga, then dQ/dK with the 1/sqrt(dh) scale
    for (int64_t i = 0; i < N; ++i) {
      const double* arow = ap + i * N;
      double* garow = ga.data.data() + i * N;
      double dotv = 0.0;
      for (int64_t j = 0; j < N; ++j) dotv += arow[j] * garow[j];
      for (int64_t j = 0; j < N; ++j)
        garow[j] = arow[j] * (garow[j] - dotv) * scale;
    }
    for (int64_t d = 0; d < dh; ++d) {
      const double* qrow = q.data.data() + (row0 + d) * N;
      const double* krow = k.data.data() + (row0 + d) * N;
      double* gqrow = gq.data.data() + (row0 + d) * N;
      double* gkrow = gk.data.data() + (row0 + d) * N;
      for (int64_t i = 0; i < N; ++i) {
        const double* garow = ga.data.data() + i * N;
        double s = 0.0;
        const double qv = qrow[i];
        for (int64_t j = 0; j < N; ++j) {
          s += garow[j] * krow[j];
          gkrow[j] += garow[j] * qv;
        }
        gqrow[i] += s;
      }
    }
  }

  project_backward(wq, in.data.data(), gq.data.data(), C, C, N, gwq, &gbq,
                   gin.data.data());
  project_backward(wk, in.data.data(), gk.data.data(), C, C, N, gwk, &gbk,
                   gin.data.data());
  project_backward(wv, in.data.data(), gv.data.data(), C, C, N, gwv, &gbv,
                   gin.data.data());
  gin.require_finite("attention backward");
  return gin;
}

void Attention::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".wq", &wq, &gwq});
  out.push_back({prefix + ".wk", &wk, &gwk});
  out.push_back({prefix + ".wv", &wv, &gwv});
  out.push_back({prefix + ".wo", &wo, &gwo});
  out.push_back({prefix + ".bq", &bq, &gbq});
  out.push_back({prefix + ".bk", &bk, &gbk});
  out.push_back({prefix + ".bv", &bv, &gbv});
  out.push_back({prefix + ".bo", &bo, &gbo});
}

void Attention::zero_grad() {
  gwq.fill(0.0);
  gwk.fill(0.0);
  gwv.fill(0.0);
  gwo.fill(0.0);
  gbq.fill(0.0);
  gbk.fill(0.0);
  gbv.fill(0.0);
  gbo.fill(0.0);
}

// --------------------------------------------------------------------------
// Linear
// --------------------------------------------------------------------------

Linear::Linear(int64_t cin, int64_t cout, Rng& rng) : cin_(cin), cout_(cout) {
  if (cin <= 0 || cout <= 0)
    throw std::invalid_argument("linear: bad constructor arguments");
  weight = Tensor::randn({cout, cin}, rng, std::sqrt(2.0 / cin));
  bias = Tensor::zeros({cout});
  gweight = Tensor::zeros(weight.shape);
  gbias = Tensor::zeros(bias.shape);
}

Tensor Linear::forward(const Tensor& in, LayerCache& cache, bool) {
  if (in.rank() < 1 || in.dim(0) != cin_)
    throw std::invalid_argument("linear: bad input shape");
  const int64_t N = in.numel() / cin_;
  Tensor out = project(weight, &bias, in.data.data(), cin_, N);
  std::vector<int64_t> oshape = in.shape;
  oshape[0] = cout_;
  out = out.reshaped(std::move(oshape));
  out.require_finite("linear");
  cache.input = in;
  return out;
}

Tensor Linear::backward(const LayerCache& cache, const Tensor& gout) {
  const Tensor& in = cache.input;
  const int64_t N = in.numel() / cin_;
  Tensor gin(in.shape);
  project_backward(weight, in.data.data(), gout.data.data(), cin_, cout_, N,
                   gweight, &gbias, gin.data.data());
  return gin;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &gweight});
  out.push_back({prefix + ".bias", &bias, &gbias});
}

void Linear::zero_grad() {
  gweight.fill(0.0);
  gbias.fill(0.0);
}

// --------------------------------------------------------------------------
// Dropout
// --------------------------------------------------------------------------

Dropout::Dropout(double p, uint64_t seed) : p_(p), rng_(seed) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1)");
}

Tensor Dropout::forward(const Tensor& in, LayerCache& cache, bool training) {
  if (!training || p_ == 0.0) {
    cache.extra.clear();
    return in;
  }
  const double keep = 1.0 - p_;
  const double inv = 1.0 / keep;
  Tensor mask(in.shape);
  Tensor out(in.shape);
  const size_t n = in.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double m = rng_.uniform() >= p_ ? inv : 0.0;
    mask.data[i] = m;
    out.data[i] = in.data[i] * m;
  }
  cache.extra = {std::move(mask)};
  return out;
}

Tensor Dropout::backward(const LayerCache& cache, const Tensor& gout) {
  if (cache.extra.empty()) return gout;
  const Tensor& mask = cache.extra[0];
  Tensor gin(gout.shape);
  const size_t n = gout.data.size();
  for (size_t i = 0; i < n; ++i) gin.data[i] = gout.data[i] * mask.data[i];
  return gin;
}

// --------------------------------------------------------------------------
// containers
// --------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& in, LayerCache& cache, bool training) {
  cache.children.resize(layers_.size());
  Tensor cur = in;
  for (size_t i = 0; i < layers_.size(); ++i)
    cur = layers_[i]->forward(cur, cache.children[i], training);
  return cur;
}

Tensor Sequential::backward(const LayerCache& cache, const Tensor& gout) {
  Tensor g = gout;
  for (size_t i = layers_.size(); i-- > 0;)
    g = layers_[i]->backward(cache.children[i], g);
  return g;
}

void Sequential::collect(const std::string& prefix,
                         std::vector<ParamRef>& out) {
  for (size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect(prefix + "." + std::to_string(i), out);
}

void Sequential::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

Tensor Residual::forward(const Tensor& in, LayerCache& cache, bool training) {
  cache.children.resize(1);
  Tensor y = inner_->forward(in, cache.children[0], training);
  if (!y.same_shape(in))
    throw std::invalid_argument("residual: inner output shape differs");
  axpy(1.0, in, y);
  return y;
}

Tensor Residual::backward(const LayerCache& cache, const Tensor& gout) {
  Tensor gin = inner_->backward(cache.children[0], gout);
  axpy(1.0, gout, gin);
  return gin;
}

void Residual::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  inner_->collect(prefix + ".inner", out);
}

void Residual::zero_grad() { inner_->zero_grad(); }

// --------------------------------------------------------------------------
// layout helpers
// --------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw std::invalid_argument("concat_channels: rank mismatch");
  for (int i = 1; i < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw std::invalid_argument("concat_channels: spatial shape mismatch");
  std::vector<int64_t> shape = a.shape;
  shape[0] = a.dim(0) + b.dim(0);
  Tensor out(shape);
  std::memcpy(out.data.data(), a.data.data(), a.data.size() * sizeof(double));
  std::memcpy(out.data.data() + a.data.size(), b.data.data(),
              b.data.size() * sizeof(double));
  return out;
}

void split_channels(const Tensor& ab, int64_t ca, Tensor& a, Tensor& b) {
  if (ab.rank() < 1 || ca <= 0 || ca >= ab.dim(0))
    throw std::invalid_argument("split_channels: bad split point");
  std::vector<int64_t> sa = ab.shape, sb = ab.shape;
  sa[0] = ca;
  sb[0] = ab.dim(0) - ca;
  a = Tensor(sa);
  b = Tensor(sb);
  std::memcpy(a.data.data(), ab.data.data(), a.data.size() * sizeof(double));
  std::memcpy(b.data.data(), ab.data.data() + a.data.size(),
              b.data.size() * sizeof(double));
}

}  // namespace molgen

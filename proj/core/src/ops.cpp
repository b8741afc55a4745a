#include "cladnet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace cladnet {

namespace {

Tape& tape_of(Var a, Var b, const char* what) {
  if (a.tape() != b.tape()) throw NumericError(std::string(what) + ": operands on different tapes");
  return *a.tape();
}

void check_rowvec(const Tensor& m, const Tensor& v, const char* what) {
  check_matrix(m, what);
  check_matrix(v, what);
  if (v.rows() != 1 || v.cols() != m.cols()) {
    throw ShapeError(std::string(what) + ": row vector must be [1 x " + std::to_string(m.cols()) +
                     "], got " + shape_str(v.shape()));
  }
}

void check_colvec(const Tensor& m, const Tensor& v, const char* what) {
  check_matrix(m, what);
  check_matrix(v, what);
  if (v.cols() != 1 || v.rows() != m.rows()) {
    throw ShapeError(std::string(what) + ": column vector must be [" + std::to_string(m.rows()) +
                     " x 1], got " + shape_str(v.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b, "add");
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const double* bv = b.value().data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Shape shape = out.shape();
  return t.record(std::move(out), {a, b},
                  [ai, bi, shape](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    if (tp.requires_grad_of(ai)) accumulate_grad(grads[ai], g, shape);
                    if (tp.requires_grad_of(bi)) accumulate_grad(grads[bi], g, shape);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b, "sub");
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const double* bv = b.value().data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] -= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Shape shape = out.shape();
  return t.record(std::move(out), {a, b},
                  [ai, bi, shape](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    if (tp.requires_grad_of(ai)) accumulate_grad(grads[ai], g, shape);
                    if (tp.requires_grad_of(bi)) {
                      Tensor neg = g;
                      for (double& v : neg.values()) v = -v;
                      accumulate_grad(grads[bi], neg, shape);
                    }
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b, "mul");
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const double* bv = b.value().data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Shape shape = out.shape();
  return t.record(std::move(out), {a, b},
                  [ai, bi, shape](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    if (tp.requires_grad_of(ai)) {
                      Tensor da(shape);
                      const double* bv2 = tp.value_of(bi).data().data();
                      for (std::size_t i = 0; i < da.numel(); ++i)
                        da.values()[i] = g.data()[i] * bv2[i];
                      accumulate_grad(grads[ai], da, shape);
                    }
                    if (tp.requires_grad_of(bi)) {
                      Tensor db(shape);
                      const double* av2 = tp.value_of(ai).data().data();
                      for (std::size_t i = 0; i < db.numel(); ++i)
                        db.values()[i] = g.data()[i] * av2[i];
                      accumulate_grad(grads[bi], db, shape);
                    }
                  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b, "div");
  check_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  const double* bv = b.value().data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] /= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Shape shape = out.shape();
  return t.record(std::move(out), {a, b},
                  [ai, bi, shape](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    const double* av2 = tp.value_of(ai).data().data();
                    const double* bv2 = tp.value_of(bi).data().data();
                    if (tp.requires_grad_of(ai)) {
                      Tensor da(shape);
                      for (std::size_t i = 0; i < da.numel(); ++i)
                        da.values()[i] = g.data()[i] / bv2[i];
                      accumulate_grad(grads[ai], da, shape);
                    }
                    if (tp.requires_grad_of(bi)) {
                      Tensor db(shape);
                      for (std::size_t i = 0; i < db.numel(); ++i)
                        db.values()[i] = -g.data()[i] * av2[i] / (bv2[i] * bv2[i]);
                      accumulate_grad(grads[bi], db, shape);
                    }
                  });
}

Var mul_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  const std::size_t ai = a.id();
  const Shape shape = out.shape();
  return a.tape()->record(std::move(out), {a},
                          [ai, c, shape](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor da(shape);
                            for (std::size_t i = 0; i < da.numel(); ++i)
                              da.values()[i] = g.data()[i] * c;
                            accumulate_grad(grads[ai], da, shape);
                          });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  const std::size_t ai = a.id();
  const Shape shape = out.shape();
  return a.tape()->record(std::move(out), {a},
                          [ai, shape](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            accumulate_grad(grads[ai], g, shape);
                          });
}

namespace {

enum class BroadcastOp { kAdd, kMul, kDiv };

Var broadcast_rowvec(Var m, Var v, BroadcastOp op, const char* what) {
  Tape& t = tape_of(m, v, what);
  check_rowvec(m.value(), v.value(), what);
  const std::size_t r = m.value().rows(), c = m.value().cols();
  Tensor out = m.value();
  const double* vv = v.value().data().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double& o = out(i, j);
      switch (op) {
        case BroadcastOp::kAdd: o += vv[j]; break;
        case BroadcastOp::kMul: o *= vv[j]; break;
        case BroadcastOp::kDiv: o /= vv[j]; break;
      }
    }
  }
  const std::size_t mi = m.id(), vi = v.id();
  return t.record(std::move(out), {m, v},
                  [mi, vi, r, c, op](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    const Tensor& mv = tp.value_of(mi);
                    const Tensor& vv2 = tp.value_of(vi);
                    if (tp.requires_grad_of(mi)) {
                      Tensor dm({r, c});
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                          double gij = g(i, j);
                          switch (op) {
                            case BroadcastOp::kAdd: dm(i, j) = gij; break;
                            case BroadcastOp::kMul: dm(i, j) = gij * vv2(0, j); break;
                            case BroadcastOp::kDiv: dm(i, j) = gij / vv2(0, j); break;
                          }
                        }
                      accumulate_grad(grads[mi], dm, {r, c});
                    }
                    if (tp.requires_grad_of(vi)) {
                      Tensor dv({1, c});
                      for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i) {
                          double gij = g(i, j);
                          switch (op) {
                            case BroadcastOp::kAdd: acc += gij; break;
                            case BroadcastOp::kMul: acc += gij * mv(i, j); break;
                            case BroadcastOp::kDiv:
                              acc += -gij * mv(i, j) / (vv2(0, j) * vv2(0, j));
                              break;
                          }
                        }
                        dv(0, j) = acc;
                      }
                      accumulate_grad(grads[vi], dv, {1, c});
                    }
                  });
}

Var broadcast_colvec(Var m, Var v, BroadcastOp op, const char* what) {
  Tape& t = tape_of(m, v, what);
  check_colvec(m.value(), v.value(), what);
  const std::size_t r = m.value().rows(), c = m.value().cols();
  Tensor out = m.value();
  const double* vv = v.value().data().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double& o = out(i, j);
      switch (op) {
        case BroadcastOp::kAdd: o += vv[i]; break;
        case BroadcastOp::kMul: o *= vv[i]; break;
        case BroadcastOp::kDiv: o /= vv[i]; break;
      }
    }
  }
  const std::size_t mi = m.id(), vi = v.id();
  return t.record(std::move(out), {m, v},
                  [mi, vi, r, c, op](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    const Tensor& mv = tp.value_of(mi);
                    const Tensor& vv2 = tp.value_of(vi);
                    if (tp.requires_grad_of(mi)) {
                      Tensor dm({r, c});
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                          double gij = g(i, j);
                          switch (op) {
                            case BroadcastOp::kAdd: dm(i, j) = gij; break;
                            case BroadcastOp::kMul: dm(i, j) = gij * vv2(i, 0); break;
                            case BroadcastOp::kDiv: dm(i, j) = gij / vv2(i, 0); break;
                          }
                        }
                      accumulate_grad(grads[mi], dm, {r, c});
                    }
                    if (tp.requires_grad_of(vi)) {
                      Tensor dv({r, 1});
                      for (std::size_t i = 0; i < r; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          double gij = g(i, j);
                          switch (op) {
                            case BroadcastOp::kAdd: acc += gij; break;
                            case BroadcastOp::kMul: acc += gij * mv(i, j); break;
                            case BroadcastOp::kDiv:
                              acc += -gij * mv(i, j) / (vv2(i, 0) * vv2(i, 0));
                              break;
                          }
                        }
                        dv(i, 0) = acc;
                      }
                      accumulate_grad(grads[vi], dv, {r, 1});
                    }
                  });
}

}  // namespace

Var add_rowvec(Var m, Var v) { return broadcast_rowvec(m, v, BroadcastOp::kAdd, "add_rowvec"); }
Var mul_rowvec(Var m, Var v) { return broadcast_rowvec(m, v, BroadcastOp::kMul, "mul_rowvec"); }
Var div_rowvec(Var m, Var v) { return broadcast_rowvec(m, v, BroadcastOp::kDiv, "div_rowvec"); }
Var add_colvec(Var m, Var v) { return broadcast_colvec(m, v, BroadcastOp::kAdd, "add_colvec"); }
Var mul_colvec(Var m, Var v) { return broadcast_colvec(m, v, BroadcastOp::kMul, "mul_colvec"); }
Var div_colvec(Var m, Var v) { return broadcast_colvec(m, v, BroadcastOp::kDiv, "div_colvec"); }

namespace {

// C[m x n] = A[m x k] * B[k x n], ikj order.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* av = a.data().data();
  const double* bv = b.data().data();
  double* cv = c.values().data();
  std::fill(cv, cv + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* crow = cv + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

Tensor transpose_value(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul");
  check_matrix(a.value(), "matmul lhs");
  check_matrix(b.value(), "matmul rhs");
  if (a.value().cols() != b.value().rows()) {
    throw ShapeError("matmul: inner dimensions differ, lhs cols " +
                     std::to_string(a.value().cols()) + " vs rhs rows " +
                     std::to_string(b.value().rows()));
  }
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  Tensor out({m, n});
  matmul_into(a.value(), b.value(), out);
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {a, b},
                  [ai, bi, m, k, n](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    const Tensor& av = tp.value_of(ai);
                    const Tensor& bv = tp.value_of(bi);
                    if (tp.requires_grad_of(ai)) {
                      // dA = G * B^T
                      Tensor da({m, k});
                      Tensor bt = transpose_value(bv);
                      matmul_into(g, bt, da);
                      accumulate_grad(grads[ai], da, {m, k});
                    }
                    if (tp.requires_grad_of(bi)) {
                      // dB = A^T * G
                      Tensor db({k, n});
                      Tensor at = transpose_value(av);
                      matmul_into(at, g, db);
                      accumulate_grad(grads[bi], db, {k, n});
                    }
                  });
}

Var transpose(Var a) {
  check_matrix(a.value(), "transpose");
  Tensor out = transpose_value(a.value());
  const std::size_t ai = a.id();
  const Shape in_shape = a.value().shape();
  return a.tape()->record(std::move(out), {a},
                          [ai, in_shape](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            accumulate_grad(grads[ai], transpose_value(g), in_shape);
                          });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ai = a.id();
  const Shape shape = out.shape();
  return a.tape()->record(std::move(out), {a},
                          [ai, shape](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                            const Tensor& av = tp.value_of(ai);
                            Tensor da(shape);
                            for (std::size_t i = 0; i < da.numel(); ++i)
                              da.values()[i] = av.data()[i] > 0.0 ? g.data()[i] : 0.0;
                            accumulate_grad(grads[ai], da, shape);
                          });
}

Var sqrt_eps(Var a, double eps) {
  Tensor out = a.value();
  for (double& v : out.values()) {
    const double u = v + eps;
    if (u < 0.0) throw NumericError("sqrt_eps: negative operand " + std::to_string(u));
    v = std::sqrt(u);
  }
  const std::size_t ai = a.id();
  const Shape shape = out.shape();
  Tensor saved = out;
  return a.tape()->record(std::move(out), {a},
                          [ai, shape, saved](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor da(shape);
                            for (std::size_t i = 0; i < da.numel(); ++i)
                              da.values()[i] = 0.5 * g.data()[i] / saved.data()[i];
                            accumulate_grad(grads[ai], da, shape);
                          });
}

Tensor softmax_rows_value(const Tensor& m) {
  check_matrix(m, "softmax_rows");
  const std::size_t r = m.rows(), c = m.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = m(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, m(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= denom;
  }
  return out;
}

Var softmax_rows(Var m) {
  Tensor out = softmax_rows_value(m.value());
  const std::size_t mi = m.id();
  const std::size_t r = out.rows(), c = out.cols();
  Tensor saved = out;
  return m.tape()->record(std::move(out), {m},
                          [mi, r, c, saved](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor dm({r, c});
                            for (std::size_t i = 0; i < r; ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * saved(i, j);
                              for (std::size_t j = 0; j < c; ++j)
                                dm(i, j) = saved(i, j) * (g(i, j) - dot);
                            }
                            accumulate_grad(grads[mi], dm, {r, c});
                          });
}

Var log_softmax_rows(Var m) {
  check_matrix(m.value(), "log_softmax_rows");
  const Tensor& x = m.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(x(i, j) - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) - lse;
  }
  const std::size_t mi = m.id();
  Tensor saved = out;
  return m.tape()->record(std::move(out), {m},
                          [mi, r, c, saved](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor dm({r, c});
                            for (std::size_t i = 0; i < r; ++i) {
                              double gsum = 0.0;
                              for (std::size_t j = 0; j < c; ++j) gsum += g(i, j);
                              for (std::size_t j = 0; j < c; ++j)
                                dm(i, j) = g(i, j) - std::exp(saved(i, j)) * gsum;
                            }
                            accumulate_grad(grads[mi], dm, {r, c});
                          });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain, "layer_norm_rows");
  check_rowvec(x.value(), gain.value(), "layer_norm_rows gain");
  check_rowvec(x.value(), bias.value(), "layer_norm_rows bias");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();

  Tensor normalized({r, c});
  Tensor inv_std({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xv(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = inv;
    for (std::size_t j = 0; j < c; ++j) normalized(i, j) = (xv(i, j) - mean) * inv;
  }
  Tensor out({r, c});
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = normalized(i, j) * gv(0, j) + bv(0, j);

  const std::size_t xi = x.id(), gi = gain.id(), bi = bias.id();
  return t.record(std::move(out), {x, gain, bias},
                  [xi, gi, bi, r, c, normalized, inv_std](const Tape& tp, const Tensor& g,
                                                          std::vector<Tensor>& grads) {
                    const Tensor& gainv = tp.value_of(gi);
                    if (tp.requires_grad_of(gi)) {
                      Tensor dg({1, c});
                      for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i) acc += g(i, j) * normalized(i, j);
                        dg(0, j) = acc;
                      }
                      accumulate_grad(grads[gi], dg, {1, c});
                    }
                    if (tp.requires_grad_of(bi)) {
                      Tensor db({1, c});
                      for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i) acc += g(i, j);
                        db(0, j) = acc;
                      }
                      accumulate_grad(grads[bi], db, {1, c});
                    }
                    if (tp.requires_grad_of(xi)) {
                      Tensor dx({r, c});
                      const double dc = static_cast<double>(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        double h_mean = 0.0, hx_mean = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double h = g(i, j) * gainv(0, j);
                          h_mean += h;
                          hx_mean += h * normalized(i, j);
                        }
                        h_mean /= dc;
                        hx_mean /= dc;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double h = g(i, j) * gainv(0, j);
                          dx(i, j) = inv_std(i, 0) * (h - h_mean - normalized(i, j) * hx_mean);
                        }
                      }
                      accumulate_grad(grads[xi], dx, {r, c});
                    }
                  });
}

Var conv1d(Var x, Var kernels, std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(x, kernels, "conv1d");
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  check_matrix(xv, "conv1d input");
  if (kv.ndim() != 3) {
    throw ShapeError("conv1d: kernels must be 3-D [c_out x c_in x k], got shape " +
                     shape_str(kv.shape()));
  }
  const std::size_t c_in = xv.rows(), len = xv.cols();
  const std::size_t c_out = kv.shape()[0], k_cin = kv.shape()[1], k = kv.shape()[2];
  if (k_cin != c_in) {
    throw ShapeError("conv1d: kernel input-channel dimension " + std::to_string(k_cin) +
                     " does not match input channels " + std::to_string(c_in));
  }
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  if (k > len + 2 * padding) {
    throw ShapeError("conv1d: kernel length " + std::to_string(k) +
                     " exceeds padded input length " + std::to_string(len + 2 * padding));
  }
  const std::size_t len_out = (len + 2 * padding - k) / stride + 1;

  Tensor out({c_out, len_out});
  const double* xd = xv.data().data();
  const double* kd = kv.data().data();
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t ot = 0; ot < len_out; ++ot) {
      double acc = 0.0;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* krow = kd + (co * c_in + ci) * k;
        const double* xrow = xd + ci * len;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ot * stride + j) -
                                     static_cast<std::ptrdiff_t>(padding);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += xrow[src] * krow[j];
        }
      }
      out(co, ot) = acc;
    }
  }

  const std::size_t xi = x.id(), ki = kernels.id();
  return t.record(
      std::move(out), {x, kernels},
      [xi, ki, c_in, len, c_out, k, stride, padding, len_out](const Tape& tp, const Tensor& g,
                                                              std::vector<Tensor>& grads) {
        const Tensor& xv2 = tp.value_of(xi);
        const Tensor& kv2 = tp.value_of(ki);
        if (tp.requires_grad_of(xi)) {
          Tensor dx({c_in, len});
          for (std::size_t co = 0; co < c_out; ++co) {
            for (std::size_t ot = 0; ot < len_out; ++ot) {
              const double gv = g(co, ot);
              if (gv == 0.0) continue;
              for (std::size_t ci = 0; ci < c_in; ++ci) {
                const double* krow = kv2.data().data() + (co * c_in + ci) * k;
                for (std::size_t j = 0; j < k; ++j) {
                  const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ot * stride + j) -
                                             static_cast<std::ptrdiff_t>(padding);
                  if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                  dx(ci, static_cast<std::size_t>(src)) += gv * krow[j];
                }
              }
            }
          }
          accumulate_grad(grads[xi], dx, {c_in, len});
        }
        if (tp.requires_grad_of(ki)) {
          Tensor dk({c_out, c_in, k});
          double* dkd = dk.values().data();
          for (std::size_t co = 0; co < c_out; ++co) {
            for (std::size_t ot = 0; ot < len_out; ++ot) {
              const double gv = g(co, ot);
              if (gv == 0.0) continue;
              for (std::size_t ci = 0; ci < c_in; ++ci) {
                double* krow = dkd + (co * c_in + ci) * k;
                for (std::size_t j = 0; j < k; ++j) {
                  const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ot * stride + j) -
                                             static_cast<std::ptrdiff_t>(padding);
                  if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                  krow[j] += gv * xv2(ci, static_cast<std::size_t>(src));
                }
              }
            }
          }
          accumulate_grad(grads[ki], dk, {c_out, c_in, k});
        }
      });
}

Var avg_pool1d(Var x, std::size_t window, std::size_t stride) {
  const Tensor& xv = x.value();
  check_matrix(xv, "avg_pool1d input");
  const std::size_t c = xv.rows(), len = xv.cols();
  if (window == 0 || stride == 0) throw ShapeError("avg_pool1d: window and stride must be >= 1");
  if (window > len) {
    throw ShapeError("avg_pool1d: window " + std::to_string(window) + " exceeds input length " +
                     std::to_string(len));
  }
  const std::size_t len_out = (len - window) / stride + 1;
  Tensor out({c, len_out});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ot = 0; ot < len_out; ++ot) {
      double acc = 0.0;
      for (std::size_t j = 0; j < window; ++j) acc += xv(ci, ot * stride + j);
      out(ci, ot) = acc / static_cast<double>(window);
    }
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {x},
                          [xi, c, len, window, stride, len_out](const Tape&, const Tensor& g,
                                                                std::vector<Tensor>& grads) {
                            Tensor dx({c, len});
                            const double inv_w = 1.0 / static_cast<double>(window);
                            for (std::size_t ci = 0; ci < c; ++ci)
                              for (std::size_t ot = 0; ot < len_out; ++ot)
                                for (std::size_t j = 0; j < window; ++j)
                                  dx(ci, ot * stride + j) += g(ci, ot) * inv_w;
                            accumulate_grad(grads[xi], dx, {c, len});
                          });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const std::size_t ai = a.id();
  const Shape shape = a.value().shape();
  return a.tape()->record(Tensor::scalar(acc), {a},
                          [ai, shape](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            accumulate_grad(grads[ai], Tensor::filled(shape, g.data()[0]), shape);
                          });
}

Var row_sums(Var m) {
  const Tensor& mv = m.value();
  check_matrix(mv, "row_sums");
  const std::size_t r = mv.rows(), c = mv.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += mv(i, j);
    out(i, 0) = acc;
  }
  const std::size_t mi = m.id();
  return m.tape()->record(std::move(out), {m},
                          [mi, r, c](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor dm({r, c});
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) dm(i, j) = g(i, 0);
                            accumulate_grad(grads[mi], dm, {r, c});
                          });
}

Var col_sums(Var m) {
  const Tensor& mv = m.value();
  check_matrix(mv, "col_sums");
  const std::size_t r = mv.rows(), c = mv.cols();
  Tensor out({1, c});
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) acc += mv(i, j);
    out(0, j) = acc;
  }
  const std::size_t mi = m.id();
  return m.tape()->record(std::move(out), {m},
                          [mi, r, c](const Tape&, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor dm({r, c});
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) dm(i, j) = g(0, j);
                            accumulate_grad(grads[mi], dm, {r, c});
                          });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_matrix(av, "concat_cols lhs");
  check_matrix(bv, "concat_cols rhs");
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + std::to_string(av.rows()) + " vs " +
                     std::to_string(bv.rows()));
  }
  const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {a, b},
                  [ai, bi, r, ca, cb](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    if (tp.requires_grad_of(ai)) {
                      Tensor da({r, ca});
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < ca; ++j) da(i, j) = g(i, j);
                      accumulate_grad(grads[ai], da, {r, ca});
                    }
                    if (tp.requires_grad_of(bi)) {
                      Tensor db({r, cb});
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < cb; ++j) db(i, j) = g(i, ca + j);
                      accumulate_grad(grads[bi], db, {r, cb});
                    }
                  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b, "concat_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_matrix(av, "concat_rows lhs");
  check_matrix(bv, "concat_rows rhs");
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: column counts differ, " + std::to_string(av.cols()) + " vs " +
                     std::to_string(bv.cols()));
  }
  const std::size_t ra = av.rows(), rb = bv.rows(), c = av.cols();
  Tensor out({ra + rb, c});
  for (std::size_t i = 0; i < ra; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = av(i, j);
  for (std::size_t i = 0; i < rb; ++i)
    for (std::size_t j = 0; j < c; ++j) out(ra + i, j) = bv(i, j);
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {a, b},
                  [ai, bi, ra, rb, c](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    if (tp.requires_grad_of(ai)) {
                      Tensor da({ra, c});
                      for (std::size_t i = 0; i < ra; ++i)
                        for (std::size_t j = 0; j < c; ++j) da(i, j) = g(i, j);
                      accumulate_grad(grads[ai], da, {ra, c});
                    }
                    if (tp.requires_grad_of(bi)) {
                      Tensor db({rb, c});
                      for (std::size_t i = 0; i < rb; ++i)
                        for (std::size_t j = 0; j < c; ++j) db(i, j) = g(ra + i, j);
                      accumulate_grad(grads[bi], db, {rb, c});
                    }
                  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: need at least one row");
  Tape& t = *rows.front().tape();
  const std::size_t c = rows.front().value().cols();
  for (const Var& r : rows) {
    check_matrix(r.value(), "stack_rows");
    if (r.value().rows() != 1 || r.value().cols() != c) {
      throw ShapeError("stack_rows: every row must be [1 x " + std::to_string(c) + "], got " +
                       shape_str(r.value().shape()));
    }
  }
  const std::size_t k = rows.size();
  Tensor out({k, c});
  std::vector<std::size_t> ids(k);
  for (std::size_t i = 0; i < k; ++i) {
    ids[i] = rows[i].id();
    for (std::size_t j = 0; j < c; ++j) out(i, j) = rows[i].value()(0, j);
  }
  return t.record(std::move(out), rows,
                  [ids, c](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      if (!tp.requires_grad_of(ids[i])) continue;
                      Tensor dr({1, c});
                      for (std::size_t j = 0; j < c; ++j) dr(0, j) = g(i, j);
                      accumulate_grad(grads[ids[i]], dr, {1, c});
                    }
                  });
}

Var square(Var a) { return mul(a, a); }

Var mean_all(Var a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

Var mean_rows(Var m) {
  return mul_scalar(col_sums(m), 1.0 / static_cast<double>(m.value().rows()));
}

Var mean_cols(Var m) {
  return mul_scalar(row_sums(m), 1.0 / static_cast<double>(m.value().cols()));
}

Var dropout(Var a, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw NumericError("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  Tensor mask(a.value().shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = keep(rng) ? scale : 0.0;
  return mul(a, a.tape()->constant(std::move(mask)));
}

Tensor positional_encoding(std::size_t len, std::size_t d_model) {
  Tensor pe({len, d_model});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t j = 0; j < d_model; ++j) {
      const double pair = static_cast<double>(j / 2 * 2);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d_model));
      pe(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace cladnet

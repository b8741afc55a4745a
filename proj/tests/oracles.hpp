// Independent brute-force references for the numeric paths under test. These
// stay deliberately naive (straight loops, no shared code with the library)
// so a bug in the implementation cannot hide in its own oracle.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "cladnet/tensor.hpp"

namespace oracle {

using cladnet::Tensor;

inline Tensor softmax_rows(const Tensor& m) {
  Tensor out({m.rows(), m.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    long double denom = 0.0L;
    for (std::size_t j = 0; j < m.cols(); ++j) denom += std::exp(static_cast<long double>(m(i, j)));
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(i, j) = static_cast<double>(std::exp(static_cast<long double>(m(i, j))) / denom);
    }
  }
  return out;
}

inline Tensor layer_norm_rows(const Tensor& x, const std::vector<double>& gain,
                              const std::vector<double>& bias, double eps) {
  Tensor out({x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols());
    double var = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = gain[j] * (x(i, j) - mean) / std::sqrt(var + eps) + bias[j];
    }
  }
  return out;
}

// Triple-loop direct summation, zero padding.
inline Tensor conv1d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t padding) {
  const std::size_t c_in = x.rows(), len = x.cols();
  const std::size_t c_out = k.shape()[0], klen = k.shape()[2];
  const std::size_t len_out = (len + 2 * padding - klen) / stride + 1;
  Tensor out({c_out, len_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t t = 0; t < len_out; ++t) {
      double acc = 0;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t j = 0; j < klen; ++j) {
          const long long src = static_cast<long long>(t * stride + j) -
                                static_cast<long long>(padding);
          if (src < 0 || src >= static_cast<long long>(len)) continue;
          acc += x(ci, static_cast<std::size_t>(src)) *
                 k.at_flat((co * c_in + ci) * klen + j);
        }
      }
      out(co, t) = acc;
    }
  }
  return out;
}

inline Tensor avg_pool1d(const Tensor& x, std::size_t window, std::size_t stride) {
  const std::size_t len_out = (x.cols() - window) / stride + 1;
  Tensor out({x.rows(), len_out});
  for (std::size_t c = 0; c < x.rows(); ++c) {
    for (std::size_t t = 0; t < len_out; ++t) {
      double acc = 0;
      for (std::size_t j = 0; j < window; ++j) acc += x(c, t * stride + j);
      out(c, t) = acc / static_cast<double>(window);
    }
  }
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  return out;
}

// Single-head scaled dot-product attention with explicit per-row softmax.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale) {
  const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols();
  Tensor weights({lq, lk});
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<double> scores(lk);
    for (std::size_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (std::size_t p = 0; p < d; ++p) dot += q(i, p) * k(j, p);
      scores[j] = dot * scale;
    }
    double denom = 0;
    for (double s : scores) denom += std::exp(s);
    for (std::size_t j = 0; j < lk; ++j) weights(i, j) = std::exp(scores[j]) / denom;
  }
  Tensor out({lq, v.cols()});
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < lk; ++p) acc += weights(i, p) * v(p, j);
      out(i, j) = acc;
    }
  return out;
}

// Feature cross-correlation: double loop over the batch.
inline Tensor cross_correlation(const Tensor& r1, const Tensor& r2, double eps = 1e-12) {
  const std::size_t b = r1.rows(), d = r1.cols();
  Tensor c({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double num = 0, n1 = 0, n2 = 0;
      for (std::size_t s = 0; s < b; ++s) {
        num += r1(s, i) * r2(s, j);
        n1 += r1(s, i) * r1(s, i);
        n2 += r2(s, j) * r2(s, j);
      }
      c(i, j) = num / (std::sqrt(n1 + eps) * std::sqrt(n2 + eps));
    }
  }
  return c;
}

inline double barlow_twins(const Tensor& r1, const Tensor& r2, double lambda) {
  const Tensor c = cross_correlation(r1, r2);
  double invariance = 0, redundancy = 0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    invariance += (1.0 - c(i, i)) * (1.0 - c(i, i));
    for (std::size_t j = 0; j < c.cols(); ++j) {
      if (i != j) redundancy += c(i, j) * c(i, j);
    }
  }
  return invariance + lambda * redundancy;
}

inline double ntxent(const Tensor& r1, const Tensor& r2, double temperature) {
  const std::size_t b = r1.rows(), d = r1.cols();
  const std::size_t n = 2 * b;
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      z[i][j] = r1(i, j);
      z[b + i][j] = r2(i, j);
    }
  auto cosine = [&](std::size_t i, std::size_t j) {
    double dot = 0, ni = 0, nj = 0;
    for (std::size_t p = 0; p < d; ++p) {
      dot += z[i][p] * z[j][p];
      ni += z[i][p] * z[i][p];
      nj += z[j][p] * z[j][p];
    }
    return dot / (std::sqrt(ni + 1e-12) * std::sqrt(nj + 1e-12));
  };
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i < b ? b + i : i - b;
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      denom += std::exp(cosine(i, j) / temperature);
    }
    loss += -std::log(std::exp(cosine(i, pos) / temperature) / denom);
  }
  return loss / static_cast<double>(n);
}

inline double distill_l2(const Tensor& s, const Tensor& t) {
  double acc = 0;
  for (std::size_t i = 0; i < s.numel(); ++i) {
    const double d = s.at_flat(i) - t.at_flat(i);
    acc += d * d;
  }
  return acc / static_cast<double>(s.rows());
}

inline double distill_kl(const Tensor& student, const Tensor& teacher) {
  double acc = 0;
  for (std::size_t i = 0; i < student.rows(); ++i) {
    double zs = 0, zt = 0;
    for (std::size_t j = 0; j < student.cols(); ++j) {
      zs += std::exp(student(i, j));
      zt += std::exp(teacher(i, j));
    }
    for (std::size_t j = 0; j < student.cols(); ++j) {
      const double p = std::exp(teacher(i, j)) / zt;
      const double q = std::exp(student(i, j)) / zs;
      acc += p * std::log(p / q);
    }
  }
  return acc / static_cast<double>(student.rows());
}

inline double final_accuracy(const std::vector<std::vector<double>>& a) {
  double acc = 0;
  for (std::size_t t = 0; t < a.size(); ++t) acc += a[t][a.size() - 1];
  return acc / static_cast<double>(a.size());
}

inline double forgetting_measure(const std::vector<std::vector<double>>& a) {
  double acc = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double best = a[t][0];
    for (double v : a[t]) best = std::max(best, v);
    acc += best - a[t][a.size() - 1];
  }
  return acc / static_cast<double>(a.size());
}

inline double learning_accuracy(const std::vector<std::vector<double>>& a) {
  double acc = 0;
  for (std::size_t t = 0; t < a.size(); ++t) acc += a[t][t];
  return acc / static_cast<double>(a.size());
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-12);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.at_flat(i) - b.at_flat(i)));
  }
  return m;
}

inline double max_rel_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, rel_diff(a.at_flat(i), b.at_flat(i)));
  }
  return m;
}

inline Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor out({r, c});
  for (double& v : out.values()) v = dist(rng);
  return out;
}

inline Tensor random_tensor3(std::size_t a, std::size_t b, std::size_t c, std::mt19937_64& rng,
                             double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor out({a, b, c});
  for (double& v : out.values()) v = dist(rng);
  return out;
}

}  // namespace oracle

#pragma once

// Straight-loop forward pass of the recurrent actor-critic, reading the flat
// parameter vector by its documented slice order. No graph types involved.

#include <cmath>
#include <vector>

namespace savn::oracle {

struct PlainDims {
  std::size_t obs, embed, hidden, actions;
  bool success_head = false;
  std::size_t memory_k = 0;
};

struct PlainOutput {
  std::vector<double> logits, pi, q, h, c;
  double v = 0.0;
};

class PlainPolicy {
 public:
  PlainPolicy(PlainDims d, const std::vector<double>& flat) : d_(d), flat_(flat) {}

  PlainOutput step(const std::vector<double>& obs, const std::vector<double>& h, const std::vector<double>& c,
                   const std::vector<std::vector<double>>& memory = {}) const {
    std::size_t at = 0;
    const std::size_t E = d_.embed, H = d_.hidden, A = d_.actions;
    auto take = [&](std::size_t n) {
      const double* p = flat_.data() + at;
      at += n;
      return p;
    };
    const double* enc_w = take(E * d_.obs);
    const double* enc_b = take(E);
    const double* fus_w = take(E * E);
    const double* fus_b = take(E);
    const double* w_ih = take(4 * H * E);
    const double* w_hh = take(4 * H * H);
    const double* lb = take(4 * H);
    const double* wq = d_.memory_k ? take(H * H) : nullptr;
    const std::size_t D = d_.memory_k ? 2 * H : H;
    const double* act_w = take(A * D);
    const double* act_b = take(A);
    const double* cr_w = take(D);
    const double* cr_b = take(1);
    const double* sw = d_.success_head ? take(A * D) : nullptr;
    const double* sb = d_.success_head ? take(A) : nullptr;

    auto affine = [](const double* w, const double* b, const std::vector<double>& x, std::size_t rows) {
      std::vector<double> y(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        double s = b[r];
        for (std::size_t k = 0; k < x.size(); ++k) s += w[r * x.size() + k] * x[k];
        y[r] = s;
      }
      return y;
    };
    auto relu = [](std::vector<double> v) {
      for (auto& x : v) x = x > 0 ? x : 0;
      return v;
    };
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    auto e1 = relu(affine(enc_w, enc_b, obs, E));
    auto e2 = relu(affine(fus_w, fus_b, e1, E));
    std::vector<double> gates(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double s = lb[r];
      for (std::size_t k = 0; k < E; ++k) s += w_ih[r * E + k] * e2[k];
      for (std::size_t k = 0; k < H; ++k) s += w_hh[r * H + k] * h[k];
      gates[r] = s;
    }
    PlainOutput out;
    out.h.resize(H);
    out.c.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sig(gates[j]), f = sig(gates[H + j]), g = std::tanh(gates[2 * H + j]), o = sig(gates[3 * H + j]);
      out.c[j] = f * c[j] + i * g;
      out.h[j] = o * std::tanh(out.c[j]);
    }

    std::vector<double> feat = out.h;
    if (d_.memory_k) {
      std::vector<std::vector<double>> keys;
      const std::size_t n = std::min(memory.size(), d_.memory_k - 1);
      for (std::size_t i = memory.size() - n; i < memory.size(); ++i) keys.push_back(memory[i]);
      keys.push_back(out.h);
      std::vector<double> q(H, 0.0);
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t k = 0; k < H; ++k) q[r] += wq[r * H + k] * out.h[k];
      std::vector<double> score(keys.size());
      double mx = -1e300;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        double s = 0;
        for (std::size_t k = 0; k < H; ++k) s += keys[i][k] * q[k];
        score[i] = s / std::sqrt(static_cast<double>(H));
        mx = std::max(mx, score[i]);
      }
      double z = 0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t k = 0; k < H; ++k) {
        double ctx = 0;
        for (std::size_t i = 0; i < keys.size(); ++i) ctx += score[i] / z * keys[i][k];
        feat.push_back(ctx);
      }
    }

    out.logits = affine(act_w, act_b, feat, A);
    double mx = -1e300, z = 0;
    for (double l : out.logits) mx = std::max(mx, l);
    for (double l : out.logits) z += std::exp(l - mx);
    for (double l : out.logits) out.pi.push_back(std::exp(l - mx) / z);
    out.v = affine(cr_w, cr_b, feat, 1)[0];
    if (sw) {
      for (double x : affine(sw, sb, feat, A)) out.q.push_back(sig(x));
    }
    return out;
  }

 private:
  PlainDims d_;
  const std::vector<double>& flat_;
};

}  // namespace savn::oracle

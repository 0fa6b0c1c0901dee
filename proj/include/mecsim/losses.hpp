#pragma once

// Scalar loss formulas of the phasic policy-gradient agents and their batched
// forms with analytic gradients with respect to network outputs.
//
// Sign convention: the policy surrogate and entropy are objectives to be
// maximized; every *_loss function returns the quantity to minimize,
//   loss = -policy_objective - beta * entropy  (+ value losses).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecsim/nn.hpp"

namespace mecsim::losses {

using nn::Mat;

// One-step advantage with gamma = 0: the next-state value never enters.
inline double advantage(double reward, double value) { return reward - value; }

inline double clip_objective(double ratio, double adv, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * adv, clipped * adv);
}

// Clip objective floored at c * adv for negative advantages.
inline double dual_clip_objective(double ratio, double adv, double eps, double c) {
  const double base = clip_objective(ratio, adv, eps);
  return adv < 0 ? std::max(base, c * adv) : base;
}

// d(dual_clip_objective)/d(ratio).
inline double dual_clip_objective_grad(double ratio, double adv, double eps, double c) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  const double unclipped_term = ratio * adv, clipped_term = clipped * adv;
  const double base = std::min(unclipped_term, clipped_term);
  if (adv < 0 && c * adv > base) return 0.0;
  if (unclipped_term <= clipped_term) return adv;
  return (ratio > 1.0 - eps && ratio < 1.0 + eps) ? adv : 0.0;
}

// KL(p || q) over a categorical support; terms with p = 0 contribute 0.
inline double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("categorical_kl: size mismatch");
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

struct ValueLoss {
  double loss = 0.0;
  Mat grad;  // d loss / d pred
};

// mean of 0.5 (pred - target)^2 over every element.
inline ValueLoss value_loss(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("value_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  ValueLoss r;
  const Mat diff = pred - target;
  r.loss = 0.5 * diff.squaredNorm() / n;
  r.grad = diff / n;
  return r;
}

// Row-wise log-softmax of `heads` consecutive groups of `actions` logits.
inline Mat grouped_log_softmax(const Mat& logits, int heads, int actions) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    for (int k = 0; k < heads; ++k) {
      const auto seg = logits.row(b).segment(k * actions, actions);
      const double mx = seg.maxCoeff();
      const double lse = mx + std::log((seg.array() - mx).exp().sum());
      out.row(b).segment(k * actions, actions) = seg.array() - lse;
    }
  }
  return out;
}

struct PolicyLoss {
  double loss = 0.0;
  double objective = 0.0;     // batch mean of the per-sample objective
  double entropy = 0.0;       // batch mean of the summed head entropies
  double clip_fraction = 0.0;
  Mat grad_logits;
};

// Dual-clip surrogate with entropy bonus. `logits` is B x (heads*actions);
// `taken`, `old_logp` and `adv` are B x heads. Per-head terms are summed
// within a sample and averaged over the batch.
inline PolicyLoss policy_loss(const Mat& logits, int heads, int actions,
                              const Eigen::MatrixXi& taken, const Mat& old_logp,
                              const Mat& adv, double eps, double dual_clip, double beta) {
  const Eigen::Index batch = logits.rows();
  if (logits.cols() != heads * actions || taken.rows() != batch || taken.cols() != heads ||
      old_logp.rows() != batch || old_logp.cols() != heads || adv.rows() != batch ||
      adv.cols() != heads)
    throw std::invalid_argument("policy_loss: shape mismatch");
  PolicyLoss r;
  r.grad_logits = Mat::Zero(batch, logits.cols());
  const Mat logp = grouped_log_softmax(logits, heads, actions);
  const double inv_b = 1.0 / static_cast<double>(batch);
  int clipped = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int k = 0; k < heads; ++k) {
      const int off = k * actions;
      const int a = taken(b, k);
      const double ratio = std::exp(logp(b, off + a) - old_logp(b, k));
      const double A = adv(b, k);
      r.objective += dual_clip_objective(ratio, A, eps, dual_clip) * inv_b;
      const double dobj_dratio = dual_clip_objective_grad(ratio, A, eps, dual_clip);
      if (dobj_dratio == 0.0 && A != 0.0) ++clipped;
      double h = 0;
      for (int j = 0; j < actions; ++j) {
        const double lp = logp(b, off + j);
        h -= std::exp(lp) * lp;
      }
      r.entropy += h * inv_b;
      for (int j = 0; j < actions; ++j) {
        const double lp = logp(b, off + j);
        const double p = std::exp(lp);
        // d log pi(a) / d z_j = [j == a] - p_j
        const double dlogpi = (j == a ? 1.0 : 0.0) - p;
        const double dobj = dobj_dratio * ratio * dlogpi;
        const double dent = -p * (lp + h);
        r.grad_logits(b, off + j) = -(dobj + beta * dent) * inv_b;
      }
    }
  }
  r.loss = -r.objective - beta * r.entropy;
  r.clip_fraction = static_cast<double>(clipped) / static_cast<double>(batch * heads);
  return r;
}

struct JointAuxLoss {
  double loss = 0.0;
  double kl = 0.0;
  double aux = 0.0;
  Mat grad_logits;
  Mat grad_aux;
};

// Behavioral cloning toward `old_probs` plus auxiliary value regression:
//   mean_b sum_k KL(old_k || new_k) + mean 0.5 (aux - target)^2.
inline JointAuxLoss joint_aux_loss(const Mat& logits, int heads, int actions,
                                   const Mat& old_probs, const Mat& aux_values,
                                   const Mat& targets) {
  const Eigen::Index batch = logits.rows();
  if (logits.cols() != heads * actions || old_probs.rows() != batch ||
      old_probs.cols() != logits.cols())
    throw std::invalid_argument("joint_aux_loss: shape mismatch");
  JointAuxLoss r;
  r.grad_logits = Mat::Zero(batch, logits.cols());
  const Mat logq = grouped_log_softmax(logits, heads, actions);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int k = 0; k < heads; ++k) {
      const int off = k * actions;
      double psum = 0;
      for (int j = 0; j < actions; ++j) {
        const double p = old_probs(b, off + j);
        psum += p;
        if (p > 0) r.kl += p * (std::log(p) - logq(b, off + j)) * inv_b;
      }
      for (int j = 0; j < actions; ++j) {
        // d/dz_j of -sum_i p_i log q_i
        r.grad_logits(b, off + j) =
            (psum * std::exp(logq(b, off + j)) - old_probs(b, off + j)) * inv_b;
      }
    }
  }
  const ValueLoss v = value_loss(aux_values, targets);
  r.aux = v.loss;
  r.grad_aux = v.grad;
  r.loss = r.kl + r.aux;
  return r;
}

}  // namespace mecsim::losses

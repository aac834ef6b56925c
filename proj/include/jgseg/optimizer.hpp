// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptive-moment optimizer over named parameter lists. Moments are part of
// checkpoints so resumed runs are bit-identical.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jgseg/checkpoint.hpp"
#include "jgseg/param_store.hpp"

namespace jgseg {

template <typename T>
class Adam {
 public:
  struct Item {
    std::string name;
    ad::Var<T> var;
  };

  Adam(std::vector<Item> items, double lr, double beta1, double beta2, double eps = 1e-8)
      : items_(std::move(items)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& it : items_) {
      m_.emplace_back(it.var.shape());
      v_.emplace_back(it.var.shape());
    }
  }

  static Adam from_groups(const ParameterStore<T>& ps, const std::vector<std::string>& groups,
                          double lr, double beta1, double beta2) {
    std::vector<Item> items;
    for (const auto& e : ps.entries())
      for (const auto& g : groups)
        if (e.group == g) items.push_back({e.name, e.var});
    return Adam(std::move(items), lr, beta1, beta2);
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return t_; }

  // Applies accumulated gradients; parameters without gradients are skipped.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < items_.size(); ++i) {
      const auto& var = items_[i].var;
      if (!var.has_grad()) continue;
      const Tensor<T>& g = var.grad();
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      Tensor<T>& p = var.mutable_value();
      for (std::int64_t k = 0; k < g.numel(); ++k) {
        m[k] = static_cast<T>(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
        v[k] = static_cast<T>(beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k]);
        const double mh = m[k] / bc1;
        const double vh = v[k] / bc2;
        p[k] = static_cast<T>(p[k] - lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  void zero_grads() {
    for (auto& it : items_) it.var.zero_grad();
  }

  // Checkpoint integration: moments + step counter under `prefix`.
  void append_state(ParameterStore<float>& out, const std::string& prefix) const {
    static_assert(std::is_same_v<T, float>, "checkpointing is float-only");
    for (size_t i = 0; i < items_.size(); ++i) {
      out.add(prefix + ".m." + items_[i].name, "opt", m_[i]);
      out.add(prefix + ".v." + items_[i].name, "opt", v_[i]);
    }
    out.add(prefix + ".t", "opt",
            Tensor<float>({1}, {static_cast<float>(t_)}));
  }

  void load_state(const ParameterStore<float>& in, const std::string& prefix) {
    static_assert(std::is_same_v<T, float>, "checkpointing is float-only");
    for (size_t i = 0; i < items_.size(); ++i) {
      m_[i] = in.get(prefix + ".m." + items_[i].name).value();
      v_[i] = in.get(prefix + ".v." + items_[i].name).value();
    }
    t_ = static_cast<std::int64_t>(in.get(prefix + ".t").value()[0]);
  }

 private:
  std::vector<Item> items_;
  std::vector<Tensor<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace jgseg

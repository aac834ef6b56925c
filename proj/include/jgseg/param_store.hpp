// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Named, group-tagged registry of learnable arrays. Group tags partition the
// store; optimizer steps and freeze contracts are expressed against groups.

#pragma once

#include <algorithm>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "jgseg/autodiff.hpp"
#include "jgseg/rng.hpp"

namespace jgseg {

// Canonical group tags of the GAN parameter store.
namespace groups {
inline constexpr const char* kGShared = "G.shared";
inline constexpr const char* kGTImage = "G.tImage";
inline constexpr const char* kGTSeg = "G.tSeg";
inline constexpr const char* kGMapping = "G.mapping";
inline constexpr const char* kDr = "D_r";
inline constexpr const char* kDm = "D_m";
inline constexpr const char* kE = "E";
}  // namespace groups

template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::string group;
    ad::Var<T> var;
  };

  ad::Var<T> add(const std::string& name, const std::string& group, Tensor<T> init) {
    if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
    ad::Var<T> v(std::move(init), /*requires_grad=*/true);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, group, v});
    return v;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
    return entries_[it->second];
  }

  ad::Var<T> get(const std::string& name) const { return entry(name).var; }

  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  std::vector<ad::Var<T>> group_vars(const std::string& group) const {
    std::vector<ad::Var<T>> out;
    for (const auto& e : entries_)
      if (e.group == group) out.push_back(e.var);
    return out;
  }

  std::vector<ad::Var<T>> vars_with_group_prefix(const std::string& prefix) const {
    std::vector<ad::Var<T>> out;
    for (const auto& e : entries_)
      if (e.group.rfind(prefix, 0) == 0) out.push_back(e.var);
    return out;
  }

  std::vector<std::string> group_tags() const {
    std::vector<std::string> tags;
    for (const auto& e : entries_)
      if (std::find(tags.begin(), tags.end(), e.group) == tags.end()) tags.push_back(e.group);
    return tags;
  }

  void zero_grads() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  std::int64_t total_numel() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.var.numel();
    return n;
  }

  // FNV-1a over the raw bytes of every array, in registration order. Used by
  // freeze contracts (bit-identical before/after).
  std::uint64_t content_hash(const std::string& group_prefix = "") const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& e : entries_) {
      if (!group_prefix.empty() && e.group.rfind(group_prefix, 0) != 0) continue;
      const T* d = e.var.value().data();
      const auto* bytes = reinterpret_cast<const unsigned char*>(d);
      const size_t nbytes = static_cast<size_t>(e.var.numel()) * sizeof(T);
      for (size_t i = 0; i < nbytes; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
      }
    }
    return h;
  }

 private:
  std::map<std::string, size_t> index_;
  std::vector<Entry> entries_;
};

}  // namespace jgseg

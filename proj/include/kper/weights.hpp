#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "kper/errors.hpp"
#include "kper/mismatch_info.hpp"

namespace kper {

// Weight values are integers, possibly undefined. Undefinedness propagates
// through every operation; both shipped plugins always stay defined.
struct Weight {
  bool defined = true;
  int64_t value = 0;

  static Weight undefined() { return {false, 0}; }
  static Weight of(int64_t v) { return {true, v}; }
  int64_t require() const {
    if (!defined) throw UndefinedWeight("weight is undefined");
    return value;
  }
  friend bool operator==(const Weight& a, const Weight& b) {
    if (!a.defined || !b.defined) return a.defined == b.defined;
    return a.value == b.value;
  }
};

inline int64_t enc_char(unsigned char c) { return static_cast<int64_t>(c) + 1; }

// Additive string weights: w(XY) = w(X) + w(Y), and a weight of Y can be
// derived from w(X) plus the aligned differences MI(X, Y).
class WeightPlugin {
public:
  virtual ~WeightPlugin() = default;
  virtual const char* name() const = 0;
  virtual Weight empty() const = 0;
  virtual Weight feed(Weight acc, unsigned char c) const = 0;

  Weight combine(Weight a, Weight b) const {
    if (!a.defined || !b.defined) return Weight::undefined();
    return Weight::of(a.value + b.value);
  }
  Weight subtract(Weight whole, Weight prefix) const {
    if (!whole.defined || !prefix.defined) return Weight::undefined();
    return Weight::of(whole.value - prefix.value);
  }
  Weight scale(Weight a, uint64_t times) const {
    if (!a.defined) return Weight::undefined();
    return Weight::of(a.value * static_cast<int64_t>(times));
  }
  // w(Y) from w(X) and MI(X, Y).
  Weight update_from_mi(Weight wx, const MismatchInfo& mi) const {
    if (!wx.defined) return Weight::undefined();
    int64_t delta = 0;
    for (const auto& e : mi.entries()) delta += char_weight(e.right) - char_weight(e.left);
    return Weight::of(wx.value + delta);
  }
  Weight of_string(const std::string& s) const {
    Weight w = empty();
    for (unsigned char c : s) w = feed(w, c);
    return w;
  }

protected:
  virtual int64_t char_weight(unsigned char c) const = 0;
};

class ZeroWeight final : public WeightPlugin {
public:
  const char* name() const override { return "zero"; }
  Weight empty() const override { return Weight::of(0); }
  Weight feed(Weight acc, unsigned char) const override { return acc; }

protected:
  int64_t char_weight(unsigned char) const override { return 0; }
};

class CharSumWeight final : public WeightPlugin {
public:
  const char* name() const override { return "charsum"; }
  Weight empty() const override { return Weight::of(0); }
  Weight feed(Weight acc, unsigned char c) const override {
    if (!acc.defined) return acc;
    return Weight::of(acc.value + enc_char(c));
  }

protected:
  int64_t char_weight(unsigned char c) const override { return enc_char(c); }
};

const WeightPlugin& zero_weight();
const WeightPlugin& charsum_weight();
const WeightPlugin* weight_plugin_by_name(const std::string& name);

}  // namespace kper

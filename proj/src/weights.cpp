#include "kper/weights.hpp"

namespace kper {

const WeightPlugin& zero_weight() {
  static ZeroWeight plugin;
  return plugin;
}

const WeightPlugin& charsum_weight() {
  static CharSumWeight plugin;
  return plugin;
}

const WeightPlugin* weight_plugin_by_name(const std::string& name) {
  if (name == "zero") return &zero_weight();
  if (name == "charsum") return &charsum_weight();
  return nullptr;
}

}  // namespace kper

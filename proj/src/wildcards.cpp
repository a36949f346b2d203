#include "kper/wildcards.hpp"

#include "kper/errors.hpp"

namespace kper {
namespace {

// Substitutes the sentinel for wildcards while policing the byte contracts:
// the sentinel must not occur literally, and the wildcard count must stay
// within the configured maximum.
class SentinelSource : public CharSource {
 public:
  SentinelSource(CharSource& inner, const WildcardConfig& cfg)
      : inner_(inner), cfg_(cfg) {}

  bool next(unsigned char* c) override {
    if (!inner_.next(c)) return false;
    if (*c == static_cast<unsigned char>(cfg_.sentinel))
      throw InvalidInput("sentinel byte occurs literally in the input");
    if (*c == static_cast<unsigned char>(cfg_.wildcard)) {
      if (++seen_ > cfg_.max_wildcards)
        throw TooManyWildcards("wildcard count exceeds the configured maximum");
      *c = static_cast<unsigned char>(cfg_.sentinel);
    }
    return true;
  }

  bool reopen() override {
    if (!inner_.reopen()) return false;
    seen_ = 0;
    return true;
  }

  uint64_t seen() const { return seen_; }

 private:
  CharSource& inner_;
  const WildcardConfig& cfg_;
  uint64_t seen_ = 0;
};

}  // namespace

WildcardResult detect_wildcard_periods(CharSource& src, const WildcardConfig& cfg) {
  if (cfg.wildcard == cfg.sentinel)
    throw InvalidInput("wildcard and sentinel bytes must differ");

  // Budget two mismatches per allowed wildcard. Any budget at least twice the
  // actual wildcard count yields the same filtered set: extra headroom only
  // admits reports that the sentinel filter then removes.
  StreamConfig sc;
  sc.n = cfg.n;
  sc.k = 2 * cfg.max_wildcards;
  sc.delta = 0;
  sc.seed = cfg.seed;
  sc.weight = cfg.weight;
  sc.retry_limit = cfg.retry_limit;
  sc.matcher_compression = cfg.matcher_compression;

  SentinelSource wrapped(src, cfg);
  DetectResult raw = detect_periods(wrapped, sc);

  WildcardResult out;
  out.wildcards = wrapped.seen();
  out.stats = raw.stats;
  out.warning = raw.warning;
  const auto s = static_cast<unsigned char>(cfg.sentinel);
  for (auto& r : raw.reports) {
    bool compatible = true;
    for (const auto& e : r.mi.entries()) {
      if (e.left != s && e.right != s) {
        compatible = false;
        break;
      }
    }
    if (compatible) out.reports.push_back(std::move(r));
  }
  return out;
}

WildcardResult detect_wildcard_periods(const std::string& text, const WildcardConfig& cfg) {
  StringSource src(text);
  WildcardConfig c = cfg;
  c.n = text.size();
  return detect_wildcard_periods(src, c);
}

}  // namespace kper

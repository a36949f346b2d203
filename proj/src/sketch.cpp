#include "kper/sketch.hpp"

#include <algorithm>
#include <cassert>
#include <random>

#include "kper/algebra.hpp"
#include "kper/weights.hpp"

namespace kper {

namespace {

constexpr uint64_t kMagic = 0x314b534bu;  // "KSK1" little-endian
const Fe kInv2 = Fe(2).inv();

void require_epoch(const KMismatchSketch& a, const KMismatchSketch& b) {
  if (a.seed_id != b.seed_id)
    throw EpochMismatch("sketches come from different seed epochs");
}

uint64_t shared_budget(const KMismatchSketch& a, const KMismatchSketch& b) {
  return std::min(a.k, b.k);
}

// Per-thread binomial rows, grown on demand; budgets are small and stable.
const BinomialTable& binomials(size_t need) {
  thread_local BinomialTable table(64);
  thread_local size_t capacity = 64;
  if (need > capacity) {
    capacity = std::max(need, capacity * 2);
    table = BinomialTable(capacity);
  }
  return table;
}

}  // namespace

RunContext RunContext::from_seed(uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  RunContext ctx;
  ctx.seed_id = rng();
  uint64_t base = 0;
  do {
    base = rng() % Fe::P;
  } while (base < (uint64_t{1} << 10));
  ctx.r = Fe(base);
  ctx.r_inv = ctx.r.inv();
  return ctx;
}

std::vector<unsigned char> KMismatchSketch::serialize() const {
  std::vector<unsigned char> out;
  auto put_u64 = [&out](uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(kMagic >> (8 * i)));
  put_u64(k);
  put_u64(length);
  for (Fe f : s_sums) put_u64(f.value());
  for (Fe f : t_sums) put_u64(f.value());
  put_u64(fingerprint.value());
  put_u64(seed_id);
  return out;
}

KMismatchSketch KMismatchSketch::deserialize(const std::vector<unsigned char>& bytes) {
  size_t off = 0;
  auto get_u64 = [&bytes, &off]() {
    if (off + 8 > bytes.size()) throw InvalidInput("sketch blob truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[off + i]) << (8 * i);
    off += 8;
    return v;
  };
  if (bytes.size() < 4) throw InvalidInput("sketch blob truncated");
  uint32_t magic = 0;
  for (int i = 0; i < 4; ++i) magic |= static_cast<uint32_t>(bytes[i]) << (8 * i);
  off = 4;
  if (magic != kMagic) throw InvalidInput("bad sketch magic");
  KMismatchSketch sk;
  sk.k = get_u64();
  sk.length = get_u64();
  size_t n = 2 * sk.k + 2;
  sk.s_sums.resize(n);
  sk.t_sums.resize(n);
  for (size_t i = 0; i < n; ++i) sk.s_sums[i] = Fe::from_raw(get_u64() % Fe::P);
  for (size_t i = 0; i < n; ++i) sk.t_sums[i] = Fe::from_raw(get_u64() % Fe::P);
  sk.fingerprint = Fe::from_raw(get_u64() % Fe::P);
  sk.seed_id = get_u64();
  if (off != bytes.size()) throw InvalidInput("sketch blob has trailing bytes");
  return sk;
}

KMismatchSketch sketch_of_string(const std::string& s, uint64_t k,
                                 const RunContext& ctx) {
  SketchBuilder b(k, ctx);
  for (unsigned char c : s) b.append(c);
  return b.snapshot();
}

KMismatchSketch sketch_truncate(const KMismatchSketch& u, uint64_t k) {
  if (k > u.k) throw LengthError("cannot raise a sketch budget by truncation");
  KMismatchSketch out;
  out.k = k;
  out.length = u.length;
  out.seed_id = u.seed_id;
  out.fingerprint = u.fingerprint;
  out.s_sums.assign(u.s_sums.begin(), u.s_sums.begin() + (2 * k + 2));
  out.t_sums.assign(u.t_sums.begin(), u.t_sums.begin() + (2 * k + 2));
  return out;
}

KMismatchSketch sketch_concat(const KMismatchSketch& u, const KMismatchSketch& v,
                              const RunContext& ctx) {
  require_epoch(u, v);
  uint64_t k = shared_budget(u, v);
  size_t n = 2 * k + 2;
  const BinomialTable& C = binomials(n);
  KMismatchSketch out;
  out.k = k;
  out.length = u.length + v.length;
  out.seed_id = u.seed_id;
  out.s_sums.resize(n);
  out.t_sums.resize(n);
  Fe m = Fe(u.length % Fe::P);
  std::vector<Fe> mpow(n);
  mpow[0] = fe(1);
  for (size_t j = 1; j < n; ++j) mpow[j] = mpow[j - 1] * m;
  for (size_t j = 0; j < n; ++j) {
    Fe s = u.s_sums[j], t = u.t_sums[j];
    for (size_t d = 0; d <= j; ++d) {
      Fe c = C.at(j, d) * mpow[j - d];
      s += c * v.s_sums[d];
      t += c * v.t_sums[d];
    }
    out.s_sums[j] = s;
    out.t_sums[j] = t;
  }
  out.fingerprint = u.fingerprint + ctx.r.pow(u.length) * v.fingerprint;
  return out;
}

KMismatchSketch sketch_split(const KMismatchSketch& whole,
                             const KMismatchSketch& part, SplitSide side,
                             const RunContext& ctx) {
  require_epoch(whole, part);
  if (part.length > whole.length)
    throw LengthError("split part longer than the whole");
  uint64_t k = shared_budget(whole, part);
  size_t n = 2 * k + 2;
  const BinomialTable& C = binomials(n);
  KMismatchSketch out;
  out.k = k;
  out.length = whole.length - part.length;
  out.seed_id = whole.seed_id;
  out.s_sums.resize(n);
  out.t_sums.resize(n);
  if (side == SplitSide::Left) {
    // part = prefix U, solve for suffix V: whole[j] = U[j] + sum C(j,d) m^{j-d} V[d].
    Fe m = Fe(part.length % Fe::P);
    std::vector<Fe> mpow(n);
    mpow[0] = fe(1);
    for (size_t j = 1; j < n; ++j) mpow[j] = mpow[j - 1] * m;
    for (size_t j = 0; j < n; ++j) {
      Fe s = whole.s_sums[j] - part.s_sums[j];
      Fe t = whole.t_sums[j] - part.t_sums[j];
      for (size_t d = 0; d < j; ++d) {
        Fe c = C.at(j, d) * mpow[j - d];
        s -= c * out.s_sums[d];
        t -= c * out.t_sums[d];
      }
      out.s_sums[j] = s;
      out.t_sums[j] = t;
    }
    out.fingerprint = (whole.fingerprint - part.fingerprint) * ctx.r_inv.pow(part.length);
  } else {
    // part = suffix V, recover prefix U directly.
    Fe m = Fe(out.length % Fe::P);
    std::vector<Fe> mpow(n);
    mpow[0] = fe(1);
    for (size_t j = 1; j < n; ++j) mpow[j] = mpow[j - 1] * m;
    for (size_t j = 0; j < n; ++j) {
      Fe s = whole.s_sums[j], t = whole.t_sums[j];
      for (size_t d = 0; d <= j; ++d) {
        Fe c = C.at(j, d) * mpow[j - d];
        s -= c * part.s_sums[d];
        t -= c * part.t_sums[d];
      }
      out.s_sums[j] = s;
      out.t_sums[j] = t;
    }
    out.fingerprint = whole.fingerprint - ctx.r.pow(out.length) * part.fingerprint;
  }
  return out;
}

KMismatchSketch sketch_power(const KMismatchSketch& u, uint64_t times,
                             const RunContext& ctx) {
  size_t n = 2 * u.k + 2;
  const BinomialTable& C = binomials(n);
  KMismatchSketch out;
  out.k = u.k;
  out.length = u.length * times;
  out.seed_id = u.seed_id;
  out.s_sums.resize(n);
  out.t_sums.resize(n);
  assert(out.length < Fe::P);
  Fe m = Fe(u.length % Fe::P);
  std::vector<Fe> mpow(n), csum(n);
  mpow[0] = fe(1);
  for (size_t j = 1; j < n; ++j) mpow[j] = mpow[j - 1] * m;
  for (size_t s = 0; s < n; ++s) csum[s] = range_power_sum(s, times);
  for (size_t j = 0; j < n; ++j) {
    Fe s = fe(0), t = fe(0);
    for (size_t d = 0; d <= j; ++d) {
      // Copy c of U sits at offset c*m: contributes C(j,d) (c*m)^(j-d) U[d].
      Fe c = C.at(j, d) * mpow[j - d] * csum[j - d];
      s += c * u.s_sums[d];
      t += c * u.t_sums[d];
    }
    out.s_sums[j] = s;
    out.t_sums[j] = t;
  }
  Fe g = ctx.r.pow(u.length);
  Fe geo;
  if (g == fe(1)) {
    geo = Fe(times % Fe::P);
  } else {
    geo = (g.pow(times) - fe(1)) / (g - fe(1));
  }
  out.fingerprint = u.fingerprint * geo;
  return out;
}

KMismatchSketch sketch_apply_mi(const KMismatchSketch& u, const MismatchInfo& mi,
                                const RunContext& ctx) {
  KMismatchSketch out = u;
  size_t n = out.s_sums.size();
  for (const auto& e : mi.entries()) {
    if (e.pos == 0 || e.pos > u.length)
      throw PositionOutOfRange("mismatch entry outside the sketched string");
    Fe el = Fe(static_cast<uint64_t>(enc_char(e.left)));
    Fe er = Fe(static_cast<uint64_t>(enc_char(e.right)));
    Fe d1 = er - el;
    Fe d2 = er * er - el * el;
    Fe p = Fe(e.pos % Fe::P);
    Fe ppow = fe(1);
    for (size_t j = 0; j < n; ++j) {
      out.s_sums[j] += d1 * ppow;
      out.t_sums[j] += d2 * ppow;
      ppow *= p;
    }
    out.fingerprint += d1 * ctx.r.pow(e.pos);
  }
  return out;
}

CompareOutcome sketch_compare(const KMismatchSketch& x, const KMismatchSketch& y,
                              const RunContext& ctx) {
  require_epoch(x, y);
  CompareOutcome out;
  if (x.length != y.length) {
    out.status = CompareStatus::LengthMismatch;
    return out;
  }
  uint64_t k = shared_budget(x, y);
  size_t n = 2 * k + 2;
  std::vector<Fe> d(n), c(n);
  bool all_zero = true;
  for (size_t j = 0; j < n; ++j) {
    d[j] = x.s_sums[j] - y.s_sums[j];
    c[j] = x.t_sums[j] - y.t_sums[j];
    if (!d[j].is_zero() || !c[j].is_zero()) all_zero = false;
  }
  if (all_zero) {
    if (x.fingerprint == y.fingerprint) out.status = CompareStatus::Within;
    return out;
  }
  RecurrenceResult rec = berlekamp_massey(d);
  size_t L = rec.length();
  if (L == 0 || L > k) return out;  // zero d-family with nonzero c, or over budget
  auto roots = roots_in_range(rec.characteristic(), x.length);
  if (!roots || roots->size() != L) return out;
  std::vector<Fe> nodes(L);
  for (size_t i = 0; i < L; ++i) nodes[i] = Fe((*roots)[i] % Fe::P);
  std::vector<Fe> v, u;
  try {
    v = solve_transposed_vandermonde(nodes, d);
    u = solve_transposed_vandermonde(nodes, c);
  } catch (const SingularSystem&) {
    return out;
  }
  // Both families must reproduce every syndrome, including the two spares.
  for (size_t j = 0; j < n; ++j) {
    Fe sd = fe(0), sc = fe(0);
    for (size_t i = 0; i < L; ++i) {
      Fe pj = nodes[i].pow(j);
      sd += v[i] * pj;
      sc += u[i] * pj;
    }
    if (sd != d[j] || sc != c[j]) return out;
  }
  MismatchInfo mi;
  Fe fp_delta = fe(0);
  for (size_t i = 0; i < L; ++i) {
    if (v[i].is_zero()) return out;
    Fe sum = u[i] / v[i];  // enc(left) + enc(right)
    Fe el = (sum + v[i]) * kInv2;
    Fe er = (sum - v[i]) * kInv2;
    int64_t li, ri;
    if (!fe_as_small_int(el, 256, &li) || !fe_as_small_int(er, 256, &ri)) return out;
    if (li < 1 || li > 256 || ri < 1 || ri > 256 || li == ri) return out;
    mi.add((*roots)[i], static_cast<unsigned char>(li - 1),
           static_cast<unsigned char>(ri - 1));
    fp_delta += (er - el) * ctx.r.pow((*roots)[i]);
  }
  if (x.fingerprint + fp_delta != y.fingerprint) return out;
  out.status = CompareStatus::Within;
  out.mi = std::move(mi);
  return out;
}

SketchBuilder::SketchBuilder(uint64_t k, const RunContext& ctx)
    : ctx_(&ctx), k_(k), s_sums_(2 * k + 2), t_sums_(2 * k + 2), r_pow_(fe(1)) {}

void SketchBuilder::append(unsigned char c) {
  ++length_;
  assert(length_ < Fe::P);
  Fe e = Fe(static_cast<uint64_t>(enc_char(c)));
  Fe e2 = e * e;
  Fe p = Fe(length_ % Fe::P);
  Fe ppow = fe(1);
  size_t n = s_sums_.size();
  for (size_t j = 0; j < n; ++j) {
    s_sums_[j] += e * ppow;
    t_sums_[j] += e2 * ppow;
    ppow *= p;
  }
  r_pow_ *= ctx_->r;
  fingerprint_ += e * r_pow_;
}

KMismatchSketch SketchBuilder::snapshot() const {
  KMismatchSketch sk;
  sk.k = k_;
  sk.length = length_;
  sk.s_sums = s_sums_;
  sk.t_sums = t_sums_;
  sk.fingerprint = fingerprint_;
  sk.seed_id = ctx_->seed_id;
  return sk;
}

KMismatchSketch SketchBuilder::snapshot_truncated(uint64_t k) const {
  if (k > k_) throw LengthError("cannot raise a builder budget by truncation");
  KMismatchSketch sk;
  sk.k = k;
  sk.length = length_;
  sk.seed_id = ctx_->seed_id;
  sk.fingerprint = fingerprint_;
  sk.s_sums.assign(s_sums_.begin(), s_sums_.begin() + (2 * k + 2));
  sk.t_sums.assign(t_sums_.begin(), t_sums_.begin() + (2 * k + 2));
  return sk;
}

}  // namespace kper

#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qnn/executor.hpp"
#include "qnn/plane.hpp"

namespace qnn::filter {

// ---------------------------------------------------------------------------------------------
// Candidate parameters, granularity and temporal gating

enum class TemporalLayer { Low, High };
enum class BitrateClass { Low, High };

/// Temporal layers with Tid >= 3 count as high (the same boundary as the temporal input gate).
inline TemporalLayer layer_of(int tid) { return tid >= 3 ? TemporalLayer::High : TemporalLayer::Low; }

using CandidateList = std::array<int, 3>;

inline CandidateList candidate_list(int qp, TemporalLayer layer) {
  return layer == TemporalLayer::Low ? CandidateList{qp, qp - 5, qp - 10} : CandidateList{qp, qp - 5, qp + 5};
}

/// On/off and parameter block size from the picture area and bitrate class.
inline int granularity(int width, int height, BitrateClass rate) {
  const std::int64_t area = static_cast<std::int64_t>(width) * height;
  const bool high = rate == BitrateClass::High;
  if (area >= 3840LL * 2160) return 256;
  if (area >= 1920LL * 1080) return high ? 64 : 128;
  return high ? 32 : 64;
}

enum class TemporalMode { Regular, Temporal };

inline TemporalMode temporal_gate(int tid) {
  check(tid >= 0, ErrorKind::InvalidArgument, "Tid must be >= 0");
  return tid >= 3 ? TemporalMode::Temporal : TemporalMode::Regular;
}

/// Rate-distortion multiplier 0.57 * 2^((QP - 12) / 3).
inline double default_lambda(int qp) { return 0.57 * std::pow(2.0, (qp - 12) / 3.0); }

// ---------------------------------------------------------------------------------------------
// Inputs and NN filtering

enum class InputRole { Rec, Pred, Bs, Qp, Ipb, Col0, Col1 };

inline const char* to_string(InputRole r) {
  constexpr const char* names[] = {"rec", "pred", "bs", "qp", "ipb", "col0", "col1"};
  return names[static_cast<int>(r)];
}

struct FilterInputs {
  Plane rec;  // R_no
  Plane pred;
  Plane bs;
  std::optional<Plane> ipb;   // luma only
  std::optional<Plane> col0;  // temporal pictures only
  std::optional<Plane> col1;
  int bit_depth = 10;
};

/// Input roles of a filter graph: metadata "filter.inputs" (comma-separated role names) or by count:
/// 4 = rec,pred,bs,qp; 5 adds ipb; 7 adds col0,col1.
inline std::vector<InputRole> input_roles(const Graph& g) {
  std::vector<InputRole> roles;
  if (auto m = g.meta("filter.inputs")) {
    std::string tok;
    std::istringstream in(*m);
    while (std::getline(in, tok, ',')) {
      bool found = false;
      for (int r = 0; r <= static_cast<int>(InputRole::Col1); ++r)
        if (tok == to_string(static_cast<InputRole>(r))) {
          roles.push_back(static_cast<InputRole>(r));
          found = true;
        }
      check(found, ErrorKind::InvalidGraph, "unknown filter input role '" + tok + "'");
    }
  } else {
    switch (g.inputs().size()) {
      case 4: roles = {InputRole::Rec, InputRole::Pred, InputRole::Bs, InputRole::Qp}; break;
      case 5: roles = {InputRole::Rec, InputRole::Pred, InputRole::Bs, InputRole::Qp, InputRole::Ipb}; break;
      case 7:
        roles = {InputRole::Rec, InputRole::Pred, InputRole::Bs, InputRole::Qp, InputRole::Ipb, InputRole::Col0, InputRole::Col1};
        break;
      default: fail(ErrorKind::InvalidGraph, "cannot infer filter input roles from " + std::to_string(g.inputs().size()) + " inputs");
    }
  }
  check(roles.size() == g.inputs().size(), ErrorKind::InvalidGraph, "filter.inputs lists a different number of inputs");
  return roles;
}

inline constexpr int patch_border = 8;

struct FilterConfig {
  int patch = 128;   // core patch size; inference patches are patch + 2 * 8
  int threads = 1;   // patch-parallel workers; results never depend on it
};

/// Worker count from QNN_THREADS, default 1.
inline int threads_from_env() {
  if (const char* s = std::getenv("QNN_THREADS")) {
    const int n = std::atoi(s);
    if (n >= 1) return n;
  }
  return 1;
}

namespace detail {

/// Normalised value of one sample of one role; the QP plane is constant.
inline double normalised(InputRole role, const FilterInputs& in, int qp, int x, int y) {
  const double full = std::ldexp(1.0, in.bit_depth);
  switch (role) {
    case InputRole::Rec: return in.rec.clamped(x, y) / full;
    case InputRole::Pred: return in.pred.clamped(x, y) / full;
    case InputRole::Bs: return in.bs.clamped(x, y) / 2.0;
    case InputRole::Qp: return qp / 64.0;
    case InputRole::Ipb: return in.ipb->clamped(x, y) / 2.0;
    case InputRole::Col0: return in.col0->clamped(x, y) / full;
    case InputRole::Col1: return in.col1->clamped(x, y) / full;
  }
  return 0.0;
}

/// Exact integer form of `normalised` at quantizer q (each divisor is a power of two).
inline std::int64_t normalised_int(InputRole role, const FilterInputs& in, int qp, int x, int y, int q) {
  auto scale = [&](std::int64_t v, int log2_div) { return round_shift(v, log2_div - q); };
  switch (role) {
    case InputRole::Rec: return scale(in.rec.clamped(x, y), in.bit_depth);
    case InputRole::Pred: return scale(in.pred.clamped(x, y), in.bit_depth);
    case InputRole::Bs: return scale(in.bs.clamped(x, y), 1);
    case InputRole::Qp: return scale(qp, 6);
    case InputRole::Ipb: return scale(in.ipb->clamped(x, y), 1);
    case InputRole::Col0: return scale(in.col0->clamped(x, y), in.bit_depth);
    case InputRole::Col1: return scale(in.col1->clamped(x, y), in.bit_depth);
  }
  return 0;
}

struct PatchRect {
  int x0, y0, w, h;  // core
};

template <Element T>
class PatchRunner {
 public:
  PatchRunner(const Graph& g, const std::vector<InputRole>& roles, const FilterInputs& in, int qp)
      : g_(g), roles_(roles), in_(in), qp_(qp) {}

  /// Residual of the core region in sample units, rounded to integers.
  void run(const PatchRect& p, Plane& residual) {
    const int ph = p.h + 2 * patch_border, pw = p.w + 2 * patch_border;
    const Dims dims{1, ph, pw, 1};
    auto& ctx = context_for(dims);
    std::vector<Tensor<T>> inputs;
    for (std::size_t k = 0; k < roles_.size(); ++k) {
      Tensor<T> t(dims, g_.inputs()[k].q);
      std::size_t i = 0;
      for (int yy = 0; yy < ph; ++yy)
        for (int xx = 0; xx < pw; ++xx) {
          const int sx = p.x0 - patch_border + xx, sy = p.y0 - patch_border + yy;
          if constexpr (element_traits<T>::integer)
            t[i++] = static_cast<T>(clip<std::int64_t>(normalised_int(roles_[k], in_, qp_, sx, sy, t.quantizer()), width_of<T>));
          else
            t[i++] = static_cast<T>(normalised(roles_[k], in_, qp_, sx, sy));
        }
      inputs.push_back(std::move(t));
    }
    const auto outs = ctx.run(inputs);
    const Tensor<T>& r = outs.front();
    check(r.size() == static_cast<std::size_t>(ph) * pw, ErrorKind::InvalidGraph,
          "filter output " + qnn::to_string(r.dims()) + " does not match patch " + std::to_string(ph) + "x" + std::to_string(pw));
    for (int yy = 0; yy < p.h; ++yy)
      for (int xx = 0; xx < p.w; ++xx) {
        const std::size_t i = static_cast<std::size_t>(yy + patch_border) * pw + (xx + patch_border);
        std::int64_t v;
        if constexpr (element_traits<T>::integer)
          v = round_shift(r[i], r.quantizer() - in_.bit_depth);
        else
          v = static_cast<std::int64_t>(std::round(std::ldexp(static_cast<double>(r[i]), in_.bit_depth)));
        residual.at(p.x0 + xx, p.y0 + yy) = static_cast<std::int32_t>(v);
      }
  }

 private:
  ExecutionContext<T>& context_for(const Dims& dims) {
    auto it = contexts_.find(dims);
    if (it == contexts_.end())
      it = contexts_.emplace(dims, ExecutionContext<T>(g_, std::vector<Dims>(roles_.size(), dims))).first;
    return it->second;
  }

  const Graph& g_;
  const std::vector<InputRole>& roles_;
  const FilterInputs& in_;
  int qp_;
  std::map<Dims, ExecutionContext<T>> contexts_;
};

template <Element T>
Plane nn_residual(const Graph& g, const FilterInputs& in, int qp, const FilterConfig& cfg) {
  const auto roles = input_roles(g);
  std::vector<PatchRect> patches;
  for (int y = 0; y < in.rec.height; y += cfg.patch)
    for (int x = 0; x < in.rec.width; x += cfg.patch)
      patches.push_back({x, y, std::min(cfg.patch, in.rec.width - x), std::min(cfg.patch, in.rec.height - y)});
  Plane residual(in.rec.width, in.rec.height);
  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(patches.size())));
  if (workers == 1) {
    PatchRunner<T> runner(g, roles, in, qp);
    for (const auto& p : patches) runner.run(p, residual);
    return residual;
  }
  // Patches write disjoint cores, so the split between workers cannot change the result.
  std::vector<std::thread> pool;
  std::mutex err_mu;
  std::optional<Error> first_error;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        PatchRunner<T> runner(g, roles, in, qp);
        for (std::size_t i = static_cast<std::size_t>(t); i < patches.size(); i += static_cast<std::size_t>(workers))
          runner.run(patches[i], residual);
      } catch (const Error& e) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = e;
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) throw *first_error;
  return residual;
}

}  // namespace detail

inline void check_inputs(const Graph& g, const FilterInputs& in) {
  require_same_dims(in.rec, in.pred, "pred plane");
  require_same_dims(in.rec, in.bs, "bs plane");
  for (InputRole r : input_roles(g)) {
    const std::optional<Plane>* p = r == InputRole::Ipb ? &in.ipb : r == InputRole::Col0 ? &in.col0 : r == InputRole::Col1 ? &in.col1 : nullptr;
    if (!p) continue;
    check(p->has_value(), ErrorKind::MissingPlane, std::string("model needs the ") + to_string(r) + " plane");
    require_same_dims(in.rec, **p, std::string(to_string(r)) + " plane");
  }
}

/// R_nn = R_no + f(inputs with the QP plane set to `param_qp`), clamped to [0, 2^b - 1].
inline Plane apply_nn_filter(const FilterInputs& in, const Graph& g, int param_qp, const FilterConfig& cfg = {}) {
  check(cfg.patch >= 1, ErrorKind::InvalidArgument, "patch size must be positive");
  check_inputs(g, in);
  Plane res;
  switch (g.width()) {
    case ElementWidth::f32: res = detail::nn_residual<float>(g, in, param_qp, cfg); break;
    case ElementWidth::i16: res = detail::nn_residual<std::int16_t>(g, in, param_qp, cfg); break;
    case ElementWidth::i32: res = detail::nn_residual<std::int32_t>(g, in, param_qp, cfg); break;
    case ElementWidth::i8: res = detail::nn_residual<std::int8_t>(g, in, param_qp, cfg); break;
  }
  const std::int32_t hi = (1 << in.bit_depth) - 1;
  for (std::size_t i = 0; i < res.samples.size(); ++i)
    res.samples[i] = std::clamp(in.rec.samples[i] + res.samples[i], 0, hi);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Residual scaling

inline constexpr int scale_denominator = 64;

struct ScaleFactor {
  std::int64_t num = 0;  // exact least-squares omega = num / den
  std::int64_t den = 0;
  int k = 0;             // signalled omega = k / 64
  bool degenerate = false;
  double value() const { return degenerate ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
};

/// Least-squares omega minimising ||orig - (omega (R_nn - R_db) + R_db)||^2, and its 1/64 quantization
/// (nearest, halves up). A zero NN correction is degenerate and gives omega = 0.
inline ScaleFactor derive_scale(const Plane& orig, const Plane& nn, const Plane& db) {
  require_same_dims(orig, nn, "R_nn");
  require_same_dims(orig, db, "R_db");
  ScaleFactor s;
  for (std::size_t i = 0; i < orig.samples.size(); ++i) {
    const std::int64_t e = orig.samples[i] - db.samples[i];
    const std::int64_t r = nn.samples[i] - db.samples[i];
    s.num += e * r;
    s.den += r * r;
  }
  if (s.den == 0) {
    s.degenerate = true;
    s.num = 0;
    s.den = 1;
    return s;
  }
  // k = round(64 num / den) = floor((128 num + den) / (2 den)).
  const int128 n = int128{128} * s.num + s.den;
  const int128 d = int128{2} * s.den;
  int128 k = n / d;
  if (n % d != 0 && n < 0) --k;
  s.k = static_cast<int>(k);
  return s;
}

/// clamp((k (R_nn - R_db) + 64 R_db + 32) >> 6) with omega = k / 64.
inline Plane apply_scale(const Plane& nn, const Plane& db, int k, int bit_depth) {
  require_same_dims(db, nn, "R_nn");
  Plane out(db.width, db.height);
  const std::int64_t hi = (std::int64_t{1} << bit_depth) - 1;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const std::int64_t v = std::int64_t{k} * (nn.samples[i] - db.samples[i]) + std::int64_t{64} * db.samples[i] + 32;
    out.samples[i] = static_cast<std::int32_t>(std::clamp<std::int64_t>(shift_right<std::int64_t>(v, 6), 0, hi));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Parameter selection

inline constexpr int param_index_bits = 2;  // ceil(log2(3))
inline constexpr int cost_count = 5;

enum class DecisionMode { Off, Uniform, PerBlock };

struct FilterDecision {
  DecisionMode mode = DecisionMode::Off;
  int param = 0;                     // 1..3 for Uniform
  int block_size = 0;
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<int> block_params;     // PerBlock: 0 = off, else 1..3, raster order
  std::array<ScaleFactor, 3> scales; // per candidate parameter
  std::array<double, cost_count> costs{};
  std::array<std::uint64_t, cost_count> sse{};
  std::array<std::uint64_t, cost_count> bits{};
  CandidateList candidates{};
};

struct SelectOptions {
  double lambda = 1.0;
  int block_size = 64;
  bool all_intra = false;  // parameter selection off, on/off control kept: only the first candidate is used
  int bit_depth = 10;
};

namespace detail {

inline std::uint64_t sse(const Plane& a, const Plane& b, int x0, int y0, int x1, int y1) {
  std::uint64_t s = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const std::int64_t d = a.at(x, y) - b.at(x, y);
      s += static_cast<std::uint64_t>(d * d);
    }
  return s;
}

}  // namespace detail

/// Chooses between Cost_0 (off), Cost_1..3 (one parameter for the picture) and Cost_4 (per block
/// off or one parameter) from the NN outputs of each candidate parameter. Cost = SSE + lambda * bits;
/// the lowest index wins ties.
inline FilterDecision select_from_planes(const Plane& orig, const Plane& db, const std::array<const Plane*, 3>& nn,
                                         const SelectOptions& opt) {
  check(opt.lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be >= 0");
  check(opt.block_size >= 1, ErrorKind::InvalidArgument, "block size must be positive");
  require_same_dims(orig, db, "R_db");
  FilterDecision d;
  d.block_size = opt.block_size;
  d.blocks_x = (orig.width + opt.block_size - 1) / opt.block_size;
  d.blocks_y = (orig.height + opt.block_size - 1) / opt.block_size;
  const int params = opt.all_intra ? 1 : 3;
  const int pbits = opt.all_intra ? 0 : param_index_bits;

  std::array<Plane, 3> scaled;
  for (int i = 0; i < params; ++i) {
    check(nn[i] != nullptr, ErrorKind::MissingPlane, "missing NN output for parameter " + std::to_string(i + 1));
    d.scales[i] = derive_scale(orig, *nn[i], db);
    scaled[i] = apply_scale(*nn[i], db, d.scales[i].k, opt.bit_depth);
  }

  const double inf = std::numeric_limits<double>::infinity();
  d.costs.fill(inf);
  d.sse[0] = detail::sse(orig, db, 0, 0, orig.width, orig.height);
  d.bits[0] = 0;
  d.costs[0] = static_cast<double>(d.sse[0]);
  for (int i = 0; i < params; ++i) {
    d.sse[i + 1] = detail::sse(orig, scaled[i], 0, 0, orig.width, orig.height);
    d.bits[i + 1] = static_cast<std::uint64_t>(pbits);
    d.costs[i + 1] = static_cast<double>(d.sse[i + 1]) + opt.lambda * pbits;
  }

  std::vector<int> choice(static_cast<std::size_t>(d.blocks_x) * d.blocks_y, 0);
  std::uint64_t pb_sse = 0, pb_bits = 0;
  for (int by = 0; by < d.blocks_y; ++by)
    for (int bx = 0; bx < d.blocks_x; ++bx) {
      const int x0 = bx * opt.block_size, y0 = by * opt.block_size;
      const int x1 = std::min(x0 + opt.block_size, orig.width), y1 = std::min(y0 + opt.block_size, orig.height);
      std::uint64_t best_sse = detail::sse(orig, db, x0, y0, x1, y1);
      int best_bits = 1;
      double best = static_cast<double>(best_sse) + opt.lambda * 1;
      int best_p = 0;
      for (int i = 0; i < params; ++i) {
        const std::uint64_t s = detail::sse(orig, scaled[i], x0, y0, x1, y1);
        const double c = static_cast<double>(s) + opt.lambda * (1 + pbits);
        if (c < best) {
          best = c;
          best_sse = s;
          best_bits = 1 + pbits;
          best_p = i + 1;
        }
      }
      choice[static_cast<std::size_t>(by) * d.blocks_x + bx] = best_p;
      pb_sse += best_sse;
      pb_bits += static_cast<std::uint64_t>(best_bits);
    }
  d.sse[4] = pb_sse;
  d.bits[4] = pb_bits;
  d.costs[4] = static_cast<double>(pb_sse) + opt.lambda * static_cast<double>(pb_bits);

  int best = 0;
  for (int i = 1; i < cost_count; ++i)
    if (d.costs[i] < d.costs[best]) best = i;
  if (best == 0) {
    d.mode = DecisionMode::Off;
  } else if (best < 4) {
    d.mode = DecisionMode::Uniform;
    d.param = best;
  } else {
    d.mode = DecisionMode::PerBlock;
    d.block_params = std::move(choice);
  }
  return d;
}

/// Final reconstruction for a decision: the scaled NN output where the filter is on, R_db elsewhere.
/// SAO is skipped; `alf_hook`, when given, runs last.
template <class Hook = std::nullptr_t>
Plane reconstruct(const FilterDecision& d, const Plane& db, const std::array<const Plane*, 3>& nn, int bit_depth,
                  Hook alf_hook = nullptr) {
  Plane out = db;
  auto scaled = [&](int p) { return apply_scale(*nn[p - 1], db, d.scales[p - 1].k, bit_depth); };
  if (d.mode == DecisionMode::Uniform) {
    out = scaled(d.param);
  } else if (d.mode == DecisionMode::PerBlock) {
    std::array<std::optional<Plane>, 3> cache;
    for (int by = 0; by < d.blocks_y; ++by)
      for (int bx = 0; bx < d.blocks_x; ++bx) {
        const int p = d.block_params[static_cast<std::size_t>(by) * d.blocks_x + bx];
        if (p == 0) continue;
        if (!cache[p - 1]) cache[p - 1] = scaled(p);
        const int x0 = bx * d.block_size, y0 = by * d.block_size;
        for (int y = y0; y < std::min(y0 + d.block_size, db.height); ++y)
          for (int x = x0; x < std::min(x0 + d.block_size, db.width); ++x) out.at(x, y) = cache[p - 1]->at(x, y);
      }
  }
  if constexpr (!std::is_same_v<Hook, std::nullptr_t>) out = alf_hook(out);
  return out;
}

struct HarnessResult {
  FilterDecision decision;
  Plane output;
  std::array<Plane, 3> nn_planes;
  TemporalMode temporal = TemporalMode::Regular;
};

struct HarnessOptions {
  int qp = 32;
  int tid = 0;
  std::optional<double> lambda;
  std::optional<BitrateClass> bitrate;  // default: High when qp < 30
  std::optional<int> block_size;
  bool all_intra = false;
  FilterConfig config;
};

/// The whole loop-filter control for one picture component.
inline HarnessResult run_filter(const Plane& orig, const Plane& db, const FilterInputs& in, const Graph& g,
                                const HarnessOptions& opt) {
  require_same_dims(orig, db, "R_db");
  require_same_dims(orig, in.rec, "rec plane");
  HarnessResult r;
  r.temporal = temporal_gate(opt.tid);
  const auto roles = input_roles(g);
  const bool wants_temporal = std::find(roles.begin(), roles.end(), InputRole::Col0) != roles.end();
  check(wants_temporal == (r.temporal == TemporalMode::Temporal), ErrorKind::InvalidArgument,
        std::string("Tid ") + std::to_string(opt.tid) + (wants_temporal ? " is below 3 but the model takes collocated planes"
                                                                         : " is 3 or more but the model has no collocated inputs"));
  const CandidateList list = candidate_list(opt.qp, layer_of(opt.tid));
  const int params = opt.all_intra ? 1 : 3;
  std::array<const Plane*, 3> nn{};
  for (int i = 0; i < params; ++i) {
    r.nn_planes[i] = apply_nn_filter(in, g, list[i], opt.config);
    nn[i] = &r.nn_planes[i];
  }
  SelectOptions so;
  so.lambda = opt.lambda.value_or(default_lambda(opt.qp));
  const BitrateClass rate = opt.bitrate.value_or(opt.qp < 30 ? BitrateClass::High : BitrateClass::Low);
  so.block_size = opt.block_size.value_or(granularity(orig.width, orig.height, rate));
  so.all_intra = opt.all_intra;
  so.bit_depth = in.bit_depth;
  r.decision = select_from_planes(orig, db, nn, so);
  r.decision.candidates = list;
  r.output = reconstruct(r.decision, db, nn, in.bit_depth);
  return r;
}

inline std::string to_string(DecisionMode m) {
  switch (m) {
    case DecisionMode::Off: return "off";
    case DecisionMode::Uniform: return "uniform";
    case DecisionMode::PerBlock: return "per-block";
  }
  return "?";
}

}  // namespace qnn::filter

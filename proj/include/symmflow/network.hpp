#pragma once

// GeneratorBank: one shared MLP parameterizing N_sym candidate
// infinitesimal generators on normalized (x,t,u). Architecture: two
// shared hidden layers of width 256 with swish activations, then a
// width-32 hidden layer and linear output of 3 per slot.
//
// The forward pass runs as a single composite tape op backed by dgemm,
// with a hand-written vector-Jacobian product; activations are
// recomputed during the sweep instead of being stored.

#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "symmflow/bundle.hpp"
#include "symmflow/linalg.hpp"
#include "symmflow/rng.hpp"
#include "symmflow/tape.hpp"

namespace symmflow {

struct BankConfig {
  int n_sym = 4;
  int trunk_width = 256;
  int head_width = 32;
};

namespace detail {

struct BankLayout {
  int64_t w1, b1, w2, b2;           // trunk offsets
  std::vector<int64_t> wh1, bh1, wh2, bh2;  // per-slot head offsets
  int64_t total;

  explicit BankLayout(const BankConfig& c) {
    int64_t tw = c.trunk_width, hw = c.head_width;
    int64_t o = 0;
    w1 = o; o += tw * 3;
    b1 = o; o += tw;
    w2 = o; o += tw * tw;
    b2 = o; o += tw;
    for (int a = 0; a < c.n_sym; ++a) {
      wh1.push_back(o); o += hw * tw;
      bh1.push_back(o); o += hw;
      wh2.push_back(o); o += 3 * hw;
      bh2.push_back(o); o += 3;
    }
    total = o;
  }
};

inline double swish_deriv(double z) {
  double s = ad::sigmoid_val(z);
  return s + z * s * (1.0 - s);
}

}  // namespace detail

/// Contiguous run of points evaluated through one slot's head.
struct SlotBlock {
  int slot;
  int64_t count;
};

class GeneratorBank {
 public:
  GeneratorBank(BankConfig cfg, uint64_t seed) : cfg_(cfg), layout_(cfg) {
    require(cfg.n_sym >= 1, "GeneratorBank: need at least one slot");
    params_.assign(static_cast<size_t>(layout_.total), 0.0);
    Rng rng = Rng::derive(seed, 0xba);
    init_linear(rng, layout_.w1, cfg.trunk_width, 3, layout_.b1);
    init_linear(rng, layout_.w2, cfg.trunk_width, cfg.trunk_width, layout_.b2);
    for (int a = 0; a < cfg.n_sym; ++a) {
      init_linear(rng, layout_.wh1[static_cast<size_t>(a)], cfg.head_width,
                  cfg.trunk_width, layout_.bh1[static_cast<size_t>(a)]);
      // Final head layer starts near zero so initial flows are close to
      // the identity and the first WENO evaluations stay tame.
      int64_t w = layout_.wh2[static_cast<size_t>(a)];
      for (int64_t i = 0; i < 3 * cfg.head_width + 3; ++i)
        params_[static_cast<size_t>(w + i)] = rng.uniform(-1e-3, 1e-3);
    }
  }

  const BankConfig& config() const { return cfg_; }
  int n_sym() const { return cfg_.n_sym; }
  int64_t param_count() const { return layout_.total; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// No-tape forward of one slot on `n` points (row-major [n,3]).
  void eval_raw(int slot, const double* pts, int64_t n, double* out) const {
    std::vector<SlotBlock> blocks{{slot, n}};
    eval_raw_blocks(params_.data(), pts, n, blocks, out);
  }

  /// No-tape forward where point rows are partitioned into per-slot blocks.
  void eval_raw_blocks(const double* theta, const double* pts, int64_t n,
                       std::span<const SlotBlock> blocks, double* out) const {
    int64_t tw = cfg_.trunk_width, hw = cfg_.head_width;
    std::vector<double> h1(static_cast<size_t>(n * tw)), h2(static_cast<size_t>(n * tw));
    trunk_forward(theta, pts, n, h1.data(), h2.data(), nullptr, nullptr);
    std::vector<double> g1(static_cast<size_t>(n * hw));
    int64_t row = 0;
    for (const auto& blk : blocks) {
      head_forward(theta, blk.slot, h2.data() + row * tw, blk.count,
                   g1.data() + row * hw, nullptr, out + row * 3);
      row += blk.count;
    }
    require(row == n, "eval_raw_blocks: block counts do not cover the points");
  }

  /// On-tape forward: one composite node. `theta` is the flat parameter
  /// leaf; `points` is [n,3]; rows are covered by `blocks` in order.
  ad::Var eval_on_tape(ad::Tape& t, ad::Var theta, ad::Var points,
                       std::vector<SlotBlock> blocks) const;

  ad::Var declare_theta(ad::Tape& t) const { return t.leaf(NdArray::from(params_)); }

  // -- checkpoint I/O (header.json + weights.f64) ---------------------------

  void save(const std::filesystem::path& dir, const Normalization& norm,
            const nlohmann::json& extra = {}) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json h;
    h["n_sym"] = cfg_.n_sym;
    h["trunk_width"] = cfg_.trunk_width;
    h["head_width"] = cfg_.head_width;
    h["param_count"] = layout_.total;
    h["layer_order"] = "W1,b1,W2,b2,(Wh1,bh1,Wh2,bh2) per slot";
    h["normalization"] = norm.to_json();
    if (!extra.is_null()) h["train"] = extra;
    std::ofstream f(dir / "header.json");
    f << h.dump(2) << "\n";
    require(f.good(), "checkpoint: failed writing header.json");
    std::ofstream w(dir / "weights.f64", std::ios::binary);
    w.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(sizeof(double) * params_.size()));
    require(w.good(), "checkpoint: failed writing weights.f64");
  }

  static GeneratorBank load(const std::filesystem::path& dir, Normalization* norm_out) {
    std::ifstream f(dir / "header.json");
    require(f.good(), "checkpoint: missing header.json under " + dir.string());
    nlohmann::json h;
    f >> h;
    BankConfig cfg;
    cfg.n_sym = detail::json_field(h, "n_sym").get<int>();
    cfg.trunk_width = detail::json_field(h, "trunk_width").get<int>();
    cfg.head_width = detail::json_field(h, "head_width").get<int>();
    GeneratorBank bank(cfg, 0);
    std::ifstream w(dir / "weights.f64", std::ios::binary);
    require(w.good(), "checkpoint: missing weights.f64");
    w.read(reinterpret_cast<char*>(bank.params_.data()),
           static_cast<std::streamsize>(sizeof(double) * bank.params_.size()));
    require(w.good() && w.gcount() ==
                static_cast<std::streamsize>(sizeof(double) * bank.params_.size()),
            "checkpoint: weights.f64 size mismatch");
    if (norm_out)
      *norm_out = Normalization::from_json(detail::json_field(h, "normalization"));
    return bank;
  }

 private:
  friend class NetEvalOp;

  void init_linear(Rng& rng, int64_t w_off, int64_t rows, int64_t cols, int64_t b_off) {
    double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int64_t i = 0; i < rows * cols; ++i)
      params_[static_cast<size_t>(w_off + i)] = rng.uniform(-bound, bound);
    for (int64_t i = 0; i < rows; ++i)
      params_[static_cast<size_t>(b_off + i)] = rng.uniform(-bound, bound);
  }

  /// Trunk forward; optionally stores pre-activations for the VJP.
  void trunk_forward(const double* theta, const double* pts, int64_t n, double* h1,
                     double* h2, double* h1pre, double* h2pre) const {
    int64_t tw = cfg_.trunk_width;
    // h1 = swish(X W1^T + b1)
    linalg::dgemm(false, true, n, tw, 3, 1.0, pts, theta + layout_.w1, 0.0, h1);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < tw; ++j) {
        double z = h1[i * tw + j] + theta[layout_.b1 + j];
        if (h1pre) h1pre[i * tw + j] = z;
        h1[i * tw + j] = z * ad::sigmoid_val(z);
      }
    linalg::dgemm(false, true, n, tw, tw, 1.0, h1, theta + layout_.w2, 0.0, h2);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < tw; ++j) {
        double z = h2[i * tw + j] + theta[layout_.b2 + j];
        if (h2pre) h2pre[i * tw + j] = z;
        h2[i * tw + j] = z * ad::sigmoid_val(z);
      }
  }

  void head_forward(const double* theta, int slot, const double* h2, int64_t n,
                    double* g1, double* g1pre, double* out) const {
    require(slot >= 0 && slot < cfg_.n_sym, "generator slot out of range");
    int64_t tw = cfg_.trunk_width, hw = cfg_.head_width;
    size_t s = static_cast<size_t>(slot);
    linalg::dgemm(false, true, n, hw, tw, 1.0, h2, theta + layout_.wh1[s], 0.0, g1);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < hw; ++j) {
        double z = g1[i * hw + j] + theta[layout_.bh1[s] + j];
        if (g1pre) g1pre[i * hw + j] = z;
        g1[i * hw + j] = z * ad::sigmoid_val(z);
      }
    linalg::dgemm(false, true, n, 3, hw, 1.0, g1, theta + layout_.wh2[s], 0.0, out);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < 3; ++j) out[i * 3 + j] += theta[layout_.bh2[s] + j];
  }

  BankConfig cfg_;
  detail::BankLayout layout_;
  std::vector<double> params_;
};

/// Composite tape op: out[n,3] = bank(theta, points) with per-slot blocks.
class NetEvalOp : public ad::CustomOp {
 public:
  NetEvalOp(const GeneratorBank* bank, std::vector<SlotBlock> blocks)
      : bank_(bank), blocks_(std::move(blocks)) {}

  const char* name() const override { return "net_eval"; }

  void backward(std::span<const NdArray> inputs, const NdArray& out_val,
                const NdArray& out_adj,
                const std::function<double*(size_t)>& grad_of) override {
    (void)out_val;
    const NdArray& points = inputs[0];
    const NdArray& theta_arr = inputs[1];
    const double* theta = theta_arr.data();
    const double* pts = points.data();
    int64_t n = points.dims()[0];
    const auto& lay = bank_->layout_;
    int64_t tw = bank_->cfg_.trunk_width, hw = bank_->cfg_.head_width;

    // Recompute forward activations.
    std::vector<double> h1(static_cast<size_t>(n * tw)), h2(static_cast<size_t>(n * tw));
    std::vector<double> h1pre(static_cast<size_t>(n * tw)), h2pre(static_cast<size_t>(n * tw));
    bank_->trunk_forward(theta, pts, n, h1.data(), h2.data(), h1pre.data(), h2pre.data());

    double* theta_adj = grad_of(1);
    double* pts_adj = grad_of(0);
    const double* g = out_adj.data();

    std::vector<double> h2_adj(static_cast<size_t>(n * tw), 0.0);
    std::vector<double> g1(static_cast<size_t>(n * hw)), g1pre(static_cast<size_t>(n * hw));
    int64_t row = 0;
    for (const auto& blk : blocks_) {
      size_t s = static_cast<size_t>(blk.slot);
      int64_t bn = blk.count;
      const double* h2b = h2.data() + row * tw;
      bank_->head_forward(theta, blk.slot, h2b, bn, g1.data(), g1pre.data(),
                          scratch_out(bn));
      const double* gb = g + row * 3;
      // g1_adj = gb * Wh2 ; Wh2_adj += gb^T g1 ; bh2_adj += colsum(gb)
      std::vector<double> g1_adj(static_cast<size_t>(bn * hw));
      linalg::dgemm(false, false, bn, hw, 3, 1.0, gb, theta + lay.wh2[s], 0.0, g1_adj.data());
      linalg::dgemm(true, false, 3, hw, bn, 1.0, gb, g1.data(), 1.0, theta_adj + lay.wh2[s]);
      for (int64_t i = 0; i < bn; ++i)
        for (int64_t j = 0; j < 3; ++j) theta_adj[lay.bh2[s] + j] += gb[i * 3 + j];
      // through swish of head hidden layer
      for (int64_t i = 0; i < bn * hw; ++i)
        g1_adj[static_cast<size_t>(i)] *= detail::swish_deriv(g1pre[static_cast<size_t>(i)]);
      linalg::dgemm(true, false, hw, tw, bn, 1.0, g1_adj.data(), h2b, 1.0,
                    theta_adj + lay.wh1[s]);
      for (int64_t i = 0; i < bn; ++i)
        for (int64_t j = 0; j < hw; ++j) theta_adj[lay.bh1[s] + j] += g1_adj[static_cast<size_t>(i * hw + j)];
      linalg::dgemm(false, false, bn, tw, hw, 1.0, g1_adj.data(), theta + lay.wh1[s], 1.0,
                    h2_adj.data() + row * tw);
      row += bn;
    }
    require(row == n, "net_eval backward: block counts do not cover the points");

    // trunk layer 2
    for (int64_t i = 0; i < n * tw; ++i)
      h2_adj[static_cast<size_t>(i)] *= detail::swish_deriv(h2pre[static_cast<size_t>(i)]);
    linalg::dgemm(true, false, tw, tw, n, 1.0, h2_adj.data(), h1.data(), 1.0,
                  theta_adj + lay.w2);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < tw; ++j) theta_adj[lay.b2 + j] += h2_adj[static_cast<size_t>(i * tw + j)];
    std::vector<double> h1_adj(static_cast<size_t>(n * tw));
    linalg::dgemm(false, false, n, tw, tw, 1.0, h2_adj.data(), theta + lay.w2, 0.0,
                  h1_adj.data());
    // trunk layer 1
    for (int64_t i = 0; i < n * tw; ++i)
      h1_adj[static_cast<size_t>(i)] *= detail::swish_deriv(h1pre[static_cast<size_t>(i)]);
    linalg::dgemm(true, false, tw, 3, n, 1.0, h1_adj.data(), pts, 1.0, theta_adj + lay.w1);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < tw; ++j) theta_adj[lay.b1 + j] += h1_adj[static_cast<size_t>(i * tw + j)];
    linalg::dgemm(false, false, n, 3, tw, 1.0, h1_adj.data(), theta + lay.w1, 1.0, pts_adj);
  }

  const std::vector<SlotBlock>& blocks() const { return blocks_; }

 private:
  // head_forward writes outputs when asked; the VJP only needs g1/g1pre.
  double* scratch_out(int64_t n) {
    scratch_.assign(static_cast<size_t>(n * 3), 0.0);
    return scratch_.data();
  }

  const GeneratorBank* bank_;
  std::vector<SlotBlock> blocks_;
  std::vector<double> scratch_;
};

inline ad::Var GeneratorBank::eval_on_tape(ad::Tape& t, ad::Var theta, ad::Var points,
                                           std::vector<SlotBlock> blocks) const {
  require(points.val().rank() == 2 && points.dims()[1] == 3,
          "eval_on_tape: points must be [n,3]");
  require(theta.numel() == layout_.total, "eval_on_tape: theta size mismatch");
  int64_t n = points.dims()[0];
  int64_t covered = 0;
  for (const auto& b : blocks) covered += b.count;
  require(covered == n, "eval_on_tape: blocks must cover all point rows");
  NdArray out({n, 3});
  eval_raw_blocks(theta.val().data(), points.val().data(), n, blocks, out.data());
  return ad::custom_op(t, {points, theta}, std::move(out),
                       std::make_unique<NetEvalOp>(this, std::move(blocks)));
}

}  // namespace symmflow

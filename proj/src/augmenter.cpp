#include "ralf/augmenter.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "ralf/error.hpp"

namespace ralf {

namespace {

// y = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) y[r] = dot(w.row(r), x);
}

// y += W^T g
void matvec_t_acc(const Matrix& w, std::span<const double> g, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < w.cols; ++c) y[c] += gr * wr[c];
  }
}

// G += a b^T
void add_outer(Matrix& g, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    auto gr = g.row(r);
    for (std::size_t c = 0; c < g.cols; ++c) gr[c] += ar * b[c];
  }
}

void softmax_inplace(std::span<double> x) {
  const double mx = *std::ranges::max_element(x);
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

double activate(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? x : 0.0;
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double activate_grad(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? 1.0 : 0.0;
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

bool all_finite(std::span<const double> v) {
  return std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
}

struct LayerCache {
  Vector q_in;
  Vector query;   // W_q q_in
  Matrix keys;    // (1+k) x dim
  Matrix values;  // (1+k) x dim
  Matrix att;     // heads x (1+k)
  Vector ctx;
  Vector q_mid;   // after the attention residual
  Vector h_pre;
  Vector h_act;
};

struct ForwardCache {
  Matrix M;
  std::vector<LayerCache> layers;
  Vector u;  // pre-normalization augmented feature
  double norm = 0.0;
  Vector v_aug;
};

Vector run_decoder(const Matrix& M, const AugmenterParams& p, std::vector<LayerCache>* caches) {
  const auto& cfg = p.config;
  const std::size_t dim = cfg.dim;
  const std::size_t head_dim = dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::size_t n = M.rows;

  Vector q = p.query_seed;
  if (caches) caches->resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& lp = p.layers[l];
    LayerCache c;
    c.q_in = q;
    c.query.assign(dim, 0.0);
    matvec(lp.wq, q, c.query);
    c.keys = Matrix(n, dim);
    c.values = Matrix(n, dim);
    for (std::size_t j = 0; j < n; ++j) {
      matvec(lp.wk, M.row(j), c.keys.row(j));
      matvec(lp.wv, M.row(j), c.values.row(j));
    }
    c.att = Matrix(cfg.heads, n);
    c.ctx.assign(dim, 0.0);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t off = h * head_dim;
      auto a = c.att.row(h);
      const std::span<const double> qh(c.query.data() + off, head_dim);
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = scale * dot(qh, c.keys.row(j).subspan(off, head_dim));
      }
      softmax_inplace(a);
      for (std::size_t j = 0; j < n; ++j) {
        const auto vj = c.values.row(j);
        for (std::size_t d = 0; d < head_dim; ++d) c.ctx[off + d] += a[j] * vj[off + d];
      }
    }
    c.q_mid = q;
    Vector attn_out(dim, 0.0);
    matvec(lp.wo, c.ctx, attn_out);
    for (std::size_t d = 0; d < dim; ++d) c.q_mid[d] += attn_out[d];

    c.h_pre.assign(cfg.ffn_dim, 0.0);
    matvec(lp.ffn_w1, c.q_mid, c.h_pre);
    c.h_act.resize(cfg.ffn_dim);
    for (std::size_t i = 0; i < cfg.ffn_dim; ++i) {
      c.h_pre[i] += lp.ffn_b1[i];
      c.h_act[i] = activate(cfg.activation, c.h_pre[i]);
    }
    Vector ffn_out(dim, 0.0);
    matvec(lp.ffn_w2, c.h_act, ffn_out);
    q = c.q_mid;
    for (std::size_t d = 0; d < dim; ++d) q[d] += ffn_out[d] + lp.ffn_b2[d];

    if (caches) (*caches)[l] = std::move(c);
  }
  if (!all_finite(q)) {
    throw Error(ErrorCode::NonFiniteIntermediate, "decoder produced a non-finite value");
  }
  return q;
}

ForwardCache forward(std::span<const double> v_r, const RetrievedConcepts& retrieved,
                     const AugmenterParams& p) {
  ForwardCache fc;
  fc.M = build_M(v_r, retrieved, p);
  const auto fine = run_decoder(fc.M, p, &fc.layers);
  fc.u.assign(p.config.dim, 0.0);
  matvec(p.proj_w, v_r, fc.u);
  for (std::size_t d = 0; d < p.config.dim; ++d) fc.u[d] += p.proj_b[d] + fine[d];
  fc.norm = std::sqrt(dot(fc.u, fc.u));
  if (!(fc.norm > 0.0) || !std::isfinite(fc.norm)) {
    throw Error(ErrorCode::NonFiniteIntermediate, "augmented feature has zero or non-finite norm");
  }
  fc.v_aug = fc.u;
  for (double& x : fc.v_aug) x /= fc.norm;
  return fc;
}

struct ProposalLoss {
  double cls = 0.0;
  double reg = 0.0;
};

// Cross entropy of the cosine logits against `label` and squared distance of
// the unnormalized feature to v_r. Fills d(loss)/du when `du` is given, with
// the per-proposal weights already applied.
ProposalLoss proposal_loss(const ForwardCache& fc, std::span<const double> v_r, std::size_t label,
                           const EmbeddingTable& cats, double w_cls, double w_reg, Vector* du) {
  const std::size_t dim = fc.u.size();
  Vector probs(cats.count());
  for (std::size_t c = 0; c < cats.count(); ++c) probs[c] = dot(cats.row(c), fc.v_aug);
  ProposalLoss out;
  out.cls = cross_entropy(probs, label);
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = fc.u[d] - v_r[d];
    out.reg += diff * diff;
  }
  if (!du) return out;

  softmax_inplace(probs);
  probs[label] -= 1.0;
  Vector dv(dim, 0.0);
  matvec_t_acc(cats.vectors(), probs, dv);
  for (double& x : dv) x *= w_cls;
  // Through v_aug = u / |u|.
  const double radial = dot(dv, fc.v_aug);
  du->assign(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    (*du)[d] = (dv[d] - fc.v_aug[d] * radial) / fc.norm + w_reg * 2.0 * (fc.u[d] - v_r[d]);
  }
  return out;
}

void backward(const ForwardCache& fc, std::span<const double> v_r, const Vector& du,
              const AugmenterParams& p, AugmenterParams& g) {
  const auto& cfg = p.config;
  const std::size_t dim = cfg.dim;
  const std::size_t head_dim = dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::size_t n = fc.M.rows;

  add_outer(g.proj_w, du, v_r);
  for (std::size_t d = 0; d < dim; ++d) g.proj_b[d] += du[d];

  Matrix dM(n, dim);
  Vector dq = du;
  for (std::size_t li = cfg.layers; li-- > 0;) {
    const auto& lp = p.layers[li];
    auto& lg = g.layers[li];
    const auto& c = fc.layers[li];

    // q_out = q_mid + W2 act(W1 q_mid + b1) + b2
    add_outer(lg.ffn_w2, dq, c.h_act);
    for (std::size_t d = 0; d < dim; ++d) lg.ffn_b2[d] += dq[d];
    Vector dh(cfg.ffn_dim, 0.0);
    matvec_t_acc(lp.ffn_w2, dq, dh);
    for (std::size_t i = 0; i < cfg.ffn_dim; ++i) {
      dh[i] *= activate_grad(cfg.activation, c.h_pre[i]);
    }
    add_outer(lg.ffn_w1, dh, c.q_mid);
    for (std::size_t i = 0; i < cfg.ffn_dim; ++i) lg.ffn_b1[i] += dh[i];
    Vector dq_mid = dq;
    matvec_t_acc(lp.ffn_w1, dh, dq_mid);

    // q_mid = q_in + W_o ctx
    add_outer(lg.wo, dq_mid, c.ctx);
    Vector dctx(dim, 0.0);
    matvec_t_acc(lp.wo, dq_mid, dctx);

    Vector dquery(dim, 0.0);
    Matrix dkeys(n, dim), dvalues(n, dim);
    Vector datt(n);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t off = h * head_dim;
      const auto a = c.att.row(h);
      const std::span<const double> dctx_h(dctx.data() + off, head_dim);
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        datt[j] = dot(dctx_h, c.values.row(j).subspan(off, head_dim));
        weighted += a[j] * datt[j];
        auto dvj = dvalues.row(j);
        for (std::size_t d = 0; d < head_dim; ++d) dvj[off + d] += a[j] * dctx_h[d];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double dscore = a[j] * (datt[j] - weighted) * scale;
        const auto kj = c.keys.row(j);
        auto dkj = dkeys.row(j);
        for (std::size_t d = 0; d < head_dim; ++d) {
          dquery[off + d] += dscore * kj[off + d];
          dkj[off + d] += dscore * c.query[off + d];
        }
      }
    }
    add_outer(lg.wq, dquery, c.q_in);
    for (std::size_t j = 0; j < n; ++j) {
      add_outer(lg.wk, dkeys.row(j), fc.M.row(j));
      add_outer(lg.wv, dvalues.row(j), fc.M.row(j));
      matvec_t_acc(lp.wk, dkeys.row(j), dM.row(j));
      matvec_t_acc(lp.wv, dvalues.row(j), dM.row(j));
    }
    dq = std::move(dq_mid);
    matvec_t_acc(lp.wq, dquery, dq);
  }
  for (std::size_t d = 0; d < dim; ++d) g.query_seed[d] += dq[d];

  for (std::size_t d = 0; d < dim; ++d) g.type0[d] += dM(0, d);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t d = 0; d < dim; ++d) {
      g.pos_embed(j - 1, d) += dM(j, d);
      g.type1[d] += dM(j, d);
    }
  }
}

void check_batch(const RafBatch& batch, const AugmenterParams& params,
                 const EmbeddingTable& cats) {
  params.check_shapes();
  if (batch.visual_features.rows == 0) {
    throw Error(ErrorCode::InvalidArgument, "RAF batch has no proposals");
  }
  if (batch.visual_features.cols != params.config.dim || cats.dim() != params.config.dim) {
    throw Error(ErrorCode::ShapeMismatch, "feature/category dim does not match augmenter dim");
  }
  if (batch.retrieved.size() != batch.visual_features.rows) {
    throw Error(ErrorCode::ShapeMismatch, "one retrieval per proposal required");
  }
  if (cats.count() == 0) throw Error(ErrorCode::InvalidArgument, "no training categories");
}

void add_into(AugmenterParams& acc, const AugmenterParams& g) {
  auto dst = acc.tensors();
  auto src = g.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
  }
}

void check_gradient(const AugmenterParams& g) {
  for (auto t : g.tensors()) {
    if (!all_finite(t)) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient");
  }
}

// Accumulates proposals [begin, end) into `g` in order; returns summed losses.
ProposalLoss accumulate(const RafBatch& batch, const AugmenterParams& params,
                        const EmbeddingTable& cats, const RafHyperParams& hp,
                        std::size_t begin, std::size_t end, AugmenterParams& g) {
  const double inv_n = 1.0 / static_cast<double>(batch.visual_features.rows);
  ProposalLoss sum;
  Vector du;
  for (std::size_t r = begin; r < end; ++r) {
    const auto v = batch.visual_features.row(r);
    const auto fc = forward(v, batch.retrieved[r], params);
    const auto label = pseudo_label(v, cats);
    const auto pl = proposal_loss(fc, v, label, cats, hp.beta_cls * inv_n, hp.beta_reg * inv_n, &du);
    backward(fc, v, du, params, g);
    sum.cls += pl.cls;
    sum.reg += pl.reg;
  }
  return sum;
}

RafLoss finish_loss(double cls_sum, double reg_sum, std::size_t n, const RafHyperParams& hp) {
  RafLoss out;
  out.cls = cls_sum / static_cast<double>(n);
  out.reg = reg_sum / static_cast<double>(n);
  out.loss = hp.beta_cls * out.cls + hp.beta_reg * out.reg;
  return out;
}

constexpr std::size_t kMaxGradBlocks = 8;
constexpr std::size_t kGradBlockBudgetBytes = std::size_t{256} << 20;

// Depends only on the problem size, never on the thread count.
std::size_t grad_blocks(std::size_t proposals, std::size_t param_count) {
  const std::size_t by_memory =
      std::max<std::size_t>(1, kGradBlockBudgetBytes / (param_count * sizeof(double)));
  return std::max<std::size_t>(1, std::min({proposals, kMaxGradBlocks, by_memory}));
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw Error(ErrorCode::FormatError, "truncated checkpoint");
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}

constexpr std::array<char, 8> kCheckpointMagic = {'R', 'A', 'L', 'F', '-', 'A', 'U', 'G'};

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(s) + "'");
}

void AugmenterConfig::validate() const {
  if (dim == 0 || ffn_dim == 0 || heads == 0 || layers == 0 || k == 0) {
    throw Error(ErrorCode::InvalidArgument, "augmenter sizes must be positive");
  }
  if (dim % heads != 0) {
    throw Error(ErrorCode::InvalidArgument, "heads (" + std::to_string(heads) +
                                                ") must divide dim (" + std::to_string(dim) + ")");
  }
}

AugmenterParams AugmenterParams::zeros(const AugmenterConfig& cfg) {
  cfg.validate();
  AugmenterParams p;
  p.config = cfg;
  p.proj_w = Matrix(cfg.dim, cfg.dim);
  p.proj_b.assign(cfg.dim, 0.0);
  p.layers.resize(cfg.layers);
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Matrix(cfg.dim, cfg.dim);
    l.ffn_w1 = Matrix(cfg.ffn_dim, cfg.dim);
    l.ffn_b1.assign(cfg.ffn_dim, 0.0);
    l.ffn_w2 = Matrix(cfg.dim, cfg.ffn_dim);
    l.ffn_b2.assign(cfg.dim, 0.0);
  }
  p.query_seed.assign(cfg.dim, 0.0);
  p.pos_embed = Matrix(cfg.k, cfg.dim);
  p.type0.assign(cfg.dim, 0.0);
  p.type1.assign(cfg.dim, 0.0);
  return p;
}

AugmenterParams AugmenterParams::initialize(const AugmenterConfig& cfg, std::uint64_t seed) {
  auto p = zeros(cfg);
  std::mt19937_64 rng(seed);
  // Bound by fan-in; equals 1/sqrt(dim) for every matrix except the FFN output layer.
  auto uniform = [&](Matrix& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : w.data) x = dist(rng);
  };
  std::normal_distribution<double> normal(0.0, 0.02);
  auto gaussian = [&](std::span<double> v) {
    for (double& x : v) x = normal(rng);
  };
  uniform(p.proj_w);
  for (auto& l : p.layers) {
    uniform(l.wq);
    uniform(l.wk);
    uniform(l.wv);
    uniform(l.wo);
    uniform(l.ffn_w1);
    uniform(l.ffn_w2);
  }
  gaussian(p.query_seed);
  gaussian(p.pos_embed.data);
  gaussian(p.type0);
  gaussian(p.type1);
  return p;
}

std::vector<std::span<double>> AugmenterParams::tensors() {
  std::vector<std::span<double>> out{proj_w.data, proj_b};
  for (auto& l : layers) {
    out.insert(out.end(), {l.wq.data, l.wk.data, l.wv.data, l.wo.data, l.ffn_w1.data, l.ffn_b1,
                           l.ffn_w2.data, l.ffn_b2});
  }
  out.insert(out.end(), {query_seed, pos_embed.data, type0, type1});
  return out;
}

std::vector<std::span<const double>> AugmenterParams::tensors() const {
  auto spans = const_cast<AugmenterParams*>(this)->tensors();
  return {spans.begin(), spans.end()};
}

std::vector<std::string> AugmenterParams::tensor_names() const {
  std::vector<std::string> out{"proj.weight", "proj.bias"};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto pre = "layer" + std::to_string(l) + ".";
    for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ffn.w1", "ffn.b1",
                          "ffn.w2", "ffn.b2"}) {
      out.push_back(pre + n);
    }
  }
  out.insert(out.end(), {"query_seed", "pos_embed", "type0", "type1"});
  return out;
}

std::size_t AugmenterParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

void AugmenterParams::check_shapes() const {
  const auto expected = zeros(config);
  const auto a = tensors();
  const auto b = expected.tensors();
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "layer count mismatch");
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) {
      throw Error(ErrorCode::ShapeMismatch, "tensor " + tensor_names()[t] + " has " +
                                                std::to_string(a[t].size()) + " values, expected " +
                                                std::to_string(b[t].size()));
    }
  }
}

bool AugmenterParams::operator==(const AugmenterParams& o) const {
  if (config.dim != o.config.dim || config.ffn_dim != o.config.ffn_dim ||
      config.heads != o.config.heads || config.layers != o.config.layers || config.k != o.config.k) {
    return false;
  }
  const auto a = tensors();
  const auto b = o.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (!std::ranges::equal(a[t], b[t])) return false;
  }
  return true;
}

Matrix build_M(std::span<const double> v_r, const RetrievedConcepts& retrieved,
               const AugmenterParams& params) {
  const auto& cfg = params.config;
  if (v_r.size() != cfg.dim || retrieved.k() != cfg.k || retrieved.embeddings.rows != cfg.k ||
      retrieved.embeddings.cols != cfg.dim) {
    throw Error(ErrorCode::ShapeMismatch, "build_M expects dim " + std::to_string(cfg.dim) +
                                              " and k " + std::to_string(cfg.k) + ", got k " +
                                              std::to_string(retrieved.k()));
  }
  Vector weights = retrieved.scores;
  softmax_inplace(weights);
  Matrix M(cfg.k + 1, cfg.dim);
  for (std::size_t d = 0; d < cfg.dim; ++d) M(0, d) = v_r[d] + params.type0[d];
  for (std::size_t i = 0; i < cfg.k; ++i) {
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      M(i + 1, d) = weights[i] * retrieved.embeddings(i, d) + params.pos_embed(i, d) +
                    params.type1[d];
    }
  }
  return M;
}

Vector decoder_forward(const Matrix& M, const AugmenterParams& params) {
  if (M.cols != params.config.dim) {
    throw Error(ErrorCode::ShapeMismatch, "memory width does not match augmenter dim");
  }
  return run_decoder(M, params, nullptr);
}

Vector augment_unnormalized(std::span<const double> v_r, const RetrievedConcepts& retrieved,
                            const AugmenterParams& params) {
  return forward(v_r, retrieved, params).u;
}

Vector augment(std::span<const double> v_r, const RetrievedConcepts& retrieved,
               const AugmenterParams& params) {
  return forward(v_r, retrieved, params).v_aug;
}

Vector aux_logits(std::span<const double> v_aug, const EmbeddingTable& categories) {
  if (v_aug.size() != categories.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "feature/category dim mismatch");
  }
  Vector out(categories.count());
  for (std::size_t c = 0; c < categories.count(); ++c) out[c] = dot(categories.row(c), v_aug);
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw Error(ErrorCode::InvalidArgument, "label out of range");
  const double mx = *std::ranges::max_element(logits);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return mx + std::log(sum) - logits[label];
}

std::size_t pseudo_label(std::span<const double> v_r, const EmbeddingTable& train_categories) {
  const auto scores = aux_logits(v_r, train_categories);
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "no training categories");
  // max_element returns the first maximum, i.e. the lowest index on ties.
  return static_cast<std::size_t>(std::ranges::max_element(scores) - scores.begin());
}

RafLoss raf_loss(const RafBatch& batch, const AugmenterParams& params,
                 const EmbeddingTable& train_categories, const RafHyperParams& hp) {
  check_batch(batch, params, train_categories);
  const std::size_t n = batch.visual_features.rows;
  std::vector<ProposalLoss> per(n);
  bool failed = false;
  const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t r = 0; r < ni; ++r) {
    try {
      const auto v = batch.visual_features.row(r);
      const auto fc = forward(v, batch.retrieved[r], params);
      per[r] = proposal_loss(fc, v, pseudo_label(v, train_categories), train_categories, 0.0, 0.0,
                             nullptr);
    } catch (const Error&) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) throw Error(ErrorCode::NonFiniteIntermediate, "augmenter forward pass failed");
  double cls = 0.0, reg = 0.0;
  for (const auto& p : per) {
    cls += p.cls;
    reg += p.reg;
  }
  return finish_loss(cls, reg, n, hp);
}

RafGradient raf_grad(const RafBatch& batch, const AugmenterParams& params,
                     const EmbeddingTable& train_categories, const RafHyperParams& hp) {
  check_batch(batch, params, train_categories);
  const std::size_t n = batch.visual_features.rows;
  const std::size_t blocks = grad_blocks(n, params.parameter_count());
  if (blocks == 1) return raf_grad_reference(batch, params, train_categories, hp);

  std::vector<AugmenterParams> partial(blocks, AugmenterParams::zeros(params.config));
  std::vector<ProposalLoss> sums(blocks);
  bool failed = false;
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t begin = n * static_cast<std::size_t>(b) / blocks;
    const std::size_t end = n * static_cast<std::size_t>(b + 1) / blocks;
    try {
      sums[b] = accumulate(batch, params, train_categories, hp, begin, end, partial[b]);
    } catch (const Error&) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) throw Error(ErrorCode::NonFiniteIntermediate, "augmenter forward pass failed");

  RafGradient out{{}, std::move(partial[0])};
  double cls = sums[0].cls, reg = sums[0].reg;
  for (std::size_t b = 1; b < blocks; ++b) {
    add_into(out.grad, partial[b]);
    cls += sums[b].cls;
    reg += sums[b].reg;
  }
  out.loss = finish_loss(cls, reg, n, hp);
  check_gradient(out.grad);
  return out;
}

RafGradient raf_grad_reference(const RafBatch& batch, const AugmenterParams& params,
                               const EmbeddingTable& train_categories, const RafHyperParams& hp) {
  check_batch(batch, params, train_categories);
  RafGradient out{{}, AugmenterParams::zeros(params.config)};
  const auto sum = accumulate(batch, params, train_categories, hp, 0,
                              batch.visual_features.rows, out.grad);
  out.loss = finish_loss(sum.cls, sum.reg, batch.visual_features.rows, hp);
  check_gradient(out.grad);
  return out;
}

TrainResult train(const std::vector<RafBatch>& batches, AugmenterParams params,
                  const EmbeddingTable& train_categories, const RafHyperParams& hp) {
  if (batches.empty()) throw Error(ErrorCode::InvalidArgument, "no training batches");
  TrainResult out;
  out.trace.reserve(hp.iterations);
  for (std::size_t it = 0; it < hp.iterations; ++it) {
    RafGradient g;
    try {
      g = raf_grad(batches[it % batches.size()], params, train_categories, hp);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::NonFiniteIntermediate) {
        throw Error(ErrorCode::DivergenceDetected,
                    "training diverged at iteration " + std::to_string(it) + ": " + e.what());
      }
      throw;
    }
    if (!std::isfinite(g.loss.loss)) {
      throw Error(ErrorCode::DivergenceDetected,
                  "non-finite loss at iteration " + std::to_string(it));
    }
    out.trace.push_back({it, g.loss});
    auto dst = params.tensors();
    const auto src = g.grad.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
      for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] -= hp.learning_rate * src[t][i];
    }
  }
  out.params = std::move(params);
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const AugmenterParams& params) {
  params.check_shapes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& c = params.config;
  for (std::size_t v : {c.dim, c.ffn_dim, c.heads, c.layers, c.k}) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  for (auto t : params.tensors()) {
    for (double x : t) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

AugmenterParams read_checkpoint(const std::filesystem::path& path, Activation activation) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) {
    throw Error(ErrorCode::FormatError, path.string() + ": not an augmenter checkpoint");
  }
  if (get_u32(in) != kCheckpointVersion) {
    throw Error(ErrorCode::FormatError, path.string() + ": unsupported checkpoint version");
  }
  AugmenterConfig cfg;
  cfg.dim = get_u32(in);
  cfg.ffn_dim = get_u32(in);
  cfg.heads = get_u32(in);
  cfg.layers = get_u32(in);
  cfg.k = get_u32(in);
  cfg.activation = activation;
  auto p = AugmenterParams::zeros(cfg);
  for (auto t : p.tensors()) {
    for (double& x : t) x = std::bit_cast<float>(get_u32(in));
  }
  in.peek();
  if (!in.eof()) throw Error(ErrorCode::FormatError, path.string() + ": trailing bytes");
  return p;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "iteration,loss,cls,reg\n";
  out.precision(17);
  for (const auto& t : trace) {
    out << t.iteration << ',' << t.loss.loss << ',' << t.loss.cls << ',' << t.loss.reg << '\n';
  }
}

}  // namespace ralf

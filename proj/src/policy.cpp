#include "jobshop/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace jssp {

namespace {
constexpr double kLeakySlope = 0.2;

template <typename Scalar>
Scalar elu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(std::expm1(double(x)));
}
// derivative of elu from its output
template <typename Scalar>
Scalar elu_grad_from_out(Scalar z) {
  return z > Scalar(0) ? Scalar(1) : z + Scalar(1);
}
}  // namespace

std::string pooling_name(Pooling p) {
  return p == Pooling::MeanMax ? "mean_max" : "learned_node";
}

Pooling pooling_from_name(const std::string& s) {
  if (s == "mean_max") return Pooling::MeanMax;
  if (s == "learned_node") return Pooling::LearnedNode;
  throw std::invalid_argument("unknown pooling '" + s + "'");
}

void NetworkConfig::validate() const {
  if (hidden_dim < 1 || n_layers < 1 || n_heads < 1) {
    throw std::invalid_argument("hidden_dim, n_layers, n_heads must be >= 1");
  }
  if (embed_layers < 1) throw std::invalid_argument("embed_layers must be >= 1");
  if (machine_emb_dim < 1 || max_machines < 1) {
    throw std::invalid_argument("machine embedding dims must be >= 1");
  }
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"hidden_dim", c.hidden_dim},
       {"n_layers", c.n_layers},
       {"n_heads", c.n_heads},
       {"pooling", pooling_name(c.pooling)},
       {"residual", c.residual},
       {"embed_layers", c.embed_layers},
       {"machine_emb_dim", c.machine_emb_dim},
       {"max_machines", c.max_machines}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c = NetworkConfig{};
  if (j.contains("hidden_dim")) j.at("hidden_dim").get_to(c.hidden_dim);
  if (j.contains("n_layers")) j.at("n_layers").get_to(c.n_layers);
  if (j.contains("n_heads")) j.at("n_heads").get_to(c.n_heads);
  if (j.contains("pooling")) c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
  if (j.contains("residual")) j.at("residual").get_to(c.residual);
  if (j.contains("embed_layers")) j.at("embed_layers").get_to(c.embed_layers);
  if (j.contains("machine_emb_dim")) j.at("machine_emb_dim").get_to(c.machine_emb_dim);
  if (j.contains("max_machines")) j.at("max_machines").get_to(c.max_machines);
}

ParamLayout ParamLayout::build(const NetworkConfig& cfg) {
  cfg.validate();
  ParamLayout out;
  auto add = [&](const std::string& name, int rows, int cols) {
    ParamArray a{name, rows, cols, out.total};
    out.total += a.size();
    out.arrays.push_back(a);
    return a.offset;
  };
  const int H = cfg.hidden_dim;
  const int K = cfg.n_heads;
  const int L = cfg.n_layers;

  out.machine_emb = add("machine_emb", cfg.max_machines + 1, cfg.machine_emb_dim);
  out.edge_emb = add("edge_emb", kNumEdgeTypes, H);

  int in_dim = kFeatCount + cfg.machine_emb_dim;
  for (int l = 0; l < cfg.embed_layers; ++l) {
    out.embed_w.push_back(add("embed.w" + std::to_string(l), H, in_dim));
    out.embed_b.push_back(add("embed.b" + std::to_string(l), 1, H));
    in_dim = H;
  }

  out.heads.resize(L);
  out.ff.resize(L);
  for (int l = 0; l < L; ++l) {
    const std::string lp = "layer" + std::to_string(l) + ".";
    for (int k = 0; k < K; ++k) {
      const std::string hp = lp + "head" + std::to_string(k) + ".";
      Head h;
      h.w_src = add(hp + "w_src", H, H);
      h.w_dst = add(hp + "w_dst", H, H);
      h.w_edge = add(hp + "w_edge", H, H);
      h.b_att = add(hp + "b_att", 1, H);
      h.att = add(hp + "att_a", 1, H);
      h.w_msg = add(hp + "w_msg", H, H);
      h.w_medge = add(hp + "w_medge", H, H);
      h.b_msg = add(hp + "b_msg", 1, H);
      out.heads[l].push_back(h);
    }
    FF f;
    f.w1 = add(lp + "ff.w1", H, K * H);
    f.b1 = add(lp + "ff.b1", 1, H);
    f.w2 = add(lp + "ff.w2", H, H);
    f.b2 = add(lp + "ff.b2", 1, H);
    out.ff[l] = f;
  }

  out.act_w = add("act.w", 1, (L + 1) * H * 2);
  out.val_w1 = add("value.w1", H, (L + 1) * H);
  out.val_b1 = add("value.b1", 1, H);
  out.val_w2 = add("value.w2", 1, H);
  out.val_b2 = add("value.b2", 1, 1);
  return out;
}

template <typename Scalar>
Network<Scalar> Network<Scalar>::zeros(const NetworkConfig& cfg) {
  Network net;
  net.cfg = cfg;
  net.layout = ParamLayout::build(cfg);
  net.params.assign(net.layout.total, Scalar(0));
  return net;
}

template <typename Scalar>
Network<Scalar> Network<Scalar>::random_init(const NetworkConfig& cfg, uint64_t seed) {
  Network net = zeros(cfg);
  Rng rng(derive_seed(seed, 0x6e657477ull));  // parameter stream
  for (const ParamArray& a : net.layout.arrays) {
    double bound = 0.0;
    if (a.name.find(".b") != std::string::npos) {
      bound = 0.0;  // biases start at zero
    } else if (a.name == "machine_emb" || a.name == "edge_emb") {
      bound = std::sqrt(3.0 / a.cols);
    } else if (a.name.find("att_a") != std::string::npos) {
      bound = std::sqrt(6.0 / (a.cols + 1));
    } else {
      bound = std::sqrt(6.0 / (a.rows + a.cols));
    }
    Scalar* p = net.params.data() + a.offset;
    for (size_t i = 0; i < a.size(); ++i) {
      p[i] = bound == 0.0 ? Scalar(0) : Scalar(rng.uniform(-bound, bound));
    }
  }
  return net;
}

template <typename Scalar>
void Network<Scalar>::forward(const GraphBatch& b, Workspace& ws, bool keep) const {
  const int N = b.n_nodes;
  const int E = b.n_edges;
  const int B = b.n_graphs;
  const int H = cfg.hidden_dim;
  const int K = cfg.n_heads;
  const int L = cfg.n_layers;
  const int FIN = kFeatCount + cfg.machine_emb_dim;
  using CMapM = Eigen::Map<const Mat>;
  using CMapRV = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
  const Scalar* pp = params.data();

  ws.kept = keep;

  // Embedder input: raw features plus machine embedding row.
  ws.X.resize(N, FIN);
  CMapM memb(pp + layout.machine_emb, cfg.max_machines + 1, cfg.machine_emb_dim);
  for (int i = 0; i < N; ++i) {
    for (int f = 0; f < kFeatCount; ++f) {
      ws.X(i, f) = Scalar(b.feat[static_cast<size_t>(i) * kFeatCount + f]);
    }
    int mid = b.machine_id[i];
    if (mid >= cfg.max_machines) {
      throw std::invalid_argument("machine index " + std::to_string(mid) +
                                  " exceeds max_machines " + std::to_string(cfg.max_machines));
    }
    if (mid < 0) mid = cfg.max_machines;  // reserved row for global nodes
    ws.X.row(i).tail(cfg.machine_emb_dim) = memb.row(mid);
  }

  ws.h.resize(L + 1);
  ws.embed_z.resize(std::max(0, cfg.embed_layers - 1));
  {
    const Mat* cur = &ws.X;
    int in_dim = FIN;
    for (int l = 0; l < cfg.embed_layers; ++l) {
      CMapM W(pp + layout.embed_w[l], H, in_dim);
      CMapRV bias(pp + layout.embed_b[l], H);
      Mat& out = (l + 1 == cfg.embed_layers) ? ws.h[0] : ws.embed_z[l];
      out.noalias() = *cur * W.transpose();
      out.rowwise() += bias;
      if (l + 1 < cfg.embed_layers) {
        out = out.unaryExpr([](Scalar x) { return elu(x); });
        cur = &out;
      }
      in_dim = H;
    }
  }
  if (!ws.h[0].allFinite()) throw std::runtime_error("forward: non-finite activation in embedder");

  ws.layers.resize(keep ? L : 1);
  CMapM eemb(pp + layout.edge_emb, kNumEdgeTypes, H);

  for (int l = 0; l < L; ++l) {
    LayerState& ls = ws.layers[keep ? l : 0];
    const Mat& hin = ws.h[l];
    ls.P.resize(K);
    ls.Q.resize(K);
    ls.M.resize(K);
    ls.alpha.resize(K);
    ls.C.resize(N, K * H);

    for (int k = 0; k < K; ++k) {
      const auto& hd = layout.heads[l][k];
      CMapM Wsrc(pp + hd.w_src, H, H), Wdst(pp + hd.w_dst, H, H), Wmsg(pp + hd.w_msg, H, H);
      CMapM Wedge(pp + hd.w_edge, H, H), Wmedge(pp + hd.w_medge, H, H);
      CMapRV b_att(pp + hd.b_att, H), b_msg(pp + hd.b_msg, H), att_a(pp + hd.att, H);
      ls.P[k].noalias() = hin * Wsrc.transpose();
      ls.Q[k].noalias() = hin * Wdst.transpose();
      ls.M[k].noalias() = hin * Wmsg.transpose();
      // Per-type score and message offsets; biases folded in.
      Mat sv(kNumEdgeTypes, H), mv(kNumEdgeTypes, H);
      sv.noalias() = eemb * Wedge.transpose();
      sv.rowwise() += b_att;
      mv.noalias() = eemb * Wmedge.transpose();
      mv.rowwise() += b_msg;

      ls.alpha[k].resize(E);
      Scalar* alpha = ls.alpha[k].data();
      const Scalar* P = ls.P[k].data();
      const Scalar* Q = ls.Q[k].data();
      const Scalar* M = ls.M[k].data();
      const Scalar* a = att_a.data();
      Scalar* C = ls.C.data();
      const int CW = K * H;

#pragma omp parallel for schedule(static)
      for (int v = 0; v < N; ++v) {
        Scalar* out = C + static_cast<size_t>(v) * CW + k * H;
        std::fill(out, out + H, Scalar(0));
        const int ib = b.in_begin[v];
        const int ie = b.in_begin[v + 1];
        if (ib == ie) continue;
        const Scalar* qv = Q + static_cast<size_t>(v) * H;
        Scalar max_score = -std::numeric_limits<Scalar>::infinity();
        for (int x = ib; x < ie; ++x) {
          const int e = b.in_edges[x];
          const Scalar* ps = P + static_cast<size_t>(b.src[e]) * H;
          const Scalar* sve = sv.data() + static_cast<size_t>(b.type[e]) * H;
          Scalar score = 0;
#pragma omp simd reduction(+ : score)
          for (int h = 0; h < H; ++h) {
            const Scalar u = ps[h] + qv[h] + sve[h];
            score += a[h] * (u > Scalar(0) ? u : Scalar(kLeakySlope) * u);
          }
          alpha[e] = score;
          max_score = std::max(max_score, score);
        }
        Scalar sum = 0;
        for (int x = ib; x < ie; ++x) {
          const int e = b.in_edges[x];
          alpha[e] = std::exp(alpha[e] - max_score);
          sum += alpha[e];
        }
        const Scalar inv = Scalar(1) / sum;
        for (int x = ib; x < ie; ++x) {
          const int e = b.in_edges[x];
          alpha[e] *= inv;
          const Scalar w = alpha[e];
          const Scalar* ms = M + static_cast<size_t>(b.src[e]) * H;
          const Scalar* mve = mv.data() + static_cast<size_t>(b.type[e]) * H;
#pragma omp simd
          for (int h = 0; h < H; ++h) out[h] += w * (ms[h] + mve[h]);
        }
      }
    }

    // Feed-forward reduction of the head concatenation, then residual.
    const auto& f = layout.ff[l];
    CMapM W1(pp + f.w1, H, K * H), W2(pp + f.w2, H, H);
    CMapRV b1(pp + f.b1, H), b2(pp + f.b2, H);
    ls.Z1.noalias() = ls.C * W1.transpose();
    ls.Z1.rowwise() += b1;
    ls.Z1 = ls.Z1.unaryExpr([](Scalar x) { return elu(x); });
    ws.h[l + 1].noalias() = ls.Z1 * W2.transpose();
    ws.h[l + 1].rowwise() += b2;
    if (cfg.residual) ws.h[l + 1] += hin;
    if (!ws.h[l + 1].allFinite()) {
      throw std::runtime_error("forward: non-finite activation in layer " + std::to_string(l));
    }
  }

  // Per-layer pooled summaries.
  ws.g.resize(B, (L + 1) * H);
  ws.argmax.assign(cfg.pooling == Pooling::MeanMax ? L + 1 : 0, Eigen::MatrixXi());
  for (int l = 0; l <= L; ++l) {
    const Mat& h = ws.h[l];
    if (cfg.pooling == Pooling::MeanMax) {
      Eigen::MatrixXi& am = ws.argmax[l];
      am.resize(B, H);
#pragma omp parallel for schedule(static)
      for (int gi = 0; gi < B; ++gi) {
        const int nb = b.node_begin[gi];
        const int ne = b.node_begin[gi + 1];
        for (int d = 0; d < H; ++d) {
          Scalar mean = 0;
          Scalar mx = h(nb, d);
          int arg = nb;
          for (int r = nb; r < ne; ++r) {
            mean += h(r, d);
            if (h(r, d) > mx) {
              mx = h(r, d);
              arg = r;
            }
          }
          ws.g(gi, l * H + d) = mean / Scalar(ne - nb) + mx;
          am(gi, d) = arg;
        }
      }
    } else {
      for (int gi = 0; gi < B; ++gi) {
        const int gn = b.global_node[gi];
        if (gn < 0) throw std::invalid_argument("learned_node pooling requires a global node");
        ws.g.row(gi).segment(l * H, H) = h.row(gn);
      }
    }
  }

  // Action head: one weight per channel of [h_l ; g_l] over all layers.
  CMapRV w_act(pp + layout.act_w, (L + 1) * H * 2);
  Vec node_term = Vec::Zero(N);
  for (int l = 0; l <= L; ++l) {
    CMapRV wa(pp + layout.act_w + static_cast<size_t>(l) * H, H);
    node_term.noalias() += ws.h[l] * wa.transpose();
  }
  CMapRV wg(pp + layout.act_w + static_cast<size_t>(L + 1) * H, (L + 1) * H);
  Vec graph_term = ws.g * wg.transpose();
  ws.logits.resize(N);
  for (int i = 0; i < N; ++i) ws.logits[i] = node_term[i] + graph_term[b.graph_of[i]];

  // Value head.
  CMapM V1(pp + layout.val_w1, H, (L + 1) * H);
  CMapRV vb1(pp + layout.val_b1, H), V2(pp + layout.val_w2, H);
  ws.vz1.noalias() = ws.g * V1.transpose();
  ws.vz1.rowwise() += vb1;
  ws.vz1 = ws.vz1.unaryExpr([](Scalar x) { return elu(x); });
  Vec values = ws.vz1 * V2.transpose();
  ws.values.resize(B);
  for (int gi = 0; gi < B; ++gi) ws.values[gi] = values[gi] + pp[layout.val_b2];

  for (Scalar v : ws.values) {
    if (!std::isfinite(double(v))) throw std::runtime_error("forward: non-finite value output");
  }
  for (Scalar v : ws.logits) {
    if (!std::isfinite(double(v))) throw std::runtime_error("forward: non-finite logit output");
  }
}

template <typename Scalar>
void Network<Scalar>::backward(const GraphBatch& b, const Workspace& ws,
                               std::span<const Scalar> dlogits, std::span<const Scalar> dvalues,
                               std::span<Scalar> grad) const {
  if (!ws.kept) throw std::logic_error("backward: forward was not run with keep_for_backward");
  const int N = b.n_nodes;
  const int E = b.n_edges;
  const int B = b.n_graphs;
  const int H = cfg.hidden_dim;
  const int K = cfg.n_heads;
  const int L = cfg.n_layers;
  using CMapM = Eigen::Map<const Mat>;
  using MapM = Eigen::Map<Mat>;
  using CMapRV = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
  using MapRV = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
  const Scalar* pp = params.data();
  Scalar* gp = grad.data();

  Eigen::Map<const Vec> dlog(dlogits.data(), N);
  Eigen::Map<const Vec> dval(dvalues.data(), B);

  // Value head backward.
  Mat dg = Mat::Zero(B, (L + 1) * H);
  {
    CMapM V1(pp + layout.val_w1, H, (L + 1) * H);
    CMapRV V2(pp + layout.val_w2, H);
    MapRV dV2(gp + layout.val_w2, H);
    dV2.noalias() += dval.transpose() * ws.vz1;
    gp[layout.val_b2] += dval.sum();
    Mat dA1v = dval * V2;  // B x H
    dA1v = dA1v.cwiseProduct(ws.vz1.unaryExpr([](Scalar z) { return elu_grad_from_out(z); }));
    MapM dV1(gp + layout.val_w1, H, (L + 1) * H);
    dV1.noalias() += dA1v.transpose() * ws.g;
    MapRV db1v(gp + layout.val_b1, H);
    db1v.noalias() += dA1v.colwise().sum();
    dg.noalias() += dA1v * V1;
  }

  // Action head backward.
  std::vector<Mat> dh(L + 1);
  {
    Vec s = Vec::Zero(B);
    for (int i = 0; i < N; ++i) s[b.graph_of[i]] += dlogits[i];
    CMapRV wg(pp + layout.act_w + static_cast<size_t>(L + 1) * H, (L + 1) * H);
    MapRV dwg(gp + layout.act_w + static_cast<size_t>(L + 1) * H, (L + 1) * H);
    dwg.noalias() += s.transpose() * ws.g;
    dg.noalias() += s * wg;
    for (int l = 0; l <= L; ++l) {
      CMapRV wa(pp + layout.act_w + static_cast<size_t>(l) * H, H);
      MapRV dwa(gp + layout.act_w + static_cast<size_t>(l) * H, H);
      dwa.noalias() += dlog.transpose() * ws.h[l];
      dh[l].noalias() = dlog * wa;  // N x H
    }
  }

  // Pooling backward into each dh[l].
  for (int l = 0; l <= L; ++l) {
    if (cfg.pooling == Pooling::MeanMax) {
      const Eigen::MatrixXi& am = ws.argmax[l];
#pragma omp parallel for schedule(static)
      for (int gi = 0; gi < B; ++gi) {
        const int nb = b.node_begin[gi];
        const int ne = b.node_begin[gi + 1];
        const Scalar inv = Scalar(1) / Scalar(ne - nb);
        for (int d = 0; d < H; ++d) {
          const Scalar gd = dg(gi, l * H + d);
          const Scalar m = gd * inv;
          for (int r = nb; r < ne; ++r) dh[l](r, d) += m;
          dh[l](am(gi, d), d) += gd;
        }
      }
    } else {
      for (int gi = 0; gi < B; ++gi) {
        dh[l].row(b.global_node[gi]) += dg.row(gi).segment(l * H, H);
      }
    }
  }

  // Attention layers, reverse order.
  CMapM eemb(pp + layout.edge_emb, kNumEdgeTypes, H);
  MapM deemb(gp + layout.edge_emb, kNumEdgeTypes, H);
  Mat dP(N, H), dQ(N, H), dM(N, H);
  Mat dmsg(E, H), du(E, H);
  Vec dscore(E);
  for (int l = L - 1; l >= 0; --l) {
    const LayerState& ls = ws.layers[l];
    const Mat& hin = ws.h[l];
    Mat& G = dh[l + 1];
    if (cfg.residual) dh[l] += G;

    // FF backward.
    const auto& f = layout.ff[l];
    CMapM W1(pp + f.w1, H, K * H), W2(pp + f.w2, H, H);
    MapM dW1(gp + f.w1, H, K * H), dW2(gp + f.w2, H, H);
    MapRV db1(gp + f.b1, H), db2(gp + f.b2, H);
    dW2.noalias() += G.transpose() * ls.Z1;
    db2.noalias() += G.colwise().sum();
    Mat dA1 = G * W2;
    dA1 = dA1.cwiseProduct(ls.Z1.unaryExpr([](Scalar z) { return elu_grad_from_out(z); }));
    dW1.noalias() += dA1.transpose() * ls.C;
    db1.noalias() += dA1.colwise().sum();
    Mat dC = dA1 * W1;  // N x K*H

    for (int k = 0; k < K; ++k) {
      const auto& hd = layout.heads[l][k];
      CMapM Wsrc(pp + hd.w_src, H, H), Wdst(pp + hd.w_dst, H, H), Wmsg(pp + hd.w_msg, H, H);
      CMapM Wedge(pp + hd.w_edge, H, H), Wmedge(pp + hd.w_medge, H, H);
      CMapRV b_att(pp + hd.b_att, H), b_msg(pp + hd.b_msg, H), att_a(pp + hd.att, H);
      Mat sv(kNumEdgeTypes, H), mv(kNumEdgeTypes, H);
      sv.noalias() = eemb * Wedge.transpose();
      sv.rowwise() += b_att;
      mv.noalias() = eemb * Wmedge.transpose();
      mv.rowwise() += b_msg;

      const Scalar* P = ls.P[k].data();
      const Scalar* Q = ls.Q[k].data();
      const Scalar* M = ls.M[k].data();
      const Scalar* alpha = ls.alpha[k].data();
      const Scalar* a = att_a.data();

      // Pass A: per destination, softmax backward -> dscore, dmsg.
#pragma omp parallel for schedule(static)
      for (int v = 0; v < N; ++v) {
        const int ib = b.in_begin[v];
        const int ie = b.in_begin[v + 1];
        if (ib == ie) continue;
        const Scalar* gout = dC.data() + static_cast<size_t>(v) * (K * H) + k * H;
        Scalar ssum = 0;
        for (int x = ib; x < ie; ++x) {
          const int e = b.in_edges[x];
          const Scalar* ms = M + static_cast<size_t>(b.src[e]) * H;
          const Scalar* mve = mv.data() + static_cast<size_t>(b.type[e]) * H;
          Scalar da = 0;
#pragma omp simd reduction(+ : da)
          for (int h = 0; h < H; ++h) da += gout[h] * (ms[h] + mve[h]);
          dscore[e] = da;  // holds d(alpha) for now
          ssum += alpha[e] * da;
        }
        for (int x = ib; x < ie; ++x) {
          const int e = b.in_edges[x];
          dscore[e] = alpha[e] * (dscore[e] - ssum);
          Scalar* dm = dmsg.data() + static_cast<size_t>(e) * H;
#pragma omp simd
          for (int h = 0; h < H; ++h) dm[h] = alpha[e] * gout[h];
        }
      }

      // Pass B: per edge, score backward through the shared nonlinearity.
#pragma omp parallel for schedule(static)
      for (int e = 0; e < E; ++e) {
        const Scalar* ps = P + static_cast<size_t>(b.src[e]) * H;
        const Scalar* qv = Q + static_cast<size_t>(b.dst[e]) * H;
        const Scalar* sve = sv.data() + static_cast<size_t>(b.type[e]) * H;
        Scalar* d = du.data() + static_cast<size_t>(e) * H;
        const Scalar ds = dscore[e];
#pragma omp simd
        for (int h = 0; h < H; ++h) {
          const Scalar u = ps[h] + qv[h] + sve[h];
          d[h] = ds * a[h] * (u > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope));
        }
      }

      // Small reductions kept serial so results do not depend on the
      // thread count: attention vector, per-type offsets.
      Mat dsv = Mat::Zero(kNumEdgeTypes, H), dmv = Mat::Zero(kNumEdgeTypes, H);
      MapRV da_acc(gp + hd.att, H);
      for (int e = 0; e < E; ++e) {
        const Scalar* ps = P + static_cast<size_t>(b.src[e]) * H;
        const Scalar* qv = Q + static_cast<size_t>(b.dst[e]) * H;
        const Scalar* sve = sv.data() + static_cast<size_t>(b.type[e]) * H;
        Scalar* dsvt = dsv.data() + static_cast<size_t>(b.type[e]) * H;
        Scalar* dmvt = dmv.data() + static_cast<size_t>(b.type[e]) * H;
        const Scalar* d = du.data() + static_cast<size_t>(e) * H;
        const Scalar* dm = dmsg.data() + static_cast<size_t>(e) * H;
        const Scalar ds = dscore[e];
        Scalar* da_ptr = da_acc.data();
#pragma omp simd
        for (int h = 0; h < H; ++h) {
          const Scalar u = ps[h] + qv[h] + sve[h];
          da_ptr[h] += ds * (u > Scalar(0) ? u : Scalar(kLeakySlope) * u);
          dsvt[h] += d[h];
          dmvt[h] += dm[h];
        }
      }
      MapRV db_att(gp + hd.b_att, H), db_msg(gp + hd.b_msg, H);
      db_att.noalias() += dsv.colwise().sum();
      db_msg.noalias() += dmv.colwise().sum();
      MapM dWedge(gp + hd.w_edge, H, H), dWmedge(gp + hd.w_medge, H, H);
      dWedge.noalias() += dsv.transpose() * eemb;
      dWmedge.noalias() += dmv.transpose() * eemb;
      deemb.noalias() += dsv * Wedge;
      deemb.noalias() += dmv * Wmedge;

      // Pass C: scatter to destination projections.
#pragma omp parallel for schedule(static)
      for (int v = 0; v < N; ++v) {
        Scalar* out = dQ.data() + static_cast<size_t>(v) * H;
        std::fill(out, out + H, Scalar(0));
        for (int x = b.in_begin[v]; x < b.in_begin[v + 1]; ++x) {
          const Scalar* d = du.data() + static_cast<size_t>(b.in_edges[x]) * H;
#pragma omp simd
          for (int h = 0; h < H; ++h) out[h] += d[h];
        }
      }
      // Pass D: scatter to source projections and messages.
#pragma omp parallel for schedule(static)
      for (int v = 0; v < N; ++v) {
        Scalar* op = dP.data() + static_cast<size_t>(v) * H;
        Scalar* om = dM.data() + static_cast<size_t>(v) * H;
        std::fill(op, op + H, Scalar(0));
        std::fill(om, om + H, Scalar(0));
        for (int x = b.out_begin[v]; x < b.out_begin[v + 1]; ++x) {
          const int e = b.out_edges[x];
          const Scalar* d = du.data() + static_cast<size_t>(e) * H;
          const Scalar* dm = dmsg.data() + static_cast<size_t>(e) * H;
#pragma omp simd
          for (int h = 0; h < H; ++h) {
            op[h] += d[h];
            om[h] += dm[h];
          }
        }
      }

      MapM dWsrc(gp + hd.w_src, H, H), dWdst(gp + hd.w_dst, H, H), dWmsg(gp + hd.w_msg, H, H);
      dWsrc.noalias() += dP.transpose() * hin;
      dWdst.noalias() += dQ.transpose() * hin;
      dWmsg.noalias() += dM.transpose() * hin;
      dh[l].noalias() += dP * Wsrc;
      dh[l].noalias() += dQ * Wdst;
      dh[l].noalias() += dM * Wmsg;
    }
  }

  // Embedder backward.
  {
    Mat dcur = std::move(dh[0]);
    for (int l = cfg.embed_layers - 1; l >= 0; --l) {
      const Mat& input = l == 0 ? ws.X : ws.embed_z[l - 1];
      const int in_dim = l == 0 ? kFeatCount + cfg.machine_emb_dim : H;
      CMapM W(pp + layout.embed_w[l], H, in_dim);
      MapM dW(gp + layout.embed_w[l], H, in_dim);
      MapRV db(gp + layout.embed_b[l], H);
      dW.noalias() += dcur.transpose() * input;
      db.noalias() += dcur.colwise().sum();
      Mat dprev = dcur * W;
      if (l > 0) {
        dprev = dprev.cwiseProduct(
            ws.embed_z[l - 1].unaryExpr([](Scalar z) { return elu_grad_from_out(z); }));
      }
      dcur = std::move(dprev);
    }
    // dcur is now dX; only the machine embedding columns carry parameters.
    MapM dmemb(gp + layout.machine_emb, cfg.max_machines + 1, cfg.machine_emb_dim);
    for (int i = 0; i < N; ++i) {
      int mid = b.machine_id[i];
      if (mid < 0) mid = cfg.max_machines;
      dmemb.row(mid) += dcur.row(i).tail(cfg.machine_emb_dim);
    }
  }
}

MaskedDist masked_distribution(std::span<const double> logits, std::span<const uint8_t> mask) {
  MaskedDist d;
  d.log_probs.assign(logits.size(), -std::numeric_limits<double>::infinity());
  double max_l = -std::numeric_limits<double>::infinity();
  int n_legal = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      max_l = std::max(max_l, logits[i]);
      ++n_legal;
    }
  }
  if (n_legal == 0) throw std::invalid_argument("masked_distribution: no legal action");
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) z += std::exp(logits[i] - max_l);
  }
  const double log_z = std::log(z);
  d.entropy = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    const double lp = logits[i] - max_l - log_z;
    d.log_probs[i] = lp;
    d.entropy -= std::exp(lp) * lp;
  }
  return d;
}

int sample_masked(const MaskedDist& d, std::span<const uint8_t> mask, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  int last_legal = -1;
  for (size_t i = 0; i < d.log_probs.size(); ++i) {
    if (!mask[i]) continue;
    last_legal = static_cast<int>(i);
    cum += std::exp(d.log_probs[i]);
    if (u < cum) return static_cast<int>(i);
  }
  return last_legal;
}

int argmax_masked(std::span<const double> logits, std::span<const uint8_t> mask) {
  int best = -1;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i] && (best < 0 || logits[i] > logits[best])) best = static_cast<int>(i);
  }
  if (best < 0) throw std::invalid_argument("argmax_masked: no legal action");
  return best;
}

template <typename Scalar>
PolicyOutput forward_policy(const Network<Scalar>& net, const RewiredGraph& g) {
  GraphBatch b = GraphBatch::build(g);
  typename Network<Scalar>::Workspace ws;
  net.forward(b, ws, false);
  PolicyOutput out;
  out.logits.assign(ws.logits.begin(), ws.logits.end());
  out.value = double(ws.values[0]);
  MaskedDist d = masked_distribution(out.logits, b.mask);
  out.log_probs = std::move(d.log_probs);
  out.entropy = d.entropy;
  return out;
}

template <typename Scalar>
ActResult act(const Network<Scalar>& net, const RewiredGraph& g, ActMode mode, Rng* rng) {
  PolicyOutput po = forward_policy(net, g);
  ActResult r;
  if (mode == ActMode::Argmax) {
    r.action = argmax_masked(po.logits, g.mask);
  } else {
    if (!rng) throw std::invalid_argument("act: sampling requires an rng");
    MaskedDist d{po.log_probs, po.entropy};
    r.action = sample_masked(d, g.mask, *rng);
  }
  r.log_prob = po.log_probs[r.action];
  r.value = po.value;
  r.entropy = po.entropy;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'J', 'S', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

template <typename Scalar>
constexpr uint8_t dtype_code() {
  return std::is_same_v<Scalar, float> ? 0 : 1;
}

template <typename Scalar>
void write_array(std::ostream& out, const std::string& name, const std::vector<Scalar>& data) {
  write_pod(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), name.size());
  write_pod(out, static_cast<uint64_t>(data.size()));
  out.write(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(Scalar));
}
}  // namespace

template <typename Scalar>
void save_checkpoint(const std::string& path, const Network<Scalar>& net,
                     const nlohmann::json& meta, const std::vector<Scalar>* adam_m,
                     const std::vector<Scalar>* adam_v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCkptVersion);
  write_pod(out, static_cast<uint32_t>(kFeatureSchemaVersion));
  write_pod(out, dtype_code<Scalar>());
  nlohmann::json header = {{"network", net.cfg}, {"meta", meta}};
  const std::string js = header.dump();
  write_pod(out, static_cast<uint64_t>(js.size()));
  out.write(js.data(), js.size());
  uint64_t n_arrays = 1 + (adam_m ? 1 : 0) + (adam_v ? 1 : 0);
  write_pod(out, n_arrays);
  write_array(out, "params", net.params);
  if (adam_m) write_array(out, "adam_m", *adam_m);
  if (adam_v) write_array(out, "adam_v", *adam_v);
  if (!out) throw std::runtime_error(path + ": write failed");
}

namespace {
struct CkptHeader {
  uint8_t dtype;
  nlohmann::json header;
};

CkptHeader read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  uint32_t version, schema;
  read_pod(in, version);
  read_pod(in, schema);
  if (version != kCkptVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (schema != kFeatureSchemaVersion) {
    throw std::runtime_error(path + ": node-feature schema mismatch (file " +
                             std::to_string(schema) + ", expected " +
                             std::to_string(kFeatureSchemaVersion) + ")");
  }
  CkptHeader h;
  read_pod(in, h.dtype);
  uint64_t js_len;
  read_pod(in, js_len);
  std::string js(js_len, '\0');
  in.read(js.data(), js_len);
  if (!in) throw std::runtime_error(path + ": truncated file");
  h.header = nlohmann::json::parse(js);
  return h;
}
}  // namespace

std::string checkpoint_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return read_header(in, path).dtype == 0 ? "float" : "double";
}

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  CkptHeader h = read_header(in, path);
  if (h.dtype != dtype_code<Scalar>()) {
    throw std::runtime_error(path + ": checkpoint dtype mismatch");
  }
  NetworkConfig cfg = h.header.at("network").get<NetworkConfig>();
  LoadedCheckpoint<Scalar> out{Network<Scalar>::zeros(cfg), h.header.at("meta"), {}, {}};
  uint64_t n_arrays;
  read_pod(in, n_arrays);
  for (uint64_t i = 0; i < n_arrays; ++i) {
    uint16_t name_len;
    read_pod(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint64_t count;
    read_pod(in, count);
    std::vector<Scalar> data(count);
    in.read(reinterpret_cast<char*>(data.data()), count * sizeof(Scalar));
    if (!in) throw std::runtime_error(path + ": truncated array " + name);
    if (name == "params") {
      if (count != out.net.layout.total) {
        throw std::runtime_error(path + ": parameter count mismatch");
      }
      out.net.params = std::move(data);
    } else if (name == "adam_m") {
      out.adam_m = std::move(data);
    } else if (name == "adam_v") {
      out.adam_v = std::move(data);
    }
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template PolicyOutput forward_policy<float>(const Network<float>&, const RewiredGraph&);
template PolicyOutput forward_policy<double>(const Network<double>&, const RewiredGraph&);
template ActResult act<float>(const Network<float>&, const RewiredGraph&, ActMode, Rng*);
template ActResult act<double>(const Network<double>&, const RewiredGraph&, ActMode, Rng*);
template void save_checkpoint<float>(const std::string&, const Network<float>&,
                                     const nlohmann::json&, const std::vector<float>*,
                                     const std::vector<float>*);
template void save_checkpoint<double>(const std::string&, const Network<double>&,
                                      const nlohmann::json&, const std::vector<double>*,
                                      const std::vector<double>*);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::string&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::string&);

}  // namespace jssp

#include "evgraph/edgcn.hpp"

#include <algorithm>
#include <cmath>

#include "evgraph/error.hpp"

namespace evg::edgcn {

using diff::Activation;
using diff::MlpSpec;

EdalVariant variant_from_string(const std::string& name) {
  if (name == "A") return EdalVariant::A;
  if (name == "B") return EdalVariant::B;
  if (name == "C") return EdalVariant::C;
  if (name == "D") return EdalVariant::D;
  if (name == "E") return EdalVariant::E;
  raise(ErrorCode::InvalidArgument, "unknown EDAL variant: " + name);
}

const char* variant_name(EdalVariant v) {
  switch (v) {
    case EdalVariant::A: return "A";
    case EdalVariant::B: return "B";
    case EdalVariant::C: return "C";
    case EdalVariant::D: return "D";
    case EdalVariant::E: return "E";
  }
  return "?";
}

namespace {

MlpSpec hidden1(int in, int out, int mult) {
  return MlpSpec{{in, out * mult, out}, Activation::Relu, Activation::None};
}

}  // namespace

template <typename T>
Edal<T>::Edal(diff::ParamStore<T>& store, const std::string& prefix, const EdalLayerConfig& cfg,
              EdalVariant variant, int hidden_mult, bool rel_relative, Rng& rng)
    : cfg_(cfg),
      variant_(variant),
      rel_relative_(rel_relative),
      m_f_(store, prefix + ".m_f", hidden1(cfg.d_in_f, cfg.d_in_f, hidden_mult), rng,
           diff::InitScheme::ReluFanIn),
      m_u_(store, prefix + ".m_u", hidden1(cfg.d_in_u, cfg.d_in_f, hidden_mult), rng,
           diff::InitScheme::ReluFanIn),
      fuse_(store, prefix + ".fuse", hidden1(cfg.d_in_f, cfg.d_out_f, hidden_mult), rng,
            diff::InitScheme::ReluFanIn),
      m_u_a_(store, prefix + ".m_u_a",
             MlpSpec{{rel_width(), 1}, Activation::Relu, Activation::None}, rng),
      q_upd_(store, prefix + ".q_upd", hidden1(rel_width(), cfg.d_in_f, hidden_mult), rng,
             diff::InitScheme::ReluFanIn),
      m_u_id_(store, prefix + ".m_u_id", hidden1(cfg.d_in_u, cfg.d_in_f, hidden_mult), rng,
              diff::InitScheme::ReluFanIn),
      m_f_id_(store, prefix + ".m_f_id", hidden1(cfg.d_in_f, cfg.d_out_f, hidden_mult), rng,
              diff::InitScheme::ReluFanIn) {
  if (cfg.d_in_u < 1 || cfg.d_in_f < 1 || cfg.d_out_f < 1 || cfg.n_neighbors < 1)
    raise(ErrorCode::Config, prefix + ": layer widths and N_n must be >= 1");
}

template <typename T>
int Edal<T>::rel_width() const {
  return 2 * (variant_ == EdalVariant::E ? cfg_.d_out_f : cfg_.d_in_f);
}

template <typename T>
EdalVariant Edal<T>::effective(std::optional<EdalVariant> o) const {
  if (!o || *o == variant_) return variant_;
  if (*o == EdalVariant::E || variant_ == EdalVariant::E)
    raise(ErrorCode::Config,
          "variant E changes parameter shapes; build the model with that variant");
  return *o;
}

template <typename T>
std::pair<Mat<T>, Mat<T>> Edal<T>::forward(const Mat<T>& u, const Mat<T>& f,
                                           EdalIntermediates<T>& inter,
                                           std::optional<EdalVariant> override_variant) const {
  const EdalVariant variant = effective(override_variant);
  const int n = u.rows;
  if (n < 2) raise(ErrorCode::DegenerateInput, "edal: graph needs at least 2 vertices");
  if (u.cols != cfg_.d_in_u || f.rows != n || f.cols != cfg_.d_in_f)
    raise(ErrorCode::Shape, "edal: attribute shapes disagree with the layer config");

  inter.used_variant = variant;
  inter.u_in = &u;
  inter.f_in = &f;

  // Projection into the shared width.
  inter.p_f = m_f_.forward(f, &inter.m_f_ctx);
  check_finite(inter.p_f, "p_f");
  inter.p_u = m_u_.forward(u, &inter.m_u_ctx);
  check_finite(inter.p_u, "p_u");

  inter.fuse_sum = inter.p_f;
  for (size_t i = 0; i < inter.fuse_sum.v.size(); ++i) inter.fuse_sum.v[i] += inter.p_u.v[i];
  inter.p_fuse = fuse_.forward(inter.fuse_sum, &inter.fuse_ctx);
  check_finite(inter.p_fuse, "p_fuse");

  const Mat<T>* knn_src = &inter.p_fuse;
  if (variant == EdalVariant::A) knn_src = &inter.p_u;
  if (variant == EdalVariant::B) knn_src = &inter.p_f;
  const int k = std::min(cfg_.n_neighbors, n - 1);
  inter.neighbors = diff::knn(*knn_src, k, /*exclude_self=*/true);

  // Pair features for attention and the coordinate update.
  const Mat<T>& rel_src = variant == EdalVariant::E ? inter.p_fuse : inter.p_u;
  const int w = rel_src.cols;
  inter.rel = Mat<T>(n * k, 2 * w);
  for (int i = 0; i < n; ++i) {
    const int* nbr = inter.neighbors.row(i);
    const T* si = rel_src.row(i);
    for (int j = 0; j < k; ++j) {
      T* row = inter.rel.row(i * k + j);
      const T* sj = rel_src.row(nbr[j]);
      for (int c = 0; c < w; ++c) {
        row[c] = si[c];
        row[w + c] = rel_relative_ ? sj[c] - si[c] : sj[c];
      }
    }
  }

  // Attention scores from coordinate pairs, normalized over each neighborhood.
  Mat<T> logits = m_u_a_.forward(inter.rel, &inter.m_u_a_ctx);  // (n*k) x 1
  inter.score = Mat<T>(n, k);
  for (int i = 0; i < n; ++i)
    diff::softmax_row(logits.v.data() + static_cast<size_t>(i) * k, inter.score.row(i), k);
  check_finite(inter.score, "score");
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < k; ++j) s += static_cast<double>(inter.score.at(i, j));
    if (std::abs(s - 1.0) > 1e-6)
      raise(ErrorCode::Numeric, "attention row does not sum to 1 at stage score");
  }

  // Attentive aggregation of fused neighbor features.
  inter.f_aggr = Mat<T>(n, cfg_.d_out_f);
  for (int i = 0; i < n; ++i) {
    const int* nbr = inter.neighbors.row(i);
    T* out = inter.f_aggr.row(i);
    for (int j = 0; j < k; ++j) {
      const T s = inter.score.at(i, j);
      const T* pj = inter.p_fuse.row(nbr[j]);
      for (int c = 0; c < cfg_.d_out_f; ++c) out[c] += s * pj[c];
    }
  }
  check_finite(inter.f_aggr, "f_aggr");

  // Coordinate update from mean pair features.
  Mat<T> m_u_id_out = m_u_id_.forward(u, &inter.m_u_id_ctx);
  if (variant != EdalVariant::D) {
    inter.rel_mean = Mat<T>(n, 2 * w);
    const T inv_k = T(1) / static_cast<T>(k);
    for (int i = 0; i < n; ++i) {
      T* out = inter.rel_mean.row(i);
      for (int j = 0; j < k; ++j) {
        const T* row = inter.rel.row(i * k + j);
        for (int c = 0; c < 2 * w; ++c) out[c] += row[c];
      }
      for (int c = 0; c < 2 * w; ++c) out[c] *= inv_k;
    }
    inter.u_upd = q_upd_.forward(inter.rel_mean, &inter.q_upd_ctx);
    check_finite(inter.u_upd, "u_upd");
    inter.u_out = inter.u_upd;
    for (size_t i = 0; i < inter.u_out.v.size(); ++i) inter.u_out.v[i] += m_u_id_out.v[i];
  } else {
    inter.u_upd = Mat<T>();
    inter.u_out = std::move(m_u_id_out);
  }
  check_finite(inter.u_out, "u_out");

  // Shortcut on the semantic attribute.
  inter.f_out = m_f_id_.forward(f, &inter.m_f_id_ctx);
  for (size_t i = 0; i < inter.f_out.v.size(); ++i) inter.f_out.v[i] += inter.f_aggr.v[i];
  check_finite(inter.f_out, "f_out");

  return {inter.u_out, inter.f_out};
}

template <typename T>
std::pair<Mat<T>, Mat<T>> Edal<T>::backward(const EdalIntermediates<T>& inter,
                                            const Mat<T>& du_out, const Mat<T>& df_out) {
  const int n = inter.p_u.rows;
  const int k = inter.neighbors.k;
  const bool skip_upd = inter.used_variant == EdalVariant::D;
  const bool variant_e = inter.used_variant == EdalVariant::E;
  const int w = inter.rel.cols / 2;

  Mat<T> dp_u(n, cfg_.d_in_f);
  Mat<T> dp_fuse(n, cfg_.d_out_f);
  Mat<T> drel(n * k, 2 * w);

  // f_out = f_aggr + m_f_id(f)
  Mat<T> df = m_f_id_.backward(inter.m_f_id_ctx, df_out);
  // f_aggr_i = sum_j score_ij * p_fuse_nbr(i,j)
  Mat<T> dscore(n, k);
  for (int i = 0; i < n; ++i) {
    const int* nbr = inter.neighbors.row(i);
    const T* dfa = df_out.row(i);
    for (int j = 0; j < k; ++j) {
      const T* pj = inter.p_fuse.row(nbr[j]);
      T* dpj = dp_fuse.row(nbr[j]);
      double acc = 0;
      const T s = inter.score.at(i, j);
      for (int c = 0; c < cfg_.d_out_f; ++c) {
        acc += static_cast<double>(dfa[c]) * pj[c];
        dpj[c] += s * dfa[c];
      }
      dscore.at(i, j) = static_cast<T>(acc);
    }
  }

  // u_out = u_upd + m_u_id(u)
  Mat<T> du = m_u_id_.backward(inter.m_u_id_ctx, du_out);
  if (!skip_upd) {
    Mat<T> drel_mean = q_upd_.backward(inter.q_upd_ctx, du_out);
    const T inv_k = T(1) / static_cast<T>(k);
    for (int i = 0; i < n; ++i) {
      const T* dm = drel_mean.row(i);
      for (int j = 0; j < k; ++j) {
        T* dr = drel.row(i * k + j);
        for (int c = 0; c < 2 * w; ++c) dr[c] += dm[c] * inv_k;
      }
    }
  }

  // score = softmax(m_u_a(rel)) per neighborhood row
  Mat<T> dlogits(n * k, 1);
  for (int i = 0; i < n; ++i) {
    std::vector<T> drow(k);
    diff::softmax_backward_row(inter.score.row(i), dscore.row(i), drow.data(), k);
    for (int j = 0; j < k; ++j) dlogits.at(i * k + j, 0) = drow[j];
  }
  {
    Mat<T> drel_attn = m_u_a_.backward(inter.m_u_a_ctx, dlogits);
    for (size_t i = 0; i < drel.v.size(); ++i) drel.v[i] += drel_attn.v[i];
  }

  // rel rows pair (src_i, src_j) (or (src_i, src_j - src_i) in relative mode)
  Mat<T> drel_src(n, w);
  for (int i = 0; i < n; ++i) {
    const int* nbr = inter.neighbors.row(i);
    T* dsi = drel_src.row(i);
    for (int j = 0; j < k; ++j) {
      const T* dr = drel.row(i * k + j);
      T* dsj = drel_src.row(nbr[j]);
      for (int c = 0; c < w; ++c) {
        if (rel_relative_) {
          dsi[c] += dr[c] - dr[w + c];
        } else {
          dsi[c] += dr[c];
        }
        dsj[c] += dr[w + c];
      }
    }
  }
  if (variant_e) {
    for (size_t i = 0; i < dp_fuse.v.size(); ++i) dp_fuse.v[i] += drel_src.v[i];
  } else {
    for (size_t i = 0; i < dp_u.v.size(); ++i) dp_u.v[i] += drel_src.v[i];
  }

  // p_fuse = fuse(p_f + p_u)
  Mat<T> dsum = fuse_.backward(inter.fuse_ctx, dp_fuse);
  Mat<T> dp_f = dsum;
  for (size_t i = 0; i < dp_u.v.size(); ++i) dp_u.v[i] += dsum.v[i];

  // projections
  {
    Mat<T> df_proj = m_f_.backward(inter.m_f_ctx, dp_f);
    for (size_t i = 0; i < df.v.size(); ++i) df.v[i] += df_proj.v[i];
  }
  {
    Mat<T> du_proj = m_u_.backward(inter.m_u_ctx, dp_u);
    for (size_t i = 0; i < du.v.size(); ++i) du.v[i] += du_proj.v[i];
  }
  return {std::move(du), std::move(df)};
}

template <typename T>
Edgcn<T>::Edgcn(const EdgcnConfig& cfg) : cfg_(cfg) {
  if (cfg.layers.empty()) raise(ErrorCode::Config, "edgcn: needs at least one layer");
  for (size_t l = 0; l + 1 < cfg.layers.size(); ++l) {
    if (cfg.layers[l].d_out_f != cfg.layers[l + 1].d_in_f)
      raise(ErrorCode::Config, "edgcn: layer " + std::to_string(l) + " d_out_f " +
                                   std::to_string(cfg.layers[l].d_out_f) +
                                   " breaks the width chain into layer " + std::to_string(l + 1));
    if (cfg.layers[l].d_in_f != cfg.layers[l + 1].d_in_u)
      raise(ErrorCode::Config, "edgcn: layer " + std::to_string(l) + " d_in_f " +
                                   std::to_string(cfg.layers[l].d_in_f) +
                                   " must equal layer " + std::to_string(l + 1) + " d_in_u");
  }
  if (cfg.num_classes < 2) raise(ErrorCode::Config, "edgcn: num_classes must be >= 2");

  Rng rng(mix_seed(cfg.seed, 0x65646763ULL));
  if (cfg.input_width != cfg.layers[0].d_in_f)
    embed_.emplace(params_, "embed",
                   hidden1(cfg.input_width, cfg.layers[0].d_in_f, cfg.hidden_mult), rng,
                   diff::InitScheme::ReluFanIn);
  for (size_t l = 0; l < cfg.layers.size(); ++l)
    layers_.emplace_back(params_, "layer" + std::to_string(l + 1), cfg.layers[l], cfg.variant,
                         cfg.hidden_mult, cfg.rel_relative, rng);
  head_ = diff::Mlp<T>(params_, "head",
                       MlpSpec{{cfg.layers.back().d_out_f, cfg.head_width}, Activation::Relu,
                               Activation::Relu},
                       rng, diff::InitScheme::ReluFanIn);
  classifier_ = diff::Mlp<T>(
      params_, "classifier",
      MlpSpec{{cfg.head_width, cfg.num_classes}, Activation::Relu, Activation::None}, rng);
}

template <typename T>
EdgcnOutputs<T> Edgcn<T>::forward(const repr::VoxelGraph& graph, EdgcnCtx<T>* ctx,
                                  std::optional<EdalVariant> override_variant) const {
  if (graph.num_vertices() < 2)
    raise(ErrorCode::DegenerateInput, "edgcn: graph needs at least 2 vertices");
  const int expected = embed_ ? cfg_.input_width : cfg_.layers[0].d_in_f;
  if (graph.semantics.cols != expected)
    raise(ErrorCode::Shape, "edgcn: graph semantic width " + std::to_string(graph.semantics.cols) +
                                ", model expects " + std::to_string(expected));

  EdgcnCtx<T> local;
  EdgcnCtx<T>& c = ctx ? *ctx : local;
  c.layers.clear();
  c.layers.resize(layers_.size());
  c.pooled.clear();
  c.pool_argmax.clear();

  c.u0 = graph.coords.template cast<T>();
  c.f_raw = graph.semantics.template cast<T>();
  c.f0 = embed_ ? embed_->forward(c.f_raw, &c.embed_ctx) : c.f_raw;

  const Mat<T>* u = &c.u0;
  const Mat<T>* f = &c.f0;
  for (size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].forward(*u, *f, c.layers[l], override_variant);
    u = &c.layers[l].u_out;
    f = &c.layers[l].f_out;
    // Per-layer max-pool over vertices feeds the distillation taps.
    Mat<T> pooled(1, f->cols);
    std::vector<int> argmax(f->cols, 0);
    for (int col = 0; col < f->cols; ++col) {
      T best = f->at(0, col);
      for (int i = 1; i < f->rows; ++i)
        if (f->at(i, col) > best) {
          best = f->at(i, col);
          argmax[col] = i;
        }
      pooled.at(0, col) = best;
    }
    c.pooled.push_back(std::move(pooled));
    c.pool_argmax.push_back(std::move(argmax));
  }

  c.head_out = head_.forward(c.pooled.back(), &c.head_ctx);
  Mat<T> logits = classifier_.forward(c.head_out, &c.classifier_ctx);

  EdgcnOutputs<T> out;
  out.logits.assign(logits.row(0), logits.row(0) + logits.cols);
  for (const auto& p : c.pooled) out.pooled.emplace_back(p.v);
  out.head_feature.assign(c.head_out.row(0), c.head_out.row(0) + c.head_out.cols);
  return out;
}

template <typename T>
void Edgcn<T>::backward(const EdgcnCtx<T>& ctx, const std::vector<T>& dlogits,
                        const std::vector<Mat<T>>* dpooled) {
  Mat<T> dl(1, static_cast<int>(dlogits.size()));
  std::copy(dlogits.begin(), dlogits.end(), dl.row(0));
  Mat<T> dhead = classifier_.backward(ctx.classifier_ctx, dl);
  Mat<T> dpool_last = head_.backward(ctx.head_ctx, dhead);

  const size_t n_layers = layers_.size();
  Mat<T> du, df;
  for (size_t l = n_layers; l-- > 0;) {
    // Gradient into this layer's pooled feature.
    Mat<T> dpool(1, layers_[l].config().d_out_f);
    if (l + 1 == n_layers)
      for (size_t i = 0; i < dpool.v.size(); ++i) dpool.v[i] += dpool_last.v[i];
    if (dpooled && l < dpooled->size() && (*dpooled)[l].size() > 0)
      for (size_t i = 0; i < dpool.v.size(); ++i) dpool.v[i] += (*dpooled)[l].v[i];

    Mat<T> df_out = l + 1 == n_layers
                        ? Mat<T>(ctx.layers[l].f_out.rows, ctx.layers[l].f_out.cols)
                        : std::move(df);
    Mat<T> du_out = l + 1 == n_layers
                        ? Mat<T>(ctx.layers[l].u_out.rows, ctx.layers[l].u_out.cols)
                        : std::move(du);
    for (int col = 0; col < df_out.cols; ++col)
      df_out.at(ctx.pool_argmax[l][col], col) += dpool.at(0, col);

    auto [du_in, df_in] = layers_[l].backward(ctx.layers[l], du_out, df_out);
    du = std::move(du_in);
    df = std::move(df_in);
  }
  if (embed_) embed_->backward(ctx.embed_ctx, df);
  params_.mark_grads();
}

template <typename T>
std::map<std::string, size_t> Edgcn<T>::param_count_by_group() const {
  std::map<std::string, size_t> groups;
  for (const auto& p : params_) {
    const auto dot = p.name.find('.');
    groups[p.name.substr(0, dot)] += p.count();
  }
  return groups;
}

template class Edal<float>;
template class Edal<double>;
template class Edgcn<float>;
template class Edgcn<double>;

}  // namespace evg::edgcn

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evgraph/diff.hpp"
#include "evgraph/representations.hpp"

namespace evg::edgcn {

// Aggregation-design variants:
//   A: neighbors found on the coordinate projection only
//   B: neighbors found on the semantic projection only
//   C: neighbors found on the fused joint representation (default)
//   D: C without the coordinate-attribute update
//   E: C with attention computed from fused pairs instead of coordinate pairs
enum class EdalVariant { A, B, C, D, E };

EdalVariant variant_from_string(const std::string& name);
const char* variant_name(EdalVariant v);

struct EdalLayerConfig {
  int d_in_u = 3;
  int d_in_f = 25;
  int d_out_f = 64;
  int n_neighbors = 20;
};

template <typename T>
struct EdalIntermediates {
  EdalVariant used_variant = EdalVariant::C;
  const Mat<T>* u_in = nullptr;  // borrowed forward inputs
  const Mat<T>* f_in = nullptr;
  Mat<T> p_f;           // N x d_in_f
  Mat<T> p_u;           // N x d_in_f
  Mat<T> fuse_sum;      // N x d_in_f
  Mat<T> p_fuse;        // N x d_out_f
  diff::KnnResult neighbors;
  Mat<T> rel;           // (N*k) x rel_width, row i*k+j pairs vertex i with its j-th neighbor
  Mat<T> score;         // N x k, rows sum to 1
  Mat<T> rel_mean;      // N x rel_width
  Mat<T> f_aggr;        // N x d_out_f
  Mat<T> u_upd;         // N x d_in_f, empty under variant D
  Mat<T> u_out;         // N x d_in_f
  Mat<T> f_out;         // N x d_out_f
  diff::MlpCtx<T> m_f_ctx, m_u_ctx, fuse_ctx, m_u_a_ctx, q_upd_ctx, m_u_id_ctx, m_f_id_ctx;
};

// One dynamic aggregation layer. Projects both vertex attributes into a
// shared width, fuses them, finds neighbors on the chosen representation,
// aggregates fused neighbor features under coordinate-derived attention,
// updates the coordinate attribute from pooled pair features, and adds the
// two shortcut projections.
template <typename T>
class Edal {
 public:
  Edal(diff::ParamStore<T>& store, const std::string& prefix, const EdalLayerConfig& cfg,
       EdalVariant variant, int hidden_mult, bool rel_relative, Rng& rng);

  // Keep u and f alive until backward; the intermediates borrow them.
  // `override_variant` may swap among A/B/C/D at call time (shared weights);
  // E changes parameter shapes and must be selected at construction.
  std::pair<Mat<T>, Mat<T>> forward(const Mat<T>& u, const Mat<T>& f,
                                    EdalIntermediates<T>& inter,
                                    std::optional<EdalVariant> override_variant = {}) const;

  // Returns (dL/du, dL/df) and accumulates parameter gradients.
  std::pair<Mat<T>, Mat<T>> backward(const EdalIntermediates<T>& inter, const Mat<T>& du_out,
                                     const Mat<T>& df_out);

  const EdalLayerConfig& config() const { return cfg_; }
  EdalVariant variant() const { return variant_; }

 private:
  EdalVariant effective(std::optional<EdalVariant> o) const;
  int rel_width() const;

  EdalLayerConfig cfg_;
  EdalVariant variant_;
  bool rel_relative_;
  diff::Mlp<T> m_f_, m_u_, fuse_, m_u_a_, q_upd_, m_u_id_, m_f_id_;
};

struct EdgcnConfig {
  std::vector<EdalLayerConfig> layers = {
      {3, 25, 64, 20}, {25, 64, 64, 20}, {64, 64, 128, 20}};
  int input_width = 25;  // D_inp of the voxel graph; an embedding MLP is
                         // inserted when it differs from layers[0].d_in_f
  int num_classes = 11;
  int head_width = 128;
  int hidden_mult = 4;   // hidden width of internal MLPs = mult * output width
  EdalVariant variant = EdalVariant::C;
  bool rel_relative = false;
  std::uint64_t seed = 1;
};

template <typename T>
struct EdgcnCtx {
  Mat<T> u0;
  Mat<T> f_raw;
  Mat<T> f0;
  diff::MlpCtx<T> embed_ctx;
  std::vector<EdalIntermediates<T>> layers;
  std::vector<Mat<T>> pooled;        // 1 x d_out_f per layer, max over vertices
  std::vector<std::vector<int>> pool_argmax;
  Mat<T> head_out;                   // 1 x head_width
  diff::MlpCtx<T> head_ctx, classifier_ctx;
};

template <typename T>
struct EdgcnOutputs {
  std::vector<T> logits;
  std::vector<std::vector<T>> pooled;  // per-layer max-pooled features
  std::vector<T> head_feature;         // head MLP output (export surface)
};

template <typename T>
class Edgcn {
 public:
  explicit Edgcn(const EdgcnConfig& cfg);

  EdgcnOutputs<T> forward(const repr::VoxelGraph& graph, EdgcnCtx<T>* ctx = nullptr,
                          std::optional<EdalVariant> override_variant = {}) const;

  // dpooled, when present, adds gradients flowing directly into the per-layer
  // pooled features (the distillation taps).
  void backward(const EdgcnCtx<T>& ctx, const std::vector<T>& dlogits,
                const std::vector<Mat<T>>* dpooled = nullptr);

  const EdgcnConfig& config() const { return cfg_; }
  diff::ParamStore<T>& params() { return params_; }
  const diff::ParamStore<T>& params() const { return params_; }
  int tap_width(int layer) const { return cfg_.layers[layer].d_out_f; }

  size_t param_count() const { return params_.total_count(); }
  std::map<std::string, size_t> param_count_by_group() const;

 private:
  EdgcnConfig cfg_;
  diff::ParamStore<T> params_;
  std::optional<diff::Mlp<T>> embed_;
  std::vector<Edal<T>> layers_;
  diff::Mlp<T> head_;
  diff::Mlp<T> classifier_;
};

}  // namespace evg::edgcn

#include "evgraph/teacher.hpp"

#include <algorithm>
#include <cmath>

#include "evgraph/distill.hpp"
#include "evgraph/error.hpp"

namespace evg::teacher {

using diff::Activation;
using diff::MlpSpec;

template <typename T>
Conv2d<T>::Conv2d(diff::ParamStore<T>& store, const std::string& prefix, int c_in, int c_out,
                  int ksize, int stride, Rng& rng)
    : c_in_(c_in), c_out_(c_out), ksize_(ksize), stride_(stride), pad_(ksize / 2) {
  weight_ = &store.add(prefix + ".w", c_out, c_in * ksize * ksize);
  diff::init_param(weight_->value, c_in * ksize * ksize, diff::InitScheme::ReluFanIn, rng);
  bias_ = &store.add(prefix + ".b", 1, c_out);
}

template <typename T>
int Conv2d<T>::out_size(int in_size) const {
  return (in_size + 2 * pad_ - ksize_) / stride_ + 1;
}

template <typename T>
FeatMap<T> Conv2d<T>::forward(const FeatMap<T>& in) const {
  const int oh = out_size(in.height), ow = out_size(in.width);
  if (oh < 1 || ow < 1)
    raise(ErrorCode::Config, "conv: spatial size too small to downsample");
  FeatMap<T> out(c_out_, oh, ow);
  for (int o = 0; o < c_out_; ++o) {
    const T* wrow = weight_->value.row(o);
    T* dst = out.data.row(o);
    const T b = bias_->value.at(0, o);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        T acc = b;
        const int iy0 = y * stride_ - pad_;
        const int ix0 = x * stride_ - pad_;
        for (int c = 0; c < c_in_; ++c) {
          const T* src = in.data.row(c);
          const T* wk = wrow + c * ksize_ * ksize_;
          for (int ky = 0; ky < ksize_; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < ksize_; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= in.width) continue;
              acc += wk[ky * ksize_ + kx] * src[iy * in.width + ix];
            }
          }
        }
        dst[y * ow + x] = acc;
      }
    }
  }
  return out;
}

template <typename T>
FeatMap<T> Conv2d<T>::backward(const FeatMap<T>& in, const FeatMap<T>& dout) {
  FeatMap<T> din(c_in_, in.height, in.width);
  for (int o = 0; o < c_out_; ++o) {
    const T* wrow = weight_->value.row(o);
    T* wgrad = weight_->grad.row(o);
    const T* gsrc = dout.data.row(o);
    double bacc = 0;
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        const T g = gsrc[y * dout.width + x];
        if (g == T(0)) continue;
        bacc += static_cast<double>(g);
        const int iy0 = y * stride_ - pad_;
        const int ix0 = x * stride_ - pad_;
        for (int c = 0; c < c_in_; ++c) {
          const T* src = in.data.row(c);
          T* dsrc = din.data.row(c);
          const T* wk = wrow + c * ksize_ * ksize_;
          T* wg = wgrad + c * ksize_ * ksize_;
          for (int ky = 0; ky < ksize_; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < ksize_; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= in.width) continue;
              wg[ky * ksize_ + kx] += g * src[iy * in.width + ix];
              dsrc[iy * in.width + ix] += g * wk[ky * ksize_ + kx];
            }
          }
        }
      }
    }
    bias_->grad.at(0, o) += static_cast<T>(bacc);
  }
  return din;
}

namespace {

template <typename T>
void relu_inplace(FeatMap<T>& m) {
  for (auto& x : m.data.v) x = x > T(0) ? x : T(0);
}

template <typename T>
std::vector<T> global_avg_pool(const FeatMap<T>& m) {
  std::vector<T> out(m.channels);
  const double inv = 1.0 / (m.height * m.width);
  for (int c = 0; c < m.channels; ++c) {
    double acc = 0;
    const T* src = m.data.row(c);
    for (int i = 0; i < m.height * m.width; ++i) acc += static_cast<double>(src[i]);
    out[c] = static_cast<T>(acc * inv);
  }
  return out;
}

}  // namespace

// One residual unit: conv-relu-conv plus a skip (1x1 projection when the
// shape changes), relu after the sum.
template <typename T>
struct Teacher<T>::Block {
  Conv2d<T> conv1, conv2;
  std::optional<Conv2d<T>> proj;
  int stage = 0;
};

template <typename T>
Teacher<T>::Teacher(const TeacherConfig& cfg) : cfg_(cfg) {
  if (cfg.channels.empty()) raise(ErrorCode::Config, "teacher: needs at least one stage");
  if (cfg.taps < 1 || cfg.taps > static_cast<int>(cfg.channels.size()))
    raise(ErrorCode::Config, "teacher: taps must lie in [1, #stages]");
  for (size_t s = 0; s + 1 < cfg.channels.size(); ++s)
    if (cfg.channels[s] > cfg.channels[s + 1])
      raise(ErrorCode::Config, "teacher: stage widths must be non-decreasing");
  if (cfg.bins < 1) raise(ErrorCode::Config, "teacher: bins must be >= 1");

  Rng rng(mix_seed(cfg.seed, 0x74636872ULL));
  stem_ = Conv2d<T>(params_, "stem", cfg.bins, cfg.channels[0], 3, 1, rng);
  int c_prev = cfg.channels[0];
  for (size_t s = 0; s < cfg.channels.size(); ++s) {
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      Block blk;
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int c_out = cfg.channels[s];
      const std::string prefix =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      blk.conv1 = Conv2d<T>(params_, prefix + ".conv1", c_prev, c_out, 3, stride, rng);
      blk.conv2 = Conv2d<T>(params_, prefix + ".conv2", c_out, c_out, 3, 1, rng);
      if (stride != 1 || c_prev != c_out)
        blk.proj = Conv2d<T>(params_, prefix + ".proj", c_prev, c_out, 1, stride, rng);
      blk.stage = static_cast<int>(s);
      blocks_.push_back(std::move(blk));
      c_prev = c_out;
    }
  }
  const int first_tap = static_cast<int>(cfg.channels.size()) - cfg.taps;
  for (int t = 0; t < cfg.taps; ++t) {
    const int c = cfg.channels[first_tap + t];
    heads_.emplace_back(params_, "head" + std::to_string(t + 1),
                        MlpSpec{{c, cfg.num_classes}, Activation::Relu, Activation::None}, rng);
  }
}

template <typename T>
Teacher<T>::~Teacher() = default;

template <typename T>
Teacher<T>::Teacher(Teacher&&) noexcept = default;

template <typename T>
int Teacher<T>::tap_width(int tap) const {
  const int first_tap = static_cast<int>(cfg_.channels.size()) - cfg_.taps;
  return cfg_.channels[first_tap + tap];
}

template <typename T>
TeacherOutputs<T> Teacher<T>::forward(const repr::DenseVoxelGrid& grid,
                                      TeacherCtx<T>* ctx) const {
  if (grid.bins != cfg_.bins)
    raise(ErrorCode::Config, "teacher: grid has " + std::to_string(grid.bins) +
                                 " bins, config expects " + std::to_string(cfg_.bins));

  TeacherCtx<T> local;
  TeacherCtx<T>& c = ctx ? *ctx : local;
  c.blocks.clear();
  c.tap_maps.clear();
  c.tap_pooled.clear();
  c.tap_pooled.reserve(heads_.size());  // head ctxs keep pointers into this
  c.head_ctx.clear();
  c.head_ctx.resize(heads_.size());

  c.input = FeatMap<T>(grid.bins, grid.height, grid.width);
  for (size_t i = 0; i < grid.values.size(); ++i)
    c.input.data.v[i] = static_cast<T>(grid.values[i]);

  c.stem_pre = stem_.forward(c.input);
  c.stem_act = c.stem_pre;
  relu_inplace(c.stem_act);

  const int first_tap = static_cast<int>(cfg_.channels.size()) - cfg_.taps;
  const FeatMap<T>* cur = &c.stem_act;
  size_t block_idx = 0;
  TeacherOutputs<T> out;
  for (size_t s = 0; s < cfg_.channels.size(); ++s) {
    for (int b = 0; b < cfg_.blocks_per_stage; ++b, ++block_idx) {
      const Block& blk = blocks_[block_idx];
      if (blk.conv1.stride() > 1 && (cur->height < 2 || cur->width < 2))
        raise(ErrorCode::Config, "teacher: spatial size too small to downsample at stage " +
                                     std::to_string(s + 1));
      BlockCtx<T> bc;
      bc.in = *cur;
      bc.pre1 = blk.conv1.forward(bc.in);
      bc.act1 = bc.pre1;
      relu_inplace(bc.act1);
      bc.pre_sum = blk.conv2.forward(bc.act1);
      if (blk.proj) {
        FeatMap<T> skip = blk.proj->forward(bc.in);
        for (size_t i = 0; i < bc.pre_sum.data.v.size(); ++i)
          bc.pre_sum.data.v[i] += skip.data.v[i];
      } else {
        for (size_t i = 0; i < bc.pre_sum.data.v.size(); ++i)
          bc.pre_sum.data.v[i] += bc.in.data.v[i];
      }
      FeatMap<T> act = bc.pre_sum;
      relu_inplace(act);
      c.blocks.push_back(std::move(bc));
      c.tap_maps.push_back(std::move(act));  // reused as the running feature
      cur = &c.tap_maps.back();
    }
    if (static_cast<int>(s) >= first_tap) {
      std::vector<T> pooled = global_avg_pool(*cur);
      Mat<T> pooled_mat(1, static_cast<int>(pooled.size()));
      std::copy(pooled.begin(), pooled.end(), pooled_mat.row(0));
      c.tap_pooled.push_back(std::move(pooled_mat));
      const int tap = static_cast<int>(s) - first_tap;
      Mat<T> logits = heads_[tap].forward(c.tap_pooled.back(), &c.head_ctx[tap]);
      out.stage_features.push_back(std::move(pooled));
      out.stage_logits.emplace_back(logits.row(0), logits.row(0) + logits.cols);
    }
  }
  out.final_logits = out.stage_logits.back();
  return out;
}

template <typename T>
void Teacher<T>::backward(const TeacherCtx<T>& ctx,
                          const std::vector<std::vector<T>>& dstage_logits) {
  const int n_stages = static_cast<int>(cfg_.channels.size());
  const int first_tap = n_stages - cfg_.taps;

  // dmap accumulates the gradient flowing into the running feature map.
  FeatMap<T> dmap;
  size_t block_idx = blocks_.size();
  for (int s = n_stages - 1; s >= 0; --s) {
    if (s >= first_tap) {
      const int tap = s - first_tap;
      const auto& dvec = dstage_logits[tap];
      if (!dvec.empty()) {
        Mat<T> dl(1, static_cast<int>(dvec.size()));
        std::copy(dvec.begin(), dvec.end(), dl.row(0));
        Mat<T> dpooled = heads_[tap].backward(ctx.head_ctx[tap], dl);
        // Undo global average pooling.
        const size_t map_idx = block_idx - 1;
        const FeatMap<T>& map = ctx.tap_maps[map_idx];
        if (dmap.data.size() == 0) dmap = FeatMap<T>(map.channels, map.height, map.width);
        const T inv = T(1) / static_cast<T>(map.height * map.width);
        for (int ch = 0; ch < map.channels; ++ch) {
          const T g = dpooled.at(0, ch) * inv;
          T* dst = dmap.data.row(ch);
          for (int i = 0; i < map.height * map.width; ++i) dst[i] += g;
        }
      }
    }
    for (int b = cfg_.blocks_per_stage - 1; b >= 0; --b) {
      --block_idx;
      Block& blk = blocks_[block_idx];
      const BlockCtx<T>& bc = ctx.blocks[block_idx];
      if (dmap.data.size() == 0)
        dmap = FeatMap<T>(bc.pre_sum.channels, bc.pre_sum.height, bc.pre_sum.width);
      // relu after the sum
      for (size_t i = 0; i < dmap.data.v.size(); ++i)
        if (bc.pre_sum.data.v[i] <= T(0)) dmap.data.v[i] = T(0);
      // conv2 path
      FeatMap<T> dact1 = blk.conv2.backward(bc.act1, dmap);
      for (size_t i = 0; i < dact1.data.v.size(); ++i)
        if (bc.pre1.data.v[i] <= T(0)) dact1.data.v[i] = T(0);
      FeatMap<T> din = blk.conv1.backward(bc.in, dact1);
      // skip path
      if (blk.proj) {
        FeatMap<T> dskip = blk.proj->backward(bc.in, dmap);
        for (size_t i = 0; i < din.data.v.size(); ++i) din.data.v[i] += dskip.data.v[i];
      } else {
        for (size_t i = 0; i < din.data.v.size(); ++i) din.data.v[i] += dmap.data.v[i];
      }
      dmap = std::move(din);
    }
  }
  // stem
  for (size_t i = 0; i < dmap.data.v.size(); ++i)
    if (ctx.stem_pre.data.v[i] <= T(0)) dmap.data.v[i] = T(0);
  stem_.backward(ctx.input, dmap);
  params_.mark_grads();
}

namespace {

template <typename T>
int argmax_vec(const std::vector<T>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

template <typename T>
double evaluate_teacher(const Teacher<T>& model, const std::vector<GridSample>& samples,
                        std::vector<double>* per_class) {
  if (samples.empty()) raise(ErrorCode::DegenerateInput, "evaluate: no samples");
  std::vector<int> hits(model.config().num_classes, 0), totals(model.config().num_classes, 0);
  int correct = 0;
  for (const auto& s : samples) {
    const auto out = model.forward(*s.grid);
    const int pred = argmax_vec(out.final_logits);
    ++totals[s.label];
    if (pred == s.label) {
      ++correct;
      ++hits[s.label];
    }
  }
  if (per_class) {
    per_class->clear();
    for (size_t c = 0; c < hits.size(); ++c)
      per_class->push_back(totals[c] > 0 ? double(hits[c]) / totals[c] : 0.0);
  }
  return static_cast<double>(correct) / samples.size();
}

template <typename T>
TrainResult train_teacher(Teacher<T>& model, const std::vector<GridSample>& train,
                          const std::vector<GridSample>& test,
                          const TeacherTrainSettings& settings) {
  if (train.empty() || test.empty())
    raise(ErrorCode::DegenerateInput, "train_teacher: empty manifest");
  for (const auto& s : train)
    if (s.label < 0 || s.label >= model.config().num_classes)
      raise(ErrorCode::InvalidArgument, "train_teacher: label out of range");
  const int n_taps = model.config().taps;
  const int num_classes = model.config().num_classes;

  diff::Adam<T> opt(settings.adam.lr, settings.adam.halve_every);
  TrainResult result;
  auto best = diff::snapshot_params(model.params());
  double best_acc = -1.0;
  int best_epoch = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(mix_seed(settings.seed, 0x74736866ULL));

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    std::vector<double> head_sums(n_taps, 0.0);
    int n_batches = 0, correct = 0, seen = 0;
    for (size_t start = 0; start < order.size(); start += settings.batch_size) {
      const size_t stop = std::min(order.size(), start + settings.batch_size);
      const int bsz = static_cast<int>(stop - start);
      std::vector<double> head_loss(n_taps, 0.0);
      for (size_t bi = start; bi < stop; ++bi) {
        const GridSample& s = train[order[bi]];
        TeacherCtx<T> ctx;
        const auto out = model.forward(*s.grid, &ctx);
        if (argmax_vec(out.final_logits) == s.label) ++correct;
        std::vector<std::vector<T>> dheads(n_taps);
        for (int h = 0; h < n_taps; ++h) {
          auto ce = distill::cross_entropy(out.stage_logits[h], s.label);
          head_loss[h] += ce.value / bsz;
          dheads[h].resize(num_classes);
          for (int c = 0; c < num_classes; ++c)
            dheads[h][c] = static_cast<T>(static_cast<double>(ce.grad[c]) / bsz);
        }
        model.backward(ctx, dheads);
      }
      double batch_total = 0;
      for (int h = 0; h < n_taps; ++h) batch_total += head_loss[h];
      if (!std::isfinite(batch_total))
        raise(ErrorCode::Numeric,
              "train_teacher: loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(n_batches));
      opt.step(model.params(), epoch);
      for (int h = 0; h < n_taps; ++h) head_sums[h] += head_loss[h];
      ++n_batches;
      seen += bsz;
    }

    MetricsRow row;
    row.epoch = epoch;
    row.split = "train";
    for (int h = 0; h < n_taps; ++h) {
      row.loss_feat.push_back(head_sums[h] / n_batches);
      row.loss_total += head_sums[h] / n_batches;
    }
    row.loss_task = row.loss_feat.back();  // the final head's cross-entropy
    row.accuracy = static_cast<double>(correct) / seen;
    row.lr = opt.lr_at(epoch);
    row.seed = settings.seed;
    result.metrics.push_back(row);

    MetricsRow test_row;
    test_row.epoch = epoch;
    test_row.split = "test";
    std::vector<double> test_head(n_taps, 0.0);
    int t_correct = 0;
    for (const auto& s : test) {
      const auto out = model.forward(*s.grid);
      if (argmax_vec(out.final_logits) == s.label) ++t_correct;
      for (int h = 0; h < n_taps; ++h)
        test_head[h] += distill::cross_entropy(out.stage_logits[h], s.label).value / test.size();
    }
    for (int h = 0; h < n_taps; ++h) {
      test_row.loss_feat.push_back(test_head[h]);
      test_row.loss_total += test_head[h];
    }
    test_row.loss_task = test_row.loss_feat.back();
    test_row.accuracy = static_cast<double>(t_correct) / test.size();
    test_row.lr = opt.lr_at(epoch);
    test_row.seed = settings.seed;
    result.metrics.push_back(test_row);

    if (test_row.accuracy > best_acc) {
      best_acc = test_row.accuracy;
      best_epoch = epoch;
      best = diff::snapshot_params(model.params());
    }
    result.final_accuracy = test_row.accuracy;
  }

  diff::restore_params(model.params(), best);
  result.best_epoch = best_epoch;
  result.best_accuracy = best_acc;
  return result;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Teacher<float>;
template class Teacher<double>;
template TrainResult train_teacher<float>(Teacher<float>&, const std::vector<GridSample>&,
                                          const std::vector<GridSample>&,
                                          const TeacherTrainSettings&);
template TrainResult train_teacher<double>(Teacher<double>&, const std::vector<GridSample>&,
                                           const std::vector<GridSample>&,
                                           const TeacherTrainSettings&);
template double evaluate_teacher<float>(const Teacher<float>&, const std::vector<GridSample>&,
                                        std::vector<double>*);
template double evaluate_teacher<double>(const Teacher<double>&, const std::vector<GridSample>&,
                                         std::vector<double>*);

}  // namespace evg::teacher

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evgraph/diff.hpp"
#include "evgraph/representations.hpp"
#include "evgraph/training.hpp"

namespace evg::teacher {

// Channel-major feature map (c x h*w behind a Mat).
template <typename T>
struct FeatMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat<T> data;  // channels x (height*width)

  FeatMap() = default;
  FeatMap(int c, int h, int w) : channels(c), height(h), width(w), data(c, h * w) {}
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(diff::ParamStore<T>& store, const std::string& prefix, int c_in, int c_out, int ksize,
         int stride, Rng& rng);

  FeatMap<T> forward(const FeatMap<T>& in) const;
  // din from dout; accumulates weight/bias gradients. `in` must be the
  // forward input.
  FeatMap<T> backward(const FeatMap<T>& in, const FeatMap<T>& dout);

  int out_size(int in_size) const;
  int stride() const { return stride_; }

 private:
  int c_in_ = 0, c_out_ = 0, ksize_ = 3, stride_ = 1, pad_ = 1;
  diff::Param<T>* weight_ = nullptr;  // c_out x (c_in*ksize*ksize)
  diff::Param<T>* bias_ = nullptr;    // 1 x c_out
};

struct TeacherConfig {
  std::vector<int> channels = {16, 32, 64};  // non-decreasing stage widths
  int blocks_per_stage = 1;
  int taps = 3;  // N_t tapped stages, counted from the last stage backwards
  int num_classes = 11;
  int bins = 8;  // input grid bins (input channels)
  std::uint64_t seed = 1;
};

template <typename T>
struct TeacherOutputs {
  std::vector<std::vector<T>> stage_features;  // N_t pooled vectors
  std::vector<std::vector<T>> stage_logits;    // N_t auxiliary class scores
  std::vector<T> final_logits;                 // last tap's head
};

template <typename T>
struct BlockCtx {
  FeatMap<T> in;       // block input
  FeatMap<T> pre1;     // conv1 output before relu
  FeatMap<T> act1;     // relu(pre1)
  FeatMap<T> pre_sum;  // conv2(act1) + skip, before final relu
};

template <typename T>
struct TeacherCtx {
  FeatMap<T> input;
  FeatMap<T> stem_pre;
  FeatMap<T> stem_act;
  std::vector<BlockCtx<T>> blocks;
  std::vector<FeatMap<T>> tap_maps;  // running feature map after each block
  std::vector<Mat<T>> tap_pooled;    // 1 x c pooled features
  std::vector<diff::MlpCtx<T>> head_ctx;
};

// Frame-based branch: stem conv, residual stages with stride-2 transitions,
// global average pooling after each tapped stage, one linear head per tap.
template <typename T>
class Teacher {
 public:
  explicit Teacher(const TeacherConfig& cfg);
  ~Teacher();
  Teacher(Teacher&&) noexcept;

  TeacherOutputs<T> forward(const repr::DenseVoxelGrid& grid, TeacherCtx<T>* ctx = nullptr) const;
  // dstage_logits carries one gradient vector per tap (empty vectors are
  // treated as zero).
  void backward(const TeacherCtx<T>& ctx, const std::vector<std::vector<T>>& dstage_logits);

  const TeacherConfig& config() const { return cfg_; }
  diff::ParamStore<T>& params() { return params_; }
  const diff::ParamStore<T>& params() const { return params_; }
  int tap_width(int tap) const;

 private:
  struct Block;

  TeacherConfig cfg_;
  diff::ParamStore<T> params_;
  Conv2d<T> stem_;
  std::vector<Block> blocks_;
  std::vector<diff::Mlp<T>> heads_;  // one per tap
};

struct TeacherTrainSettings {
  int epochs = 30;
  int batch_size = 32;
  AdamSettings adam;
  std::uint64_t seed = 1;
};

// Task-only training: minimizes the sum of the N_t per-head cross-entropies
// under Adam. Keeps the best-by-test-accuracy weights on return; aborts with
// a diagnostic on a non-finite loss.
template <typename T>
TrainResult train_teacher(Teacher<T>& model, const std::vector<GridSample>& train,
                          const std::vector<GridSample>& test,
                          const TeacherTrainSettings& settings);

template <typename T>
double evaluate_teacher(const Teacher<T>& model, const std::vector<GridSample>& samples,
                        std::vector<double>* per_class = nullptr);

}  // namespace evg::teacher

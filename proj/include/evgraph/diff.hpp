#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evgraph/rng.hpp"
#include "evgraph/tensor.hpp"

namespace evg::diff {

template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  size_t count() const { return value.size(); }
};

// Owns every learnable tensor of one model (or one trainer). Insertion order
// is the serialization order; names are unique.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, int rows, int cols) {
    if (index_.count(name))
      raise(ErrorCode::InvalidArgument, "duplicate parameter name: " + name);
    params_.push_back(Param<T>{name, Mat<T>(rows, cols), Mat<T>(rows, cols)});
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  Param<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Param<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

  size_t total_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.count();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.zero();
    grads_populated_ = false;
  }
  void mark_grads() { grads_populated_ = true; }
  bool grads_populated() const { return grads_populated_; }

 private:
  std::deque<Param<T>> params_;  // deque: pointers stay valid across add()
  std::unordered_map<std::string, size_t> index_;
  bool grads_populated_ = false;
};

enum class Activation { None, Relu, Softmax };

// FanIn: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the init_params default.
// ReluFanIn: He-style U(-sqrt(6/fan_in), sqrt(6/fan_in)); keeps activation
// variance roughly constant through relu stacks, used by the model builders.
enum class InitScheme { FanIn, ReluFanIn, Zeros };

// Affine stack d_0 -> d_1 -> ... -> d_k with an activation after every layer
// but the last, plus an optional terminal activation.
struct MlpSpec {
  std::vector<int> widths;
  Activation hidden = Activation::Relu;
  Activation terminal = Activation::None;

  int in_width() const { return widths.front(); }
  int out_width() const { return widths.back(); }
  size_t param_count() const;
};

template <typename T>
void init_param(Mat<T>& w, int fan_in, InitScheme scheme, Rng& rng) {
  if (scheme == InitScheme::Zeros) {
    w.zero();
    return;
  }
  const double gain = scheme == InitScheme::ReluFanIn ? std::sqrt(6.0) : 1.0;
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : w.v) x = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct MlpCtx {
  const Mat<T>* input = nullptr;
  std::vector<Mat<T>> activations;  // post-activation output of each layer
  std::vector<Mat<T>> pre;          // pre-activation, kept only where needed
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;
  // Registers weights "<prefix>.w<i>" / biases "<prefix>.b<i>" in the store.
  Mlp(ParamStore<T>& store, const std::string& prefix, MlpSpec spec, Rng& rng,
      InitScheme scheme = InitScheme::FanIn);

  // y rows are independent samples; x must have spec.in_width() columns.
  Mat<T> forward(const Mat<T>& x, MlpCtx<T>* ctx = nullptr) const;
  // Accumulates parameter gradients, returns dL/dx. Requires the ctx used in
  // the matching forward call.
  Mat<T> backward(const MlpCtx<T>& ctx, const Mat<T>& dy);

  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
  std::vector<Param<T>*> weights_;
  std::vector<Param<T>*> biases_;
  std::string prefix_;
};

// Numerically stable softmax (max subtraction). Works row-wise.
template <typename T>
void softmax_row(const T* x, T* y, int n);
template <typename T>
std::vector<T> softmax(const std::vector<T>& x);
// dx from dy given y = softmax(x): dx = (dy - <dy, y>) * y.
template <typename T>
void softmax_backward_row(const T* y, const T* dy, T* dx, int n);

// Brute-force exact KNN under the Euclidean metric. Row i of the result lists
// min(k, candidates) neighbors of point i, distance-ascending, ties broken by
// ascending index.
struct KnnResult {
  int k = 0;  // effective row length
  std::vector<int> idx;

  const int* row(int i) const { return idx.data() + static_cast<size_t>(i) * k; }
};

template <typename T>
KnnResult knn(const Mat<T>& points, int k, bool exclude_self = true);

// Schedules. lr(e) follows half-cosine annealing from lr_max at e=0 down to
// lr_min at e=total_epochs.
struct CosineSchedule {
  double lr_max = 1e-1;
  double lr_min = 1e-4;
  int total_epochs = 1;

  double lr_at(int epoch) const;
};

template <typename T>
class SgdCosine {
 public:
  explicit SgdCosine(CosineSchedule schedule) : schedule_(schedule) {}
  void step(ParamStore<T>& params, int epoch);
  double lr_at(int epoch) const { return schedule_.lr_at(epoch); }

 private:
  CosineSchedule schedule_;
};

template <typename T>
class Adam {
 public:
  Adam(double lr_base, int halve_every_epochs)
      : lr_base_(lr_base), halve_every_(halve_every_epochs) {}
  void step(ParamStore<T>& params, int epoch);
  double lr_at(int epoch) const;

 private:
  double lr_base_;
  int halve_every_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// Central-difference check of the analytic gradients produced by `loss`.
// `loss` must be a deterministic closure that, starting from zeroed gradient
// accumulators, computes the scalar loss and accumulates analytic gradients.
// Samples up to coords_per_param coordinates per parameter and returns the
// max relative error with denominator max(|analytic|, |fd|, 1e-8).
double grad_check(ParamStore<double>& params, const std::function<double()>& loss, double eps,
                  std::uint64_t seed, int coords_per_param = 64);

// Value-only copy of a store, for best-epoch snapshots.
template <typename T>
std::vector<Mat<T>> snapshot_params(const ParamStore<T>& store) {
  std::vector<Mat<T>> out;
  out.reserve(store.size());
  for (const auto& p : store) out.push_back(p.value);
  return out;
}

template <typename T>
void restore_params(ParamStore<T>& store, const std::vector<Mat<T>>& snapshot) {
  size_t i = 0;
  for (auto& p : store) p.value = snapshot[i++];
}

// Weight files: flat little-endian float32 blob in store order plus a JSON
// index {"params":[{"name","offset","shape"}],"total_elements":N}. Offsets
// count elements. Round trips are bit-exact for float32 stores.
template <typename T>
void save_weights(const ParamStore<T>& params, const std::string& bin_path,
                  const std::string& index_path);
template <typename T>
void load_weights(ParamStore<T>& params, const std::string& bin_path,
                  const std::string& index_path);

}  // namespace evg::diff

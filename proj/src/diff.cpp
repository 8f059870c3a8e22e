#include "evgraph/diff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "evgraph/error.hpp"

namespace evg::diff {

using json = nlohmann::json;

size_t MlpSpec::param_count() const {
  size_t n = 0;
  for (size_t l = 1; l < widths.size(); ++l)
    n += static_cast<size_t>(widths[l - 1]) * widths[l] + widths[l];
  return n;
}

template <typename T>
Mlp<T>::Mlp(ParamStore<T>& store, const std::string& prefix, MlpSpec spec, Rng& rng,
            InitScheme scheme)
    : spec_(std::move(spec)), prefix_(prefix) {
  if (spec_.widths.size() < 2)
    raise(ErrorCode::InvalidArgument, prefix + ": an MLP needs at least 2 widths");
  for (int w : spec_.widths)
    if (w < 1) raise(ErrorCode::InvalidArgument, prefix + ": widths must be >= 1");
  for (size_t l = 1; l < spec_.widths.size(); ++l) {
    const int in = spec_.widths[l - 1], out = spec_.widths[l];
    auto& w = store.add(prefix + ".w" + std::to_string(l - 1), in, out);
    // relu gain applies only to layers a relu actually follows
    const Activation act = l == spec_.widths.size() - 1 ? spec_.terminal : spec_.hidden;
    const InitScheme layer_scheme =
        scheme == InitScheme::ReluFanIn && act != Activation::Relu ? InitScheme::FanIn
                                                                   : scheme;
    init_param(w.value, in, layer_scheme, rng);
    auto& b = store.add(prefix + ".b" + std::to_string(l - 1), 1, out);
    b.value.zero();
    weights_.push_back(&w);
    biases_.push_back(&b);
  }
}

namespace {

template <typename T>
void apply_activation(Mat<T>& m, Activation act) {
  switch (act) {
    case Activation::None:
      break;
    case Activation::Relu:
      for (auto& x : m.v) x = x > T(0) ? x : T(0);
      break;
    case Activation::Softmax:
      for (int i = 0; i < m.rows; ++i) softmax_row(m.row(i), m.row(i), m.cols);
      break;
  }
}

}  // namespace

template <typename T>
Mat<T> Mlp<T>::forward(const Mat<T>& x, MlpCtx<T>* ctx) const {
  if (x.cols != spec_.in_width())
    raise(ErrorCode::Shape, prefix_ + ": input width " + std::to_string(x.cols) +
                                ", spec expects " + std::to_string(spec_.in_width()));
  if (ctx) {
    ctx->input = &x;
    ctx->activations.clear();
    ctx->pre.clear();
  }
  const Mat<T>* cur = &x;
  Mat<T> out;
  const size_t layers = weights_.size();
  for (size_t l = 0; l < layers; ++l) {
    Mat<T> y(cur->rows, spec_.widths[l + 1]);
    for (int i = 0; i < y.rows; ++i)
      std::copy(biases_[l]->value.row(0), biases_[l]->value.row(0) + y.cols, y.row(i));
    mm_nn(*cur, weights_[l]->value, y);
    const Activation act = l + 1 == layers ? spec_.terminal : spec_.hidden;
    if (ctx && act == Activation::Relu) ctx->pre.push_back(y);
    apply_activation(y, act);
    if (ctx) {
      ctx->activations.push_back(std::move(y));
      cur = &ctx->activations.back();
    } else {
      out = std::move(y);
      cur = &out;
    }
  }
  return ctx ? ctx->activations.back() : out;
}

template <typename T>
Mat<T> Mlp<T>::backward(const MlpCtx<T>& ctx, const Mat<T>& dy) {
  const size_t layers = weights_.size();
  if (ctx.activations.size() != layers)
    raise(ErrorCode::InvalidArgument, prefix_ + ": backward without matching forward ctx");
  Mat<T> grad = dy;
  size_t relu_idx = ctx.pre.size();
  for (size_t l = layers; l-- > 0;) {
    const Activation act = l + 1 == layers ? spec_.terminal : spec_.hidden;
    if (act == Activation::Relu) {
      const Mat<T>& pre = ctx.pre[--relu_idx];
      for (size_t i = 0; i < grad.v.size(); ++i)
        if (pre.v[i] <= T(0)) grad.v[i] = T(0);  // subgradient 0 at the kink
    } else if (act == Activation::Softmax) {
      const Mat<T>& y = ctx.activations[l];
      Mat<T> dx(grad.rows, grad.cols);
      for (int i = 0; i < grad.rows; ++i)
        softmax_backward_row(y.row(i), grad.row(i), dx.row(i), grad.cols);
      grad = std::move(dx);
    }
    const Mat<T>& input = l == 0 ? *ctx.input : ctx.activations[l - 1];
    mm_tn(input, grad, weights_[l]->grad);
    for (int i = 0; i < grad.rows; ++i) {
      const T* gi = grad.row(i);
      T* bg = biases_[l]->grad.row(0);
      for (int j = 0; j < grad.cols; ++j) bg[j] += gi[j];
    }
    Mat<T> dx(grad.rows, spec_.widths[l]);
    mm_nt(grad, weights_[l]->value, dx);
    grad = std::move(dx);
  }
  return grad;
}

template <typename T>
void softmax_row(const T* x, T* y, int n) {
  T mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(static_cast<double>(x[i] - mx));
    y[i] = static_cast<T>(e);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) y[i] = static_cast<T>(static_cast<double>(y[i]) * inv);
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& x) {
  std::vector<T> y(x.size());
  softmax_row(x.data(), y.data(), static_cast<int>(x.size()));
  return y;
}

template <typename T>
void softmax_backward_row(const T* y, const T* dy, T* dx, int n) {
  double dot = 0;
  for (int i = 0; i < n; ++i) dot += static_cast<double>(dy[i]) * y[i];
  for (int i = 0; i < n; ++i)
    dx[i] = static_cast<T>((static_cast<double>(dy[i]) - dot) * y[i]);
}

template <typename T>
KnnResult knn(const Mat<T>& points, int k, bool exclude_self) {
  const int n = points.rows;
  if (k < 1) raise(ErrorCode::InvalidArgument, "knn: k must be >= 1");
  if (n < 2 && exclude_self)
    raise(ErrorCode::DegenerateInput, "knn: need at least 2 points");
  const int candidates = exclude_self ? n - 1 : n;
  KnnResult res;
  res.k = std::min(k, candidates);
  res.idx.resize(static_cast<size_t>(n) * res.k);

  std::vector<std::pair<T, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    const T* pi = points.row(i);
    for (int j = 0; j < n; ++j) {
      const T* pj = points.row(j);
      T d = 0;
      for (int c = 0; c < points.cols; ++c) {
        const T diff = pi[c] - pj[c];
        d += diff * diff;
      }
      dist[j] = {d, j};
    }
    if (exclude_self) dist[i].first = std::numeric_limits<T>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + res.k, dist.end());
    int* out = res.idx.data() + static_cast<size_t>(i) * res.k;
    for (int j = 0; j < res.k; ++j) out[j] = dist[j].second;
  }
  return res;
}

double CosineSchedule::lr_at(int epoch) const {
  const double phase = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * phase));
}

template <typename T>
void SgdCosine<T>::step(ParamStore<T>& params, int epoch) {
  if (!params.grads_populated())
    raise(ErrorCode::InvalidArgument, "optimizer step before any backward pass");
  const T lr = static_cast<T>(schedule_.lr_at(epoch));
  for (auto& p : params) {
    for (size_t i = 0; i < p.value.size(); ++i) p.value.v[i] -= lr * p.grad.v[i];
  }
  params.zero_grads();
}

template <typename T>
double Adam<T>::lr_at(int epoch) const {
  return lr_base_ * std::pow(0.5, epoch / halve_every_);
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params, int epoch) {
  if (!params.grads_populated())
    raise(ErrorCode::InvalidArgument, "optimizer step before any backward pass");
  const double lr = lr_at(epoch);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& p : params) {
    auto& [m, v] = moments_[p.name];
    if (m.empty()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad.v[i]);
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value.v[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
  params.zero_grads();
}

double grad_check(ParamStore<double>& params, const std::function<double()>& loss, double eps,
                  std::uint64_t seed, int coords_per_param) {
  params.zero_grads();
  const double base = loss();
  std::vector<Mat<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad);

  params.zero_grads();
  const double repeat = loss();
  if (repeat != base)
    raise(ErrorCode::Determinism, "grad_check: closure is not deterministic (" +
                                      std::to_string(base) + " vs " + std::to_string(repeat) +
                                      ")");

  Rng rng(mix_seed(seed, 0x67636865ULL));
  double max_rel = 0.0;
  size_t param_idx = 0;
  for (auto& p : params) {
    const size_t n = p.value.size();
    std::vector<size_t> coords(n);
    std::iota(coords.begin(), coords.end(), size_t{0});
    if (static_cast<int>(n) > coords_per_param) {
      for (size_t i = n - 1; i > 0; --i) std::swap(coords[i], coords[rng.uniform_int(i + 1)]);
      coords.resize(coords_per_param);
    }
    for (size_t c : coords) {
      const double saved = p.value.v[c];
      p.value.v[c] = saved + eps;
      params.zero_grads();
      const double up = loss();
      p.value.v[c] = saved - eps;
      params.zero_grads();
      const double down = loss();
      p.value.v[c] = saved;
      const double fd = (up - down) / (2.0 * eps);
      // relu and max-pool make the loss only piecewise smooth. Kink-adjacent
      // coordinates are excluded by convention: either the one-sided slopes
      // disagree outright, or one of them matches the analytic value far
      // better than the central difference (the stencil straddles the kink).
      const double forward = (up - base) / eps;
      const double backward = (base - down) / eps;
      if (std::abs(forward - backward) > 1e-2 * std::max(std::abs(fd), 1e-2)) continue;
      const double an = analytic[param_idx].v[c];
      const auto rel_to = [&](double est) {
        return std::abs(est - an) / std::max({std::abs(est), std::abs(an), 1e-8});
      };
      const double rel = rel_to(fd);
      if (std::min(rel_to(forward), rel_to(backward)) * 8.0 < rel) continue;
      max_rel = std::max(max_rel, rel);
    }
    ++param_idx;
  }
  // Leave the analytic gradients in place for callers that inspect them.
  params.zero_grads();
  loss();
  return max_rel;
}

namespace {

void put_f32_le(std::string& buf, float x) {
  const auto bits = std::bit_cast<std::uint32_t>(x);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

}  // namespace

template <typename T>
void save_weights(const ParamStore<T>& params, const std::string& bin_path,
                  const std::string& index_path) {
  std::string blob;
  blob.reserve(params.total_count() * 4);
  json index;
  index["params"] = json::array();
  size_t offset = 0;
  for (const auto& p : params) {
    for (const T x : p.value.v) put_f32_le(blob, static_cast<float>(x));
    index["params"].push_back(
        {{"name", p.name}, {"offset", offset}, {"shape", {p.value.rows, p.value.cols}}});
    offset += p.count();
  }
  index["total_elements"] = offset;

  std::ofstream fb(bin_path, std::ios::binary | std::ios::trunc);
  if (!fb) raise(ErrorCode::Io, "cannot open for writing: " + bin_path);
  fb.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream fj(index_path, std::ios::trunc);
  if (!fj) raise(ErrorCode::Io, "cannot open for writing: " + index_path);
  fj << index.dump(2) << "\n";
  if (!fb || !fj) raise(ErrorCode::Io, "weight write failed: " + bin_path);
}

template <typename T>
void load_weights(ParamStore<T>& params, const std::string& bin_path,
                  const std::string& index_path) {
  std::ifstream fb(bin_path, std::ios::binary);
  if (!fb) raise(ErrorCode::Io, "cannot open: " + bin_path);
  std::string blob((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  std::ifstream fj(index_path);
  if (!fj) raise(ErrorCode::Io, "cannot open: " + index_path);
  json index;
  try {
    fj >> index;
  } catch (const json::exception& ex) {
    raise(ErrorCode::Format, index_path + ": " + ex.what());
  }

  size_t matched = 0;
  for (const auto& entry : index.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    Param<T>* p = params.find(name);
    if (!p) raise(ErrorCode::Format, "weight index names unknown parameter: " + name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != p->value.rows || shape[1] != p->value.cols)
      raise(ErrorCode::Shape, "shape mismatch for parameter: " + name);
    const size_t offset = entry.at("offset").get<size_t>();
    if ((offset + p->count()) * 4 > blob.size())
      raise(ErrorCode::Format, bin_path + ": blob too small for parameter " + name);
    const auto* src = reinterpret_cast<const unsigned char*>(blob.data()) + offset * 4;
    for (size_t i = 0; i < p->count(); ++i)
      p->value.v[i] = static_cast<T>(get_f32_le(src + i * 4));
    ++matched;
  }
  if (matched != params.size())
    raise(ErrorCode::Format, "weight index covers " + std::to_string(matched) + " of " +
                                 std::to_string(params.size()) + " parameters");
}

template class Mlp<float>;
template class Mlp<double>;
template class SgdCosine<float>;
template class SgdCosine<double>;
template class Adam<float>;
template class Adam<double>;
template void softmax_row<float>(const float*, float*, int);
template void softmax_row<double>(const double*, double*, int);
template std::vector<float> softmax<float>(const std::vector<float>&);
template std::vector<double> softmax<double>(const std::vector<double>&);
template void softmax_backward_row<float>(const float*, const float*, float*, int);
template void softmax_backward_row<double>(const double*, const double*, double*, int);
template KnnResult knn<float>(const Mat<float>&, int, bool);
template KnnResult knn<double>(const Mat<double>&, int, bool);
template void save_weights<float>(const ParamStore<float>&, const std::string&,
                                  const std::string&);
template void save_weights<double>(const ParamStore<double>&, const std::string&,
                                   const std::string&);
template void load_weights<float>(ParamStore<float>&, const std::string&, const std::string&);
template void load_weights<double>(ParamStore<double>&, const std::string&, const std::string&);

}  // namespace evg::diff

#include "evgraph/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "evgraph/error.hpp"

namespace evg {

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       int n_feat) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::Io, "cannot open for writing: " + path);
  f << "epoch,split,loss_total,loss_task,loss_inf";
  for (int i = 1; i <= n_feat; ++i) f << ",loss_feat_" << i;
  f << ",accuracy,lr,seed\n";
  for (const auto& r : rows) {
    f << r.epoch << ',' << r.split << ',' << format_double(r.loss_total) << ','
      << format_double(r.loss_task) << ',' << format_double(r.loss_inf);
    for (int i = 0; i < n_feat; ++i)
      f << ',' << format_double(i < static_cast<int>(r.loss_feat.size()) ? r.loss_feat[i] : 0.0);
    f << ',' << format_double(r.accuracy) << ',' << format_double(r.lr) << ',' << r.seed
      << "\n";
  }
  if (!f) raise(ErrorCode::Io, "write failed: " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::Io, "cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) raise(ErrorCode::Format, path + ": empty metrics file");
  int n_feat = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ','))
      if (col.rfind("loss_feat_", 0) == 0) ++n_feat;
  }
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string col;
    MetricsRow r;
    std::getline(ss, col, ',');
    r.epoch = std::stoi(col);
    std::getline(ss, r.split, ',');
    std::getline(ss, col, ',');
    r.loss_total = std::stod(col);
    std::getline(ss, col, ',');
    r.loss_task = std::stod(col);
    std::getline(ss, col, ',');
    r.loss_inf = std::stod(col);
    for (int i = 0; i < n_feat; ++i) {
      std::getline(ss, col, ',');
      r.loss_feat.push_back(std::stod(col));
    }
    std::getline(ss, col, ',');
    r.accuracy = std::stod(col);
    std::getline(ss, col, ',');
    r.lr = std::stod(col);
    std::getline(ss, col, ',');
    r.seed = std::stoull(col);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace evg

namespace evg::distill {

DistillVariant distill_variant_from_string(const std::string& name) {
  if (name == "A") return DistillVariant::A;
  if (name == "B") return DistillVariant::B;
  if (name == "C") return DistillVariant::C;
  if (name == "D") return DistillVariant::D;
  raise(ErrorCode::InvalidArgument, "unknown distillation variant: " + name);
}

const char* distill_variant_name(DistillVariant v) {
  switch (v) {
    case DistillVariant::A: return "A";
    case DistillVariant::B: return "B";
    case DistillVariant::C: return "C";
    case DistillVariant::D: return "D";
  }
  return "?";
}

void DistillConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    raise(ErrorCode::Config, "distill: lambda must lie in [0, 1]");
  if (kd_temperature <= 0.0) raise(ErrorCode::Config, "distill: kd_temperature must be > 0");
  if (ntxent_temperature <= 0.0)
    raise(ErrorCode::Config, "distill: ntxent_temperature must be > 0");
  if (taps < 0) raise(ErrorCode::Config, "distill: taps must be >= 0");
}

template <typename T>
ScalarLoss<T> cross_entropy(const std::vector<T>& logits, int label) {
  const int n = static_cast<int>(logits.size());
  if (label < 0 || label >= n)
    raise(ErrorCode::InvalidArgument,
          "cross_entropy: label " + std::to_string(label) + " out of range");
  // loss = log(sum_k exp(x_k - x_label)), exact in the saturated regime
  double sum = 0;
  const double ref = static_cast<double>(logits[label]);
  for (int k = 0; k < n; ++k)
    if (k != label) sum += std::exp(static_cast<double>(logits[k]) - ref);
  ScalarLoss<T> out;
  out.value = std::log1p(sum);
  out.grad.resize(n);
  // softmax - onehot
  double mx = ref;
  for (const T x : logits) mx = std::max(mx, static_cast<double>(x));
  double z = 0;
  for (const T x : logits) z += std::exp(static_cast<double>(x) - mx);
  for (int k = 0; k < n; ++k) {
    const double q = std::exp(static_cast<double>(logits[k]) - mx) / z;
    out.grad[k] = static_cast<T>(q - (k == label ? 1.0 : 0.0));
  }
  return out;
}

template <typename T>
ScalarLoss<T> kd_loss(const std::vector<T>& student, const std::vector<T>& teacher,
                      double temperature) {
  if (student.size() != teacher.size())
    raise(ErrorCode::Shape, "kd_loss: logit lengths differ");
  if (temperature <= 0) raise(ErrorCode::InvalidArgument, "kd_loss: temperature must be > 0");
  const int n = static_cast<int>(student.size());
  std::vector<double> p(n), q(n);
  auto softened = [&](const std::vector<T>& v, std::vector<double>& out) {
    double mx = -1e300;
    for (const T x : v) mx = std::max(mx, static_cast<double>(x) / temperature);
    double z = 0;
    for (int k = 0; k < n; ++k) {
      out[k] = std::exp(static_cast<double>(v[k]) / temperature - mx);
      z += out[k];
    }
    for (auto& x : out) x /= z;
  };
  softened(teacher, p);
  softened(student, q);
  ScalarLoss<T> out;
  double kl = 0;
  for (int k = 0; k < n; ++k)
    if (p[k] > 0) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
  out.value = temperature * temperature * std::max(0.0, kl);
  out.grad.resize(n);
  for (int k = 0; k < n; ++k) out.grad[k] = static_cast<T>(temperature * (q[k] - p[k]));
  return out;
}

template <typename T>
ScalarLoss<T> l1_inference_loss(const std::vector<T>& student, const std::vector<T>& teacher) {
  if (student.size() != teacher.size())
    raise(ErrorCode::Shape, "l1_inference_loss: shapes differ");
  const int n = static_cast<int>(student.size());
  ScalarLoss<T> out;
  out.grad.resize(n);
  double acc = 0;
  for (int k = 0; k < n; ++k) {
    const double d = static_cast<double>(student[k]) - static_cast<double>(teacher[k]);
    acc += std::abs(d);
    out.grad[k] = static_cast<T>((d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n);
  }
  out.value = acc / n;
  return out;
}

template <typename T>
BatchLoss<T> nt_xent(const Mat<T>& student, const Mat<T>& teacher, double tau) {
  if (student.rows < 2) raise(ErrorCode::DegenerateInput, "nt_xent: batch must be >= 2");
  if (!student.same_shape(teacher)) raise(ErrorCode::Shape, "nt_xent: embedding shapes differ");
  if (tau <= 0) raise(ErrorCode::InvalidArgument, "nt_xent: tau must be > 0");
  const int b = student.rows, d = student.cols, m = 2 * b;

  // L2-normalized stack [student; teacher].
  Mat<double> e(m, d);
  std::vector<double> norms(m);
  for (int i = 0; i < m; ++i) {
    const bool is_student = i < b;
    const T* src = is_student ? student.row(i) : teacher.row(i - b);
    double nrm = 0;
    for (int c = 0; c < d; ++c) nrm += static_cast<double>(src[c]) * src[c];
    nrm = std::sqrt(nrm);
    if (!(nrm > 1e-300))
      raise(ErrorCode::Numeric, "nt_xent: zero-norm embedding at row " + std::to_string(i));
    norms[i] = nrm;
    for (int c = 0; c < d; ++c) e.at(i, c) = static_cast<double>(src[c]) / nrm;
  }

  Mat<double> sim(m, m);
  mm_nt(e, e, sim);

  // dsim(a,k) = (softmax_a(k) - [k = positive(a)]) / (tau * m)
  Mat<double> dsim(m, m);
  double loss = 0;
  for (int a = 0; a < m; ++a) {
    const int pos = (a + b) % m;
    double mx = -1e300;
    for (int k = 0; k < m; ++k)
      if (k != a) mx = std::max(mx, sim.at(a, k) / tau);
    double z = 0;
    for (int k = 0; k < m; ++k)
      if (k != a) z += std::exp(sim.at(a, k) / tau - mx);
    loss += -(sim.at(a, pos) / tau - mx - std::log(z));
    for (int k = 0; k < m; ++k) {
      if (k == a) continue;
      const double p = std::exp(sim.at(a, k) / tau - mx) / z;
      dsim.at(a, k) = (p - (k == pos ? 1.0 : 0.0)) / (tau * m);
    }
  }
  loss /= m;

  // de_c = sum_a dsim(a,c) e_a + sum_k dsim(c,k) e_k  (student rows only)
  BatchLoss<T> out;
  out.value = loss;
  out.grad = Mat<T>(b, d);
  for (int i = 0; i < b; ++i) {
    std::vector<double> de(d, 0.0);
    for (int a = 0; a < m; ++a) {
      const double w1 = dsim.at(a, i);
      const double w2 = dsim.at(i, a);
      if (w1 == 0.0 && w2 == 0.0) continue;
      const double* ea = e.row(a);
      for (int c = 0; c < d; ++c) de[c] += w1 * ea[c] + w2 * ea[c];
    }
    // through the normalization: dx = (de - (de . e) e) / norm
    const double* ei = e.row(i);
    double dot = 0;
    for (int c = 0; c < d; ++c) dot += de[c] * ei[c];
    for (int c = 0; c < d; ++c)
      out.grad.at(i, c) = static_cast<T>((de[c] - dot * ei[c]) / norms[i]);
  }
  return out;
}

LossBundle crd_total_loss(double task, double inf, const std::vector<double>& feat,
                          double lambda) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      raise(ErrorCode::Numeric, std::string("crd_total_loss: non-finite component ") + name);
  };
  check(task, "task");
  check(inf, "inf");
  for (size_t i = 0; i < feat.size(); ++i)
    check(feat[i], ("feat_" + std::to_string(i + 1)).c_str());
  LossBundle b;
  b.task = task;
  b.inf = inf;
  b.feat = feat;
  b.total = lambda * task + (1.0 - lambda) * inf;
  for (double f : feat) b.total += f;
  return b;
}

namespace {

template <typename T>
int argmax(const std::vector<T>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

template <typename T>
double evaluate_student(const edgcn::Edgcn<T>& student, const std::vector<GraphSample>& samples,
                        std::vector<double>* per_class) {
  if (samples.empty()) raise(ErrorCode::DegenerateInput, "evaluate: no samples");
  std::vector<int> hits(student.config().num_classes, 0), totals(student.config().num_classes, 0);
  int correct = 0;
  for (const auto& s : samples) {
    const auto out = student.forward(*s.graph);
    const int pred = argmax(out.logits);
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
TrainResult train_student(edgcn::Edgcn<T>& student, const teacher::Teacher<T>* frozen_teacher,
                          const std::vector<GraphSample>& train,
                          const std::vector<GraphSample>& test, const DistillConfig& cfg,
                          const StudentTrainSettings& settings) {
  cfg.validate();
  if (train.size() < 2 || test.empty())
    raise(ErrorCode::DegenerateInput, "train_student: needs >= 2 train and >= 1 test samples");
  const bool distill_on = cfg.enabled;
  if (distill_on && !frozen_teacher)
    raise(ErrorCode::Config, "train_student: distillation enabled but no teacher given");
  const int num_classes = student.config().num_classes;
  const int n_layers = static_cast<int>(student.config().layers.size());
  int n_taps = 0;
  if (distill_on) {
    if (frozen_teacher->config().num_classes != num_classes)
      raise(ErrorCode::Config, "train_student: teacher/student class counts differ");
    n_taps = std::min({cfg.taps, n_layers, frozen_teacher->config().taps});
    if (cfg.taps > n_taps)
      raise(ErrorCode::Config, "train_student: config asks for more taps than available");
    if (cfg.taps > 0 && settings.batch_size < 2)
      raise(ErrorCode::Config, "train_student: NT-Xent needs batch size >= 2");
  }

  // Frozen teacher: its per-sample outputs are constants, compute them once.
  struct TeacherEval {
    std::vector<std::vector<T>> taps;  // deepest n_taps stage features
    std::vector<T> logits;
  };
  std::vector<TeacherEval> teacher_train, teacher_test;
  if (distill_on) {
    auto run = [&](const std::vector<GraphSample>& samples, std::vector<TeacherEval>& out) {
      out.reserve(samples.size());
      for (const auto& s : samples) {
        if (!s.grid)
          raise(ErrorCode::Config, "train_student: distillation needs the dense grid view");
        auto t = frozen_teacher->forward(*s.grid);
        TeacherEval ev;
        const int total = static_cast<int>(t.stage_features.size());
        for (int i = total - n_taps; i < total; ++i)
          ev.taps.push_back(std::move(t.stage_features[i]));
        ev.logits = std::move(t.final_logits);
        out.push_back(std::move(ev));
      }
    };
    run(train, teacher_train);
    run(test, teacher_test);
  }

  // Auxiliary learnables: per-tap adapt projections (and tap heads under
  // variant B). They train with the student and are discarded afterwards.
  diff::ParamStore<T> aux;
  std::vector<diff::Mlp<T>> adapt;
  std::vector<diff::Mlp<T>> tap_heads;
  {
    Rng rng(mix_seed(settings.seed, 0x61647074ULL));
    for (int i = 0; i < n_taps; ++i) {
      const int student_w = student.tap_width(n_layers - n_taps + i);
      const int teacher_w = frozen_teacher ? frozen_teacher->tap_width(
                                                 frozen_teacher->config().taps - n_taps + i)
                                           : 0;
      if (!distill_on) break;
      adapt.emplace_back(aux, "adapt" + std::to_string(i + 1),
                         diff::MlpSpec{{student_w, teacher_w}, diff::Activation::Relu,
                                       diff::Activation::None},
                         rng);
      if (cfg.variant == DistillVariant::B)
        tap_heads.emplace_back(aux, "tap_head" + std::to_string(i + 1),
                               diff::MlpSpec{{student_w, num_classes}, diff::Activation::Relu,
                                             diff::Activation::None},
                               rng);
    }
  }

  diff::CosineSchedule schedule{settings.sgd.lr_max, settings.sgd.lr_min, settings.epochs};
  diff::SgdCosine<T> opt(schedule);

  TrainResult result;
  auto best = diff::snapshot_params(student.params());
  double best_acc = -1.0;
  int best_epoch = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const int tap_layer0 = n_layers - n_taps;

  // One pass over a sample batch; fills the loss bundle and, when training,
  // accumulates gradients.
  auto run_batch = [&](const std::vector<size_t>& batch, const std::vector<GraphSample>& data,
                       const std::vector<TeacherEval>& teval, bool learn, int& correct)
      -> LossBundle {
    const int bsz = static_cast<int>(batch.size());
    std::vector<edgcn::EdgcnCtx<T>> ctxs(learn ? bsz : 0);
    std::vector<edgcn::EdgcnOutputs<T>> outs(bsz);
    for (int i = 0; i < bsz; ++i)
      outs[i] = student.forward(*data[batch[i]].graph, learn ? &ctxs[i] : nullptr);

    double task = 0, inf = 0;
    std::vector<ScalarLoss<T>> ce(bsz), kd(bsz);
    for (int i = 0; i < bsz; ++i) {
      const int label = data[batch[i]].label;
      ce[i] = cross_entropy(outs[i].logits, label);
      task += ce[i].value;
      if (argmax(outs[i].logits) == label) ++correct;
      if (distill_on) {
        kd[i] = kd_loss(outs[i].logits, teval[batch[i]].logits, cfg.kd_temperature);
        inf += kd[i].value;
      }
    }
    task /= bsz;
    inf /= bsz;

    std::vector<double> feat(n_taps, 0.0);
    std::vector<std::vector<Mat<T>>> dpooled;  // per sample, per layer
    if (learn)
      dpooled.assign(bsz, std::vector<Mat<T>>(n_layers));

    if (distill_on && n_taps > 0 && bsz >= 2) {
      for (int tpi = 0; tpi < n_taps; ++tpi) {
        const int layer = tap_layer0 + tpi;
        const int sw = student.tap_width(layer);
        Mat<T> pooled(bsz, sw);
        for (int i = 0; i < bsz; ++i)
          std::copy(outs[i].pooled[layer].begin(), outs[i].pooled[layer].end(), pooled.row(i));
        diff::MlpCtx<T> adapt_ctx;
        Mat<T> adapted = adapt[tpi].forward(pooled, &adapt_ctx);
        const int tw = adapted.cols;
        Mat<T> teacher_taps(bsz, tw);
        for (int i = 0; i < bsz; ++i)
          std::copy(teval[batch[i]].taps[tpi].begin(), teval[batch[i]].taps[tpi].end(),
                    teacher_taps.row(i));

        Mat<T> dadapted(bsz, tw);
        if (cfg.variant == DistillVariant::D) {
          for (int i = 0; i < bsz; ++i) {
            std::vector<T> srow(adapted.row(i), adapted.row(i) + tw);
            std::vector<T> trow(teacher_taps.row(i), teacher_taps.row(i) + tw);
            auto l1 = l1_inference_loss(srow, trow);
            feat[tpi] += l1.value / bsz;
            for (int c = 0; c < tw; ++c)
              dadapted.at(i, c) = static_cast<T>(static_cast<double>(l1.grad[c]) / bsz);
          }
        } else {
          auto ntx = nt_xent(adapted, teacher_taps, cfg.ntxent_temperature);
          feat[tpi] += ntx.value;
          dadapted = std::move(ntx.grad);
        }

        Mat<T> dpool_batch(bsz, sw);
        if (learn) dpool_batch = adapt[tpi].backward(adapt_ctx, dadapted);

        if (cfg.variant == DistillVariant::B) {
          diff::MlpCtx<T> head_ctx;
          Mat<T> tap_logits = tap_heads[tpi].forward(pooled, &head_ctx);
          Mat<T> dtap_logits(bsz, num_classes);
          for (int i = 0; i < bsz; ++i) {
            std::vector<T> row(tap_logits.row(i), tap_logits.row(i) + num_classes);
            auto tap_ce = cross_entropy(row, data[batch[i]].label);
            feat[tpi] += tap_ce.value / bsz;
            for (int c = 0; c < num_classes; ++c)
              dtap_logits.at(i, c) = static_cast<T>(tap_ce.grad[c] / static_cast<T>(bsz));
          }
          if (learn) {
            Mat<T> dpool_head = tap_heads[tpi].backward(head_ctx, dtap_logits);
            for (size_t i = 0; i < dpool_batch.v.size(); ++i)
              dpool_batch.v[i] += dpool_head.v[i];
          }
        }

        if (learn)
          for (int i = 0; i < bsz; ++i) {
            Mat<T> row(1, sw);
            std::copy(dpool_batch.row(i), dpool_batch.row(i) + sw, row.row(0));
            dpooled[i][layer] = std::move(row);
          }
      }
    }

    LossBundle bundle;
    if (distill_on) {
      bundle = crd_total_loss(task, inf, feat, cfg.lambda);
    } else {
      bundle.task = task;
      bundle.total = task;
      bundle.feat.assign(n_taps, 0.0);
    }

    if (learn) {
      for (int i = 0; i < bsz; ++i) {
        std::vector<T> dlogits(num_classes, T(0));
        const double task_w = (distill_on ? cfg.lambda : 1.0) / bsz;
        for (int c = 0; c < num_classes; ++c)
          dlogits[c] = static_cast<T>(task_w * static_cast<double>(ce[i].grad[c]));
        if (distill_on) {
          const double inf_w = (1.0 - cfg.lambda) / bsz;
          for (int c = 0; c < num_classes; ++c)
            dlogits[c] += static_cast<T>(inf_w * static_cast<double>(kd[i].grad[c]));
        }
        student.backward(ctxs[i], dlogits, dpooled.empty() ? nullptr : &dpooled[i]);
      }
      if (aux.size() > 0) aux.mark_grads();
    }
    return bundle;
  };

  Rng shuffle_rng(mix_seed(settings.seed, 0x73687566ULL));
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double sum_total = 0, sum_task = 0, sum_inf = 0;
    std::vector<double> sum_feat(n_taps, 0.0);
    int n_batches = 0, correct = 0, seen = 0;
    for (size_t start = 0; start < order.size(); start += settings.batch_size) {
      std::vector<size_t> batch(order.begin() + start,
                                order.begin() + std::min(order.size(),
                                                         start + settings.batch_size));
      if (batch.size() < 2 && order.size() > 1) continue;  // NT-Xent needs pairs
      LossBundle b = run_batch(batch, train, teacher_train, true, correct);
      if (!std::isfinite(b.total))
        raise(ErrorCode::Numeric,
              "train_student: loss diverged at epoch " + std::to_string(epoch));
      opt.step(student.params(), epoch);
      if (aux.size() > 0 && aux.grads_populated()) opt.step(aux, epoch);
      sum_total += b.total;
      sum_task += b.task;
      sum_inf += b.inf;
      for (int i = 0; i < n_taps; ++i) sum_feat[i] += b.feat[i];
      ++n_batches;
      seen += static_cast<int>(batch.size());
    }

    MetricsRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss_total = sum_total / n_batches;
    train_row.loss_task = sum_task / n_batches;
    train_row.loss_inf = sum_inf / n_batches;
    for (int i = 0; i < n_taps; ++i) train_row.loss_feat.push_back(sum_feat[i] / n_batches);
    train_row.accuracy = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
    train_row.lr = schedule.lr_at(epoch);
    train_row.seed = settings.seed;
    result.metrics.push_back(train_row);

    // Test pass: same decomposition, no gradients.
    double t_total = 0, t_task = 0, t_inf = 0;
    std::vector<double> t_feat(n_taps, 0.0);
    int t_batches = 0, t_correct = 0, t_seen = 0;
    for (size_t start = 0; start < test.size(); start += settings.batch_size) {
      std::vector<size_t> batch;
      for (size_t i = start; i < std::min(test.size(), start + settings.batch_size); ++i)
        batch.push_back(i);
      if (batch.size() < 2 && test.size() > 1) continue;
      LossBundle b = run_batch(batch, test, teacher_test, false, t_correct);
      t_total += b.total;
      t_task += b.task;
      t_inf += b.inf;
      for (int i = 0; i < n_taps; ++i) t_feat[i] += b.feat[i];
      ++t_batches;
      t_seen += static_cast<int>(batch.size());
    }
    MetricsRow test_row;
    test_row.epoch = epoch;
    test_row.split = "test";
    test_row.loss_total = t_total / t_batches;
    test_row.loss_task = t_task / t_batches;
    test_row.loss_inf = t_inf / t_batches;
    for (int i = 0; i < n_taps; ++i) test_row.loss_feat.push_back(t_feat[i] / t_batches);
    test_row.accuracy = t_seen > 0 ? static_cast<double>(t_correct) / t_seen : 0.0;
    test_row.lr = schedule.lr_at(epoch);
    test_row.seed = settings.seed;
    result.metrics.push_back(test_row);

    if (test_row.accuracy > best_acc) {
      best_acc = test_row.accuracy;
      best_epoch = epoch;
      best = diff::snapshot_params(student.params());
    }
    result.final_accuracy = test_row.accuracy;
  }

  diff::restore_params(student.params(), best);
  result.best_epoch = best_epoch;
  result.best_accuracy = best_acc;
  return result;
}

template ScalarLoss<float> cross_entropy<float>(const std::vector<float>&, int);
template ScalarLoss<double> cross_entropy<double>(const std::vector<double>&, int);
template ScalarLoss<float> kd_loss<float>(const std::vector<float>&, const std::vector<float>&,
                                          double);
template ScalarLoss<double> kd_loss<double>(const std::vector<double>&,
                                            const std::vector<double>&, double);
template ScalarLoss<float> l1_inference_loss<float>(const std::vector<float>&,
                                                    const std::vector<float>&);
template ScalarLoss<double> l1_inference_loss<double>(const std::vector<double>&,
                                                      const std::vector<double>&);
template BatchLoss<float> nt_xent<float>(const Mat<float>&, const Mat<float>&, double);
template BatchLoss<double> nt_xent<double>(const Mat<double>&, const Mat<double>&, double);
template TrainResult train_student<float>(edgcn::Edgcn<float>&, const teacher::Teacher<float>*,
                                          const std::vector<GraphSample>&,
                                          const std::vector<GraphSample>&, const DistillConfig&,
                                          const StudentTrainSettings&);
template TrainResult train_student<double>(edgcn::Edgcn<double>&,
                                           const teacher::Teacher<double>*,
                                           const std::vector<GraphSample>&,
                                           const std::vector<GraphSample>&, const DistillConfig&,
                                           const StudentTrainSettings&);
template double evaluate_student<float>(const edgcn::Edgcn<float>&,
                                        const std::vector<GraphSample>&, std::vector<double>*);
template double evaluate_student<double>(const edgcn::Edgcn<double>&,
                                         const std::vector<GraphSample>&, std::vector<double>*);

}  // namespace evg::distill

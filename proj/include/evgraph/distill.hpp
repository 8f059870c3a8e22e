#pragma once

#include <string>
#include <vector>

#include "evgraph/edgcn.hpp"
#include "evgraph/teacher.hpp"
#include "evgraph/training.hpp"

namespace evg::distill {

template <typename T>
struct ScalarLoss {
  double value = 0;
  std::vector<T> grad;
};

// -log softmax(logits)[label]
template <typename T>
ScalarLoss<T> cross_entropy(const std::vector<T>& logits, int label);

// T^2 * KL(softmax(teacher/T) || softmax(student/T)); the teacher side is a
// constant, the gradient targets the student logits.
template <typename T>
ScalarLoss<T> kd_loss(const std::vector<T>& student, const std::vector<T>& teacher,
                      double temperature);

// Mean absolute difference; teacher constant.
template <typename T>
ScalarLoss<T> l1_inference_loss(const std::vector<T>& student, const std::vector<T>& teacher);

template <typename T>
struct BatchLoss {
  double value = 0;
  Mat<T> grad;  // w.r.t. the student embeddings
};

// NT-Xent over the 2B-vector batch formed by both networks' embeddings.
// Rows are L2-normalized internally; each anchor's positive is its
// cross-network counterpart, every other vector is a negative. Gradients flow
// to the student side only.
template <typename T>
BatchLoss<T> nt_xent(const Mat<T>& student, const Mat<T>& teacher, double tau);

// Feature-level wiring choices; C is the default. D swaps the
// contrastive loss for per-tap L1.
enum class DistillVariant { A, B, C, D };

DistillVariant distill_variant_from_string(const std::string& name);
const char* distill_variant_name(DistillVariant v);

struct DistillConfig {
  bool enabled = true;
  DistillVariant variant = DistillVariant::C;
  double lambda = 0.5;
  double kd_temperature = 4.0;
  double ntxent_temperature = 0.5;
  int taps = 3;  // N_t feature taps, deepest-aligned on both sides

  void validate() const;
};

struct LossBundle {
  double task = 0;
  double inf = 0;
  std::vector<double> feat;
  double total = 0;
};

// total = lambda*task + (1-lambda)*inf + sum(feat)
LossBundle crd_total_loss(double task, double inf, const std::vector<double>& feat,
                          double lambda);

using evg::TrainResult;

struct StudentTrainSettings {
  int epochs = 30;
  int batch_size = 32;
  SgdSettings sgd;
  std::uint64_t seed = 1;
};

// Two-phase regime: the teacher is pretrained and stays frozen here. Passing
// a null teacher with distillation enabled is a configuration error; with
// distillation disabled this is plain task training. The model keeps its
// best-by-test-accuracy weights on return.
template <typename T>
TrainResult train_student(edgcn::Edgcn<T>& student, const teacher::Teacher<T>* frozen_teacher,
                          const std::vector<GraphSample>& train,
                          const std::vector<GraphSample>& test, const DistillConfig& cfg,
                          const StudentTrainSettings& settings);

template <typename T>
double evaluate_student(const edgcn::Edgcn<T>& student, const std::vector<GraphSample>& samples,
                        std::vector<double>* per_class = nullptr);

}  // namespace evg::distill

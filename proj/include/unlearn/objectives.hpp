#pragma once

#include <functional>

#include "unlearn/model.hpp"

namespace unlearn {

enum class LossKind { GA, GD, NPO, SimNPO };

struct ObjectiveParams {
    double beta = 1.0;          // sharpness of the bounded transforms
    double gamma_margin = 0.0;  // SimNPO margin (distinct from the combiner weight gamma)

    void validate() const;
};

struct LossReport {
    double loss = 0.0;           // nats
    ModuleGradients grads;       // analytic gradient w.r.t. every module
    double mean_log_prob = 0.0;  // nats per sequence, diagnostic
};

// log(1 / (1 + e^-z)) without overflow for |z| <= 700.
double log_sigmoid_stable(double z);
// log(1 + e^z), same stability range.
double softplus_stable(double z);

// Sum over prediction positions of log p(x_t | previous `context` tokens).
double log_prob(const TinyLM& model, const TokenSequence& x);

// L_GA = E[log p]  (minimizing drives forget-set likelihood down via descent)
LossReport loss_ga(const Batch& batch, const TinyLM& model);
// L_GD = E[-log p]
LossReport loss_gd(const Batch& batch, const TinyLM& model);
// L_NPO = -(2/beta) E[log sigmoid(-beta log(p / p_ref))]
LossReport loss_npo(const Batch& batch, const TinyLM& model, const TinyLM& ref_model,
                    const ObjectiveParams& params);
// L_SimNPO = -(2/beta) E[log sigmoid(-(beta/|x|) log p - gamma_margin)],
// |x| counted as prediction positions (length - 1).
LossReport loss_simnpo(const Batch& batch, const TinyLM& model, const ObjectiveParams& params);

// Dispatch over the four objectives. NPO requires ref_model, else InputError.
LossReport evaluate_loss(const Batch& batch, const TinyLM& model, LossKind kind,
                         const ObjectiveParams& params, const TinyLM* ref_model = nullptr);
double loss_value(const Batch& batch, const TinyLM& model, LossKind kind,
                  const ObjectiveParams& params, const TinyLM* ref_model = nullptr);
ModuleGradients backward(const TinyLM& model, const Batch& batch, LossKind kind,
                         const ObjectiveParams& params, const TinyLM* ref_model = nullptr);

// Central differences (L(theta + h e_i) - L(theta - h e_i)) / (2h) over an
// arbitrary loss; gradient-check oracle for backward.
ModuleGradients finite_diff_grad(const TinyLM& model,
                                 const std::function<double(const TinyLM&)>& loss, double h);
ModuleGradients finite_diff_grad(const TinyLM& model, const Batch& batch, LossKind kind,
                                 const ObjectiveParams& params, const TinyLM* ref_model, double h);

const char* loss_kind_name(LossKind kind);

}  // namespace unlearn

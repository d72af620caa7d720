#include "unlearn/objectives.hpp"

#include <cmath>

namespace unlearn {

void ObjectiveParams::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("beta must be finite and > 0");
    if (gamma_margin < 0.0 || !std::isfinite(gamma_margin)) {
        throw InputError("gamma_margin must be finite and >= 0");
    }
}

double softplus_stable(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

double log_sigmoid_stable(double z) { return -softplus_stable(-z); }

double log_prob(const TinyLM& model, const TokenSequence& x) {
    return model.forward(x).total_log_prob;
}

namespace {

void require_nonempty(const Batch& batch) {
    if (batch.empty()) throw InputError("empty batch");
}

// All four objectives are of the form mean_x f(u_x) with u_x = log p(x; theta),
// so the gradient is sum_x s_x * d(u_x)/d(theta) with s_x = f'(u_x) / B.
LossReport reduce_batch(const Batch& batch, const TinyLM& model,
                        const std::function<std::pair<double, double>(std::size_t, double)>&
                            term_and_dterm) {
    require_nonempty(batch);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<double> coeffs(batch.size());
    double loss_sum = 0.0;
    double log_prob_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double u = log_prob(model, batch[i]);
        log_prob_sum += u;
        const auto [term, dterm] = term_and_dterm(i, u);
        loss_sum += term;
        coeffs[i] = dterm * inv_b;
    }

    LossReport report;
    report.loss = loss_sum * inv_b;
    report.mean_log_prob = log_prob_sum * inv_b;
    report.grads = model.zero_grads();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        model.accumulate_log_prob_grad(batch[i], coeffs[i], report.grads);
    }
    return report;
}

}  // namespace

LossReport loss_ga(const Batch& batch, const TinyLM& model) {
    return reduce_batch(batch, model, [](std::size_t, double u) {
        return std::pair<double, double>{u, 1.0};
    });
}

LossReport loss_gd(const Batch& batch, const TinyLM& model) {
    return reduce_batch(batch, model, [](std::size_t, double u) {
        return std::pair<double, double>{-u, -1.0};
    });
}

LossReport loss_npo(const Batch& batch, const TinyLM& model, const TinyLM& ref_model,
                    const ObjectiveParams& params) {
    params.validate();
    require_nonempty(batch);
    if (!model.params().aligned_with(ref_model.params())) {
        throw InputError("loss_npo: reference model schema mismatch");
    }
    std::vector<double> ref_log_probs(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ref_log_probs[i] = log_prob(ref_model, batch[i]);  // no gradient through theta_ref
    }
    const double beta = params.beta;
    return reduce_batch(batch, model, [&](std::size_t i, double u) {
        const double delta = u - ref_log_probs[i];
        // -(2/beta) log sigmoid(-beta delta) = (2/beta) softplus(beta delta)
        const double term = (2.0 / beta) * softplus_stable(beta * delta);
        const double dterm = 2.0 / (1.0 + std::exp(-beta * delta));  // 2 sigmoid(beta delta)
        return std::pair<double, double>{term, dterm};
    });
}

LossReport loss_simnpo(const Batch& batch, const TinyLM& model, const ObjectiveParams& params) {
    params.validate();
    require_nonempty(batch);
    const double beta = params.beta;
    const double margin = params.gamma_margin;
    return reduce_batch(batch, model, [&](std::size_t i, double u) {
        const double len = static_cast<double>(batch[i].size()) - 1.0;  // prediction positions
        const double scaled = (beta / len) * u + margin;
        const double term = (2.0 / beta) * softplus_stable(scaled);
        const double dterm = (2.0 / len) / (1.0 + std::exp(-scaled));
        return std::pair<double, double>{term, dterm};
    });
}

LossReport evaluate_loss(const Batch& batch, const TinyLM& model, LossKind kind,
                         const ObjectiveParams& params, const TinyLM* ref_model) {
    switch (kind) {
        case LossKind::GA:
            return loss_ga(batch, model);
        case LossKind::GD:
            return loss_gd(batch, model);
        case LossKind::NPO:
            if (ref_model == nullptr) throw InputError("NPO requires a reference model");
            return loss_npo(batch, model, *ref_model, params);
        case LossKind::SimNPO:
            return loss_simnpo(batch, model, params);
    }
    throw InputError("unknown loss kind");
}

namespace {

double forward_only_loss(const Batch& batch, const TinyLM& model, LossKind kind,
                         const ObjectiveParams& params,
                         const std::vector<double>* ref_log_probs) {
    require_nonempty(batch);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double u = log_prob(model, batch[i]);
        switch (kind) {
            case LossKind::GA:
                loss_sum += u;
                break;
            case LossKind::GD:
                loss_sum += -u;
                break;
            case LossKind::NPO:
                loss_sum += (2.0 / params.beta) *
                            softplus_stable(params.beta * (u - (*ref_log_probs)[i]));
                break;
            case LossKind::SimNPO: {
                const double len = static_cast<double>(batch[i].size()) - 1.0;
                loss_sum += (2.0 / params.beta) *
                            softplus_stable((params.beta / len) * u + params.gamma_margin);
                break;
            }
        }
    }
    return loss_sum / static_cast<double>(batch.size());
}

}  // namespace

double loss_value(const Batch& batch, const TinyLM& model, LossKind kind,
                  const ObjectiveParams& params, const TinyLM* ref_model) {
    params.validate();
    std::vector<double> ref_log_probs;
    if (kind == LossKind::NPO) {
        if (ref_model == nullptr) throw InputError("NPO requires a reference model");
        ref_log_probs.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            ref_log_probs[i] = log_prob(*ref_model, batch[i]);
        }
    }
    return forward_only_loss(batch, model, kind, params,
                             ref_log_probs.empty() ? nullptr : &ref_log_probs);
}

ModuleGradients backward(const TinyLM& model, const Batch& batch, LossKind kind,
                         const ObjectiveParams& params, const TinyLM* ref_model) {
    return evaluate_loss(batch, model, kind, params, ref_model).grads;
}

ModuleGradients finite_diff_grad(const TinyLM& model,
                                 const std::function<double(const TinyLM&)>& loss, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InputError("finite difference step h must be > 0");
    TinyLM work = model.snapshot();
    ModuleGradients grads = model.zero_grads();
    const std::size_t n = model.parameter_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double orig = work.get_coord(i);
        work.set_coord(i, orig + h);
        const double plus = loss(work);
        work.set_coord(i, orig - h);
        const double minus = loss(work);
        work.set_coord(i, orig);
        grads.coord(i) = (plus - minus) / (2.0 * h);
    }
    return grads;
}

ModuleGradients finite_diff_grad(const TinyLM& model, const Batch& batch, LossKind kind,
                                 const ObjectiveParams& params, const TinyLM* ref_model,
                                 double h) {
    return finite_diff_grad(
        model,
        [&](const TinyLM& m) { return loss_value(batch, m, kind, params, ref_model); }, h);
}

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::GA:
            return "ga";
        case LossKind::GD:
            return "gd";
        case LossKind::NPO:
            return "npo";
        case LossKind::SimNPO:
            return "simnpo";
    }
    return "unknown";
}

}  // namespace unlearn

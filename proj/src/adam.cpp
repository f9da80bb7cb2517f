#include "led/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace led {

void AdamDense::step(std::span<float> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::runtime_error("adam: parameter/gradient size mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] = static_cast<float>(params[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
}

void AdamLazyRows::step_rows(MatF& params, std::span<const uint32_t> rows, const MatD& grads) {
    if (params.cols != cols_ || grads.cols != cols_) {
        throw std::runtime_error("adam: row width mismatch");
    }
    if (t_ == 0) throw std::runtime_error("adam: tick() must run before applying updates");
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t r = 0; r < rows.size(); ++r) {
        const uint32_t row = rows[r];
        float* p = params.row(row);
        float* m = m_.row(row);
        float* v = v_.row(row);
        const double* g = grads.row(static_cast<int64_t>(r));
        for (int64_t c = 0; c < cols_; ++c) {
            const double gm = cfg_.beta1 * m[c] + (1.0 - cfg_.beta1) * g[c];
            const double gv = cfg_.beta2 * v[c] + (1.0 - cfg_.beta2) * g[c] * g[c];
            m[c] = static_cast<float>(gm);
            v[c] = static_cast<float>(gv);
            const double mhat = gm / bc1;
            const double vhat = gv / bc2;
            p[c] = static_cast<float>(p[c] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void AdamLazyRows::step_scalars(std::span<float> params, std::span<const uint32_t> idx,
                                std::span<const double> grads) {
    if (cols_ != 1) throw std::runtime_error("adam: step_scalars requires cols == 1");
    if (t_ == 0) throw std::runtime_error("adam: tick() must run before applying updates");
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t r = 0; r < idx.size(); ++r) {
        const uint32_t i = idx[r];
        const double g = grads[r];
        float& m = m_.at(i, 0);
        float& v = v_.at(i, 0);
        const double gm = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        const double gv = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        m = static_cast<float>(gm);
        v = static_cast<float>(gv);
        const double mhat = gm / bc1;
        const double vhat = gv / bc2;
        params[i] = static_cast<float>(params[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
}

}  // namespace led

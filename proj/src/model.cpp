#include "led/model.hpp"

#include <algorithm>
#include <cmath>

#include "led/io.hpp"

namespace led {

void LedModel::materialize_effective() {
    if (mode == TuningMode::Full) return;
    if (base.empty()) throw std::runtime_error("model: cannot materialize without base embeddings");
    const int64_t n = base.rows;
    const int64_t d = base.cols;
    if (projection.rows != d || projection.cols != d) {
        throw std::runtime_error("model: projection shape mismatch");
    }
    effective_cache = MatF(n, d);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const float* src = base.row(i);
        float* dst = effective_cache.row(i);
        for (int64_t r = 0; r < d; ++r) {
            dst[r] = dot_f32(projection.row(r), src, d);
        }
    }
}

const MatF& LedModel::effective() const {
    if (mode == TuningMode::Full) return base;
    if (effective_cache.empty()) {
        throw std::runtime_error("model: effective embeddings not materialized");
    }
    return effective_cache;
}

void LedModel::save(const std::string& path) const {
    const MatF& eff = effective();
    BinaryWriter w(path);
    w.magic("LEDM");
    w.u32(1);
    w.u8(static_cast<uint8_t>(mode));
    w.u8(static_cast<uint8_t>(norm));
    w.u64(static_cast<uint64_t>(eff.rows));
    w.u64(static_cast<uint64_t>(eff.cols));
    if (mode == TuningMode::Project) w.span_f32(projection.data);
    w.span_f32(bias);
    w.span_f32(eff.data);
    w.close();
}

LedModel LedModel::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDM");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDM version");
    LedModel m;
    m.mode = static_cast<TuningMode>(r.u8());
    m.norm = static_cast<NormMode>(r.u8());
    int64_t n = static_cast<int64_t>(r.u64());
    int64_t d = static_cast<int64_t>(r.u64());
    if (m.mode == TuningMode::Project) {
        m.projection = MatF(d, d);
        r.read_f32(m.projection.data);
    }
    m.bias.resize(n);
    r.read_f32(m.bias);
    if (m.mode == TuningMode::Project) {
        // The file stores effective embeddings; the frozen base is a
        // training-time artifact and is not part of the model file.
        m.effective_cache = MatF(n, d);
        r.read_f32(m.effective_cache.data);
    } else {
        m.base = MatF(n, d);
        r.read_f32(m.base.data);
    }
    return m;
}

ParamCount parameter_count(const LedModel& m) {
    const int64_t n = m.item_count();
    const int64_t d = m.dim();
    ParamCount c;
    if (m.mode == TuningMode::Full) {
        c.trainable = n * d + n;
        c.frozen = 0;
    } else {
        c.trainable = d * d + n;
        c.frozen = n * d;
    }
    return c;
}

namespace {

std::vector<float> average_rows(std::span<const uint32_t> history, const MatF& rows, NormMode norm) {
    const int64_t d = rows.cols;
    std::vector<double> acc(d, 0.0);
    for (uint32_t item : history) {
        if (item >= rows.rows) {
            throw std::runtime_error("encode_user: item index " + std::to_string(item) +
                                     " out of range");
        }
        const float* v = rows.row(item);
        for (int64_t c = 0; c < d; ++c) acc[c] += v[c];
    }
    std::vector<float> out(d, 0.0f);
    if (!history.empty()) {
        const double t = static_cast<double>(history.size());
        const double inv = norm == NormMode::OverT ? 1.0 / t : 1.0 / std::sqrt(t);
        for (int64_t c = 0; c < d; ++c) out[c] = static_cast<float>(acc[c] * inv);
    }
    return out;
}

}  // namespace

std::vector<float> encode_user(std::span<const uint32_t> history, const LedModel& m) {
    return average_rows(history, m.effective(), m.norm);
}

std::vector<float> encode_user_base(std::span<const uint32_t> history, const LedModel& m) {
    if (!m.has_base()) throw std::runtime_error("encode_user_base: base embeddings unavailable");
    return average_rows(history, m.base, m.norm);
}

float score_item(std::span<const float> user, uint32_t item, const LedModel& m) {
    const MatF& eff = m.effective();
    if (item >= eff.rows) throw std::runtime_error("score: item index out of range");
    return dot_f32(user.data(), eff.row(item), eff.cols) + m.bias[item];
}

std::vector<float> score_all_trick(std::span<const float> user_base, const LedModel& m) {
    if (m.mode != TuningMode::Project) {
        throw std::runtime_error("score_all_trick: model is not in Project mode");
    }
    if (!m.has_base()) throw std::runtime_error("score_all_trick: base embeddings unavailable");
    const int64_t d = m.projection.rows;
    const int64_t n = m.base.rows;
    // w = P^T (P u), both mat-vecs in f64.
    std::vector<double> t1(d, 0.0);
    for (int64_t r = 0; r < d; ++r) {
        const float* prow = m.projection.row(r);
        double s = 0.0;
        for (int64_t c = 0; c < d; ++c) s += static_cast<double>(prow[c]) * user_base[c];
        t1[r] = s;
    }
    std::vector<double> w(d, 0.0);
    for (int64_t r = 0; r < d; ++r) {
        const float* prow = m.projection.row(r);
        const double tr = t1[r];
        for (int64_t c = 0; c < d; ++c) w[c] += tr * prow[c];
    }
    std::vector<float> wf(d);
    for (int64_t c = 0; c < d; ++c) wf[c] = static_cast<float>(w[c]);
    std::vector<float> scores(n);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        scores[i] = dot_f32(wf.data(), m.base.row(i), d) + m.bias[i];
    }
    return scores;
}

std::vector<float> score_all_direct(std::span<const float> user, const LedModel& m) {
    const MatF& eff = m.effective();
    std::vector<float> scores(eff.rows);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < eff.rows; ++i) {
        scores[i] = dot_f32(user.data(), eff.row(i), eff.cols) + m.bias[i];
    }
    return scores;
}

MatF augment_for_mips(const LedModel& m) {
    const MatF& eff = m.effective();
    const int64_t n = eff.rows;
    const int64_t d = eff.cols;
    for (float v : m.bias) {
        if (!std::isfinite(v)) throw std::runtime_error("augment_for_mips: non-finite bias");
    }
    MatF out(n, d + 1);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const float* src = eff.row(i);
        float* dst = out.row(i);
        std::copy(src, src + d, dst);
        dst[d] = m.bias[i];
    }
    return out;
}

std::vector<float> augment_query(std::span<const float> user) {
    std::vector<float> q(user.begin(), user.end());
    q.push_back(1.0f);
    return q;
}

}  // namespace led

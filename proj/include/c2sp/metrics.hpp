#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "c2sp/tensor.hpp"

namespace c2sp {

struct ClassifyMetrics {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 0.0;
    std::optional<double> sensitivity;   // absent when no positive labels
    std::optional<double> fpr_per_hour;  // absent when no interictal windows
    double interictal_hours = 0.0;
};

// predictions/labels: 1 = preictal (positive class), 0 = interictal.
inline ClassifyMetrics classify_metrics(const std::vector<int>& predictions,
                                        const std::vector<int>& labels,
                                        double window_seconds = 20.0) {
    if (predictions.size() != labels.size()) {
        throw dim_error("classify_metrics: prediction/label length mismatch");
    }
    ClassifyMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            predictions[i] == 1 ? ++m.tp : ++m.fn;
        } else {
            predictions[i] == 1 ? ++m.fp : ++m.tn;
        }
    }
    const std::size_t total = m.tp + m.tn + m.fp + m.fn;
    m.accuracy = total == 0 ? 0.0 : static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
    if (m.tp + m.fn > 0) {
        m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    }
    const std::size_t interictal = m.tn + m.fp;
    if (interictal > 0) {
        m.interictal_hours = static_cast<double>(interictal) * window_seconds / 3600.0;
        m.fpr_per_hour = static_cast<double>(m.fp) / m.interictal_hours;
    }
    return m;
}

// Channel-averaged Pearson correlation between x and x_hat, both [NxC].
// Degenerate channels (zero variance in either signal) are skipped; if a
// counter is supplied the number of skipped channels is reported there.
inline std::optional<double> pcc(const Tensor& x, const Tensor& x_hat,
                                 std::size_t* skipped = nullptr) {
    if (x.shape() != x_hat.shape() || x.ndim() != 2) {
        throw dim_error("pcc: shapes " + shape_str(x.shape()) + " vs " +
                        shape_str(x_hat.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1);
    const double* px = x.data();
    const double* ph = x_hat.data();
    double acc = 0.0;
    std::size_t used = 0, skip = 0;
    for (std::size_t c = 0; c < C; ++c) {
        double mx = 0.0, mh = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            mx += px[i * C + c];
            mh += ph[i * C + c];
        }
        mx /= static_cast<double>(N);
        mh /= static_cast<double>(N);
        double cov = 0.0, vx = 0.0, vh = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double dx = px[i * C + c] - mx;
            const double dh = ph[i * C + c] - mh;
            cov += dx * dh;
            vx += dx * dx;
            vh += dh * dh;
        }
        if (vx == 0.0 || vh == 0.0) {
            ++skip;
            continue;
        }
        acc += cov / (std::sqrt(vx) * std::sqrt(vh));
        ++used;
    }
    if (skipped) *skipped = skip;
    if (used == 0) return std::nullopt;
    return acc / static_cast<double>(used);
}

// PSNR in dB, implemented exactly as 10*log10(max(x)/MSE) with a linear
// (not squared) peak term. MSE = 0 maps to +infinity; max(x) <= 0 is
// undefined and reported absent. The conventional max^2 form is available
// behind `squared_peak` for external comparison only.
inline std::optional<double> psnr(const Tensor& x, const Tensor& x_hat,
                                  bool squared_peak = false) {
    if (x.shape() != x_hat.shape()) {
        throw dim_error("psnr: shapes " + shape_str(x.shape()) + " vs " +
                        shape_str(x_hat.shape()));
    }
    const std::size_t n = x.size();
    const double* px = x.data();
    const double* ph = x_hat.data();
    double mx = -std::numeric_limits<double>::infinity();
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx = std::max(mx, px[i]);
        const double d = px[i] - ph[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mx <= 0.0) return std::nullopt;
    const double peak = squared_peak ? mx * mx : mx;
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak / mse);
}

// ---------------------------------------------------------------------------
// evaluation report (per fold + aggregate)
// ---------------------------------------------------------------------------

struct FoldResult {
    std::size_t fold = 0;
    ClassifyMetrics cls;
    std::optional<double> pcc;
    std::optional<double> psnr;
};

struct EvalReport {
    std::vector<FoldResult> folds;

    static void mean_std(const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        sd = 0.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size()));
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "fold,accuracy,sensitivity,fpr_per_hour,pcc,psnr,tp,tn,fp,fn,interictal_hours\n";
        auto opt = [](const std::optional<double>& v) {
            return v ? std::to_string(*v) : std::string("");
        };
        std::vector<double> acc, sens, fpr, pccs, psnrs;
        for (const auto& fr : folds) {
            os << fr.fold << "," << fr.cls.accuracy << "," << opt(fr.cls.sensitivity) << ","
               << opt(fr.cls.fpr_per_hour) << "," << opt(fr.pcc) << "," << opt(fr.psnr) << ","
               << fr.cls.tp << "," << fr.cls.tn << "," << fr.cls.fp << "," << fr.cls.fn << ","
               << fr.cls.interictal_hours << "\n";
            acc.push_back(fr.cls.accuracy);
            if (fr.cls.sensitivity) sens.push_back(*fr.cls.sensitivity);
            if (fr.cls.fpr_per_hour) fpr.push_back(*fr.cls.fpr_per_hour);
            if (fr.pcc) pccs.push_back(*fr.pcc);
            if (fr.psnr && std::isfinite(*fr.psnr)) psnrs.push_back(*fr.psnr);
        }
        auto agg = [&](const std::vector<double>& v) {
            if (v.empty()) return std::string(",");
            double m, s;
            mean_std(v, m, s);
            return std::to_string(m) + "+/-" + std::to_string(s) + ",";
        };
        os << "aggregate," << agg(acc) << agg(sens) << agg(fpr) << agg(pccs) << agg(psnrs)
           << ",,,,\n";
        return os.str();
    }

    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw format_error("cannot open " + path);
        f << to_csv();
    }
};

}  // namespace c2sp

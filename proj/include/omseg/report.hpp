#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/evaluate.hpp"
#include "omseg/fsio.hpp"
#include "omseg/metrics.hpp"
#include "omseg/train.hpp"

namespace omseg {

// 6 significant digits, '.' decimal, no locale.
inline std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

// The value a reader recovers from the emitted text. Summary rows aggregate
// these, so re-deriving mean and sd from the file reproduces them exactly.
inline double round6(double v) { return std::strtod(format_g6(v).c_str(), nullptr); }

inline std::string format_mean_sd(const CohortSummary& s) {
    return format_g6(s.mean) + "±" + format_g6(s.sd);
}

inline CohortSummary summarize_rounded(const std::vector<double>& values,
                                       const std::string& metric) {
    std::vector<double> rounded;
    rounded.reserve(values.size());
    for (double v : values) rounded.push_back(round6(v));
    return mean_sd(rounded, metric);
}

inline std::string metrics_csv_text(const std::vector<PatientMetrics>& per_patient) {
    if (per_patient.empty()) throw InvalidArgumentError("metrics table needs patients");
    std::string out = "patient_id,dsc,iou,sensitivity,specificity\n";
    std::vector<double> ds, is, se, sp;
    for (const auto& pm : per_patient) {
        out += pm.patient_id + "," + format_g6(pm.dsc) + "," + format_g6(pm.iou) + "," +
               format_g6(pm.sensitivity) + "," + format_g6(pm.specificity) + "\n";
        ds.push_back(pm.dsc);
        is.push_back(pm.iou);
        se.push_back(pm.sensitivity);
        sp.push_back(pm.specificity);
    }
    out += "mean±sd," + format_mean_sd(summarize_rounded(ds, "dsc")) + "," +
           format_mean_sd(summarize_rounded(is, "iou")) + "," +
           format_mean_sd(summarize_rounded(se, "sensitivity")) + "," +
           format_mean_sd(summarize_rounded(sp, "specificity")) + "\n";
    return out;
}

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<PatientMetrics>& per_patient) {
    detail::atomic_write(path, metrics_csv_text(per_patient));
}

inline std::string cross_eval_csv_text(const CrossEvalMatrix& m) {
    std::string out = ",GT_A,GT_B\n";
    const char* row_names[2] = {"ModelA", "ModelB"};
    for (int row = 0; row < 2; ++row) {
        out += row_names[row];
        for (int col = 0; col < 2; ++col)
            out += "," + format_mean_sd(
                             summarize_rounded(m.cell[row][col].per_patient_dsc, "dsc"));
        out += "\n";
    }
    return out;
}

inline void write_cross_eval_csv(const std::filesystem::path& path, const CrossEvalMatrix& m) {
    detail::atomic_write(path, cross_eval_csv_text(m));
}

inline std::string kappa_csv_text(const std::vector<std::pair<std::string, double>>& rows) {
    if (rows.empty()) throw InvalidArgumentError("kappa table needs patients");
    std::string out = "patient_id,kappa\n";
    std::vector<double> ks;
    for (const auto& [id, k] : rows) {
        out += id + "," + format_g6(k) + "\n";
        ks.push_back(k);
    }
    out += "mean±sd," + format_mean_sd(summarize_rounded(ks, "kappa")) + "\n";
    return out;
}

inline void write_kappa_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, double>>& rows) {
    detail::atomic_write(path, kappa_csv_text(rows));
}

inline std::string train_report_csv_text(const TrainReport& report) {
    std::string out = "epoch,train_loss,val_loss,lr\n";
    for (const auto& row : report.rows)
        out += std::to_string(row.epoch) + "," + format_g6(row.train_loss) + "," +
               format_g6(row.val_loss) + "," + format_g6(row.lr) + "\n";
    return out;
}

inline void write_train_report_csv(const std::filesystem::path& path, const TrainReport& report) {
    detail::atomic_write(path, train_report_csv_text(report));
}

}  // namespace omseg

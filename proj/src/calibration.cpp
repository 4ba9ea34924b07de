#include "hyplan/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hyplan {

using nlohmann::json;

CalibrationTable fit_crude(const std::vector<CalibrationSample>& samples) {
    CalibrationTable table;
    for (const auto& s : samples) {
        const double sigma = std::sqrt(std::max(0.0, s.sigma_sq));
        if (sigma < 1e-6) {
            ++table.skipped_low_sigma;
            continue;
        }
        table.residuals.push_back((s.target - s.mu) / sigma);
    }
    if (table.residuals.size() < 10)
        throw InsufficientData("fit_crude: fewer than 10 usable samples");
    std::sort(table.residuals.begin(), table.residuals.end());

    double sum = 0.0;
    for (double z : table.residuals) sum += z;
    table.mean_z = sum / static_cast<double>(table.residuals.size());
    double ss = 0.0;
    for (double z : table.residuals) ss += (z - table.mean_z) * (z - table.mean_z);
    table.var_z = ss / static_cast<double>(table.residuals.size() - 1);
    return table;
}

void crude_calibrate(double mu, double sigma_sq, const CalibrationTable& table, double* mu_out,
                     double* sigma_sq_out) {
    if (sigma_sq <= 0.0) {
        *mu_out = mu;
        *sigma_sq_out = 0.0;
        return;
    }
    const double sigma = std::sqrt(sigma_sq);
    *mu_out = mu + sigma * table.mean_z;
    *sigma_sq_out = sigma_sq * table.var_z;
}

double confidence(double sigma_sq_cal, const CalibrationTable& table) {
    const double s2 = table.conf_scale;
    if (sigma_sq_cal <= 0.0) return s2 > 0.0 ? 1.0 : 0.0;
    if (s2 <= 0.0) return 0.0;
    return s2 / (s2 + sigma_sq_cal);
}

std::string calibration_to_json(const CalibrationTable& table) {
    json j{{"residuals", table.residuals},
           {"meanZ", table.mean_z},
           {"varZ", table.var_z},
           {"confScale", table.conf_scale},
           {"skippedLowSigma", table.skipped_low_sigma}};
    return j.dump(2);
}

CalibrationTable calibration_from_json(const std::string& text) {
    const json j = json::parse(text);
    CalibrationTable t;
    t.residuals = j.at("residuals").get<std::vector<double>>();
    t.mean_z = j.at("meanZ").get<double>();
    t.var_z = j.at("varZ").get<double>();
    t.conf_scale = j.at("confScale").get<double>();
    t.skipped_low_sigma = j.value("skippedLowSigma", 0);
    return t;
}

void write_calibration_file(const std::string& path, const CalibrationTable& table) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << calibration_to_json(table);
}

CalibrationTable read_calibration_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return calibration_from_json(ss.str());
}

}  // namespace hyplan

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hyplan {

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Empirical recalibration table: sorted normalized residuals plus derived
// moments and the confidence half-point scale.
struct CalibrationTable {
    std::vector<double> residuals;  // sorted
    double mean_z = 0.0;
    double var_z = 0.0;  // unbiased
    double conf_scale = 1.0;  // s^2: median calibrated variance, set by the harness
    int skipped_low_sigma = 0;
};

struct CalibrationSample {
    double mu = 0.0;
    double sigma_sq = 0.0;
    double target = 0.0;  // advantage-score target the estimate is judged against
};

struct CalibratedEstimate {
    double mu = 0.0;
    double sigma_sq = 0.0;
    double phi = 0.0;  // confidence in [0, 1]
};

// Fits the normalized-residual distribution; samples with sigma below 1e-6
// are skipped and counted. Requires at least 10 usable samples.
CalibrationTable fit_crude(const std::vector<CalibrationSample>& samples);

// Moment-matching CRUDE map: mu~ = mu + sigma * meanZ, sigma~^2 = sigma^2 * varZ.
void crude_calibrate(double mu, double sigma_sq, const CalibrationTable& table, double* mu_out,
                     double* sigma_sq_out);

// phi = s^2 / (s^2 + sigma~^2); zero variance means full confidence.
double confidence(double sigma_sq_cal, const CalibrationTable& table);

std::string calibration_to_json(const CalibrationTable& table);
CalibrationTable calibration_from_json(const std::string& text);
void write_calibration_file(const std::string& path, const CalibrationTable& table);
CalibrationTable read_calibration_file(const std::string& path);

}  // namespace hyplan

#pragma once

#include <string>
#include <string_view>

namespace focalcal {

/// Strictly positive softmax temperature.
class Temperature {
public:
    explicit Temperature(double t);

    double value() const noexcept { return t_; }

private:
    double t_;
};

enum class CalibratorFamily { temperature, focal, focal_temperature };

std::string_view to_string(CalibratorFamily f) noexcept;
CalibratorFamily family_from_string(std::string_view s);

/// Parameters of a post-hoc calibrator: temperature-scaled softmax followed
/// by the focal calibration map with parameter `gamma_ev`.
///
/// family == temperature implies gamma_ev == 0; family == focal implies
/// temperature == 1. Use validate() to enforce that.
struct CalibratorParams {
    double gamma_ev = 0.0;
    double temperature = 1.0;
    CalibratorFamily family = CalibratorFamily::focal_temperature;

    static CalibratorParams identity() { return {0.0, 1.0, CalibratorFamily::temperature}; }

    void validate() const;

    bool operator==(const CalibratorParams&) const = default;
};

}  // namespace focalcal

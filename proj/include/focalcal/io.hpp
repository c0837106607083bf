#pragma once

#include "focalcal/dataset.hpp"
#include "focalcal/fitting.hpp"
#include "focalcal/format.hpp"
#include "focalcal/metrics.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace focalcal {

/// Logits CSV: header logit_0,...,logit_{n-1},label then one row per
/// instance. LF or CRLF line ends. Errors carry the 1-based line number.
LabeledLogits read_logits_csv(std::istream& in);
LabeledLogits ingest_csv(const std::filesystem::path& path);

void write_logits_csv(std::ostream& os, const LabeledLogits& data);

/// Columns prob_0,...,prob_{n-1},label at 17 significant digits.
void write_probabilities_csv(std::ostream& os, const PredictionBatch& batch);

nlohmann::json to_json(const GridSpec& grid);
nlohmann::json to_json(const FitResult& fit);

/// Reads {family, gamma_ev, temperature, ...}; other keys are ignored.
/// Throws IngestError on a schema or validation failure.
CalibratorParams params_from_json(const nlohmann::json& j);
CalibratorParams read_params_file(const std::filesystem::path& path);

struct EvalReport {
    std::string dataset;
    std::size_t n_classes = 0;
    std::size_t rows = 0;
    double accuracy = 0.0;
    double error_rate = 0.0;
    double nll = 0.0;
    double ece = 0.0;
    std::size_t n_bins = kDefaultBins;
    BinTable bins;
    std::optional<CalibratorParams> params;
};

EvalReport make_report(const PredictionBatch& batch, std::size_t n_bins, std::optional<CalibratorParams> params,
                       std::string dataset);
nlohmann::json to_json(const EvalReport& report);

/// Throws IoError if the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace focalcal

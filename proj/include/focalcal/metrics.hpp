#pragma once

#include "focalcal/core.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace focalcal {

inline constexpr std::size_t kDefaultBins = 15;

/// Predicted probability rows (row-major, width n) with their true labels.
class PredictionBatch {
public:
    /// Throws DomainError on an empty or ragged batch, entries outside [0, 1],
    /// or labels outside [0, n).
    PredictionBatch(std::size_t n_classes, std::vector<double> probs, std::vector<std::size_t> labels);

    static PredictionBatch from_rows(const std::vector<ProbVector>& rows, std::vector<std::size_t> labels);

    std::size_t n_classes() const noexcept { return n_; }
    std::size_t size() const noexcept { return labels_.size(); }

    std::span<const double> row(std::size_t i) const { return {probs_.data() + i * n_, n_}; }
    std::size_t label(std::size_t i) const { return labels_[i]; }

    const std::vector<double>& probs() const noexcept { return probs_; }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }

private:
    std::size_t n_;
    std::vector<double> probs_;
    std::vector<std::size_t> labels_;
};

struct BinRow {
    std::size_t index = 0;
    std::size_t count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    double abs_gap = 0.0;
};

struct BinTable {
    std::size_t total = 0;
    std::vector<BinRow> rows;  // empty bins are omitted

    /// Σ (count / total) · abs_gap, accumulated in row order.
    double weighted_gap() const;
};

/// Top-label confidence and argmax correctness per instance.
struct Scores {
    std::vector<double> confidence;
    std::vector<std::uint8_t> correct;
};

Scores top_label_scores(const PredictionBatch& batch);

/// Equal-mass binning of raw scores: instances sorted by (confidence,
/// correctness, position); bin b takes sorted positions [bN/B, (b+1)N/B).
BinTable reliability_table_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                                       std::size_t n_bins);
double ece_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                       std::size_t n_bins);

double ece_equal_mass(const PredictionBatch& batch, std::size_t n_bins = kDefaultBins);
BinTable reliability_table(const PredictionBatch& batch, std::size_t n_bins = kDefaultBins);
double nll(const PredictionBatch& batch);
double error_rate(const PredictionBatch& batch);

/// Columns bin_index,count,mean_confidence,accuracy,abs_gap.
void write_bin_table_csv(std::ostream& os, const BinTable& table);

/// Running sum with Neumaier compensation.
class CompensatedSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace focalcal

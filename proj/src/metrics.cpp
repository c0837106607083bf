#include "focalcal/metrics.hpp"

#include "focalcal/error.hpp"
#include "focalcal/format.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace focalcal {

void CompensatedSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        comp_ += (sum_ - t) + x;
    } else {
        comp_ += (x - t) + sum_;
    }
    sum_ = t;
}

PredictionBatch::PredictionBatch(std::size_t n_classes, std::vector<double> probs, std::vector<std::size_t> labels)
    : n_(n_classes), probs_(std::move(probs)), labels_(std::move(labels)) {
    if (n_ == 0) throw DomainError("prediction rows must be non-empty");
    if (labels_.empty()) throw DomainError("empty prediction batch");
    if (probs_.size() != labels_.size() * n_) throw DomainError("prediction matrix is not rectangular");
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0, 1]: " + std::to_string(p));
    }
    for (std::size_t y : labels_) {
        if (y >= n_) throw DomainError("label " + std::to_string(y) + " out of range");
    }
}

PredictionBatch PredictionBatch::from_rows(const std::vector<ProbVector>& rows, std::vector<std::size_t> labels) {
    if (rows.empty()) throw DomainError("empty prediction batch");
    const std::size_t n = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw DomainError("prediction rows differ in width");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return PredictionBatch(n, std::move(flat), std::move(labels));
}

double BinTable::weighted_gap() const {
    double ece = 0.0;
    for (const auto& r : rows) {
        ece += static_cast<double>(r.count) / static_cast<double>(total) * r.abs_gap;
    }
    return ece;
}

Scores top_label_scores(const PredictionBatch& batch) {
    Scores s;
    s.confidence.resize(batch.size());
    s.correct.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto row = batch.row(i);
        const std::size_t k = argmax(row);
        s.confidence[i] = row[k];
        s.correct[i] = k == batch.label(i);
    }
    return s;
}

BinTable reliability_table_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                                       std::size_t n_bins) {
    const std::size_t n = confidence.size();
    if (n == 0) throw DomainError("empty prediction batch");
    if (correct.size() != n) throw DomainError("score arrays differ in length");
    if (n_bins == 0) throw ParameterError("number of bins must be positive");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (confidence[a] != confidence[b]) return confidence[a] < confidence[b];
        if (correct[a] != correct[b]) return correct[a] < correct[b];
        return a < b;
    });

    BinTable table;
    table.total = n;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t lo = b * n / n_bins;
        const std::size_t hi = (b + 1) * n / n_bins;
        if (lo == hi) continue;
        CompensatedSum conf;
        std::size_t hits = 0;
        for (std::size_t j = lo; j < hi; ++j) {
            conf.add(confidence[order[j]]);
            hits += correct[order[j]];
        }
        BinRow row;
        row.index = b;
        row.count = hi - lo;
        row.mean_confidence = conf.value() / static_cast<double>(row.count);
        row.accuracy = static_cast<double>(hits) / static_cast<double>(row.count);
        row.abs_gap = std::abs(row.accuracy - row.mean_confidence);
        table.rows.push_back(row);
    }
    return table;
}

double ece_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                       std::size_t n_bins) {
    return reliability_table_from_scores(confidence, correct, n_bins).weighted_gap();
}

BinTable reliability_table(const PredictionBatch& batch, std::size_t n_bins) {
    const Scores s = top_label_scores(batch);
    return reliability_table_from_scores(s.confidence, s.correct, n_bins);
}

double ece_equal_mass(const PredictionBatch& batch, std::size_t n_bins) {
    return reliability_table(batch, n_bins).weighted_gap();
}

double nll(const PredictionBatch& batch) {
    CompensatedSum total;
    for (std::size_t i = 0; i < batch.size(); ++i) total.add(cross_entropy(batch.row(i), batch.label(i)));
    return total.value() / static_cast<double>(batch.size());
}

double error_rate(const PredictionBatch& batch) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) wrong += argmax(batch.row(i)) != batch.label(i);
    return static_cast<double>(wrong) / static_cast<double>(batch.size());
}

void write_bin_table_csv(std::ostream& os, const BinTable& table) {
    os << "bin_index,count,mean_confidence,accuracy,abs_gap\n";
    for (const auto& r : table.rows) {
        os << r.index << ',' << r.count << ',' << format_double(r.mean_confidence) << ','
           << format_double(r.accuracy) << ',' << format_double(r.abs_gap) << '\n';
    }
}

}  // namespace focalcal

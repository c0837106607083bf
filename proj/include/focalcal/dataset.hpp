#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace focalcal {

/// Rows of logits (row-major, width n) with one class label per row.
class LabeledLogits {
public:
    /// Throws DomainError unless the data is rectangular, finite, non-empty,
    /// n >= 2 and every label lies in [0, n).
    LabeledLogits(std::size_t n_classes, std::vector<double> logits, std::vector<std::size_t> labels);

    std::size_t n_classes() const noexcept { return n_; }
    std::size_t size() const noexcept { return labels_.size(); }

    std::span<const double> row(std::size_t i) const { return {logits_.data() + i * n_, n_}; }
    std::size_t label(std::size_t i) const { return labels_[i]; }

    const std::vector<double>& logits() const noexcept { return logits_; }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }

private:
    std::size_t n_;
    std::vector<double> logits_;
    std::vector<std::size_t> labels_;
};

}  // namespace focalcal

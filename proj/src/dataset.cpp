#include "focalcal/dataset.hpp"

#include "focalcal/error.hpp"

#include <cmath>
#include <string>

namespace focalcal {

LabeledLogits::LabeledLogits(std::size_t n_classes, std::vector<double> logits, std::vector<std::size_t> labels)
    : n_(n_classes), logits_(std::move(logits)), labels_(std::move(labels)) {
    if (n_ < 2) throw DomainError("need at least two classes");
    if (labels_.empty()) throw DomainError("empty dataset");
    if (logits_.size() != labels_.size() * n_) throw DomainError("logit matrix is not rectangular");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= n_) {
            throw DomainError("row " + std::to_string(i) + ": label " + std::to_string(labels_[i]) + " out of range");
        }
        for (double z : row(i)) {
            if (!std::isfinite(z)) throw DomainError("row " + std::to_string(i) + ": non-finite logit");
        }
    }
}

}  // namespace focalcal

#include "focalcal/io.hpp"

#include "focalcal/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

namespace focalcal {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_label(std::string_view s, std::size_t& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

template <class T>
T json_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw IngestError(std::string("params JSON lacks '") + key + "'", 0);
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw IngestError(std::string("params JSON field '") + key + "' has the wrong type", 0);
    }
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

LabeledLogits read_logits_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw IngestError("missing header", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_fields(line);
    const std::size_t n = header.size() - 1;
    if (header.size() < 3 || header.back() != "label") {
        throw IngestError("header must be logit_0,...,logit_{n-1},label with n >= 2", line_no);
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (header[k] != "logit_" + std::to_string(k)) {
            throw IngestError("header column " + std::to_string(k) + " must be logit_" + std::to_string(k), line_no);
        }
    }

    std::vector<double> logits;
    std::vector<std::size_t> labels;
    std::size_t blank_line = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) {
            if (!blank_line) blank_line = line_no;
            continue;
        }
        if (blank_line) throw IngestError("blank line inside data", blank_line);

        const auto fields = split_fields(line);
        if (fields.size() != n + 1) {
            throw IngestError("expected " + std::to_string(n + 1) + " fields, found " + std::to_string(fields.size()),
                              line_no);
        }
        for (std::size_t k = 0; k < n; ++k) {
            double z = 0.0;
            if (!parse_double(fields[k], z)) {
                throw IngestError("cannot parse logit_" + std::to_string(k) + " '" + std::string(fields[k]) + "'",
                                  line_no);
            }
            if (!std::isfinite(z)) throw IngestError("non-finite logit_" + std::to_string(k), line_no);
            logits.push_back(z);
        }
        std::size_t y = 0;
        if (!parse_label(fields[n], y)) {
            throw IngestError("cannot parse label '" + std::string(fields[n]) + "'", line_no);
        }
        if (y >= n) {
            throw IngestError("label " + std::to_string(y) + " outside [0, " + std::to_string(n) + ")", line_no);
        }
        labels.push_back(y);
    }
    if (labels.empty()) throw IngestError("no data rows", line_no);
    return LabeledLogits(n, std::move(logits), std::move(labels));
}

LabeledLogits ingest_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_logits_csv(in);
}

void write_logits_csv(std::ostream& os, const LabeledLogits& data) {
    const std::size_t n = data.n_classes();
    for (std::size_t k = 0; k < n; ++k) os << "logit_" << k << ',';
    os << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double z : data.row(i)) os << format_double(z) << ',';
        os << data.label(i) << '\n';
    }
}

void write_probabilities_csv(std::ostream& os, const PredictionBatch& batch) {
    const std::size_t n = batch.n_classes();
    for (std::size_t k = 0; k < n; ++k) os << "prob_" << k << ',';
    os << "label\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (double p : batch.row(i)) os << format_double(p) << ',';
        os << batch.label(i) << '\n';
    }
}

nlohmann::json to_json(const GridSpec& grid) {
    return {{"gamma_values", grid.gamma_values},
            {"t_min", grid.t_min},
            {"t_max", grid.t_max},
            {"t_step", grid.t_step},
            {"criterion", to_string(grid.criterion)},
            {"n_bins", grid.n_bins}};
}

nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : fit.trace) {
        trace.push_back({{"gamma_ev", e.params.gamma_ev}, {"temperature", e.params.temperature}, {"value", e.value}});
    }
    return {{"family", to_string(fit.best.family)},
            {"gamma_ev", fit.best.gamma_ev},
            {"temperature", fit.best.temperature},
            {"criterion", to_string(fit.grid.criterion)},
            {"criterion_value", fit.criterion_value},
            {"method", fit.method},
            {"grid", to_json(fit.grid)},
            {"trace", std::move(trace)}};
}

CalibratorParams params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw IngestError("params JSON must be an object", 0);
    CalibratorParams p;
    p.gamma_ev = json_field<double>(j, "gamma_ev");
    p.temperature = json_field<double>(j, "temperature");
    try {
        p.family = family_from_string(json_field<std::string>(j, "family"));
        p.validate();
    } catch (const ParameterError& e) {
        throw IngestError(std::string("invalid calibrator parameters: ") + e.what(), 0);
    }
    return p;
}

CalibratorParams read_params_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw IngestError(path.string() + ": malformed JSON: " + e.what(), 0);
    }
    return params_from_json(j);
}

EvalReport make_report(const PredictionBatch& batch, std::size_t n_bins, std::optional<CalibratorParams> params,
                       std::string dataset) {
    EvalReport r;
    r.dataset = std::move(dataset);
    r.n_classes = batch.n_classes();
    r.rows = batch.size();
    r.error_rate = error_rate(batch);
    r.accuracy = 1.0 - r.error_rate;
    r.nll = nll(batch);
    r.n_bins = n_bins;
    r.bins = reliability_table(batch, n_bins);
    r.ece = r.bins.weighted_gap();
    r.params = params;
    return r;
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : report.bins.rows) {
        bins.push_back({{"bin_index", b.index},
                        {"count", b.count},
                        {"mean_confidence", b.mean_confidence},
                        {"accuracy", b.accuracy},
                        {"abs_gap", b.abs_gap}});
    }
    nlohmann::json params = nullptr;
    if (report.params) {
        params = {{"family", to_string(report.params->family)},
                  {"gamma_ev", report.params->gamma_ev},
                  {"temperature", report.params->temperature}};
    }
    return {{"dataset", report.dataset},
            {"n", report.n_classes},
            {"rows", report.rows},
            {"accuracy", report.accuracy},
            {"error_rate", report.error_rate},
            {"nll", report.nll},
            {"ece", report.ece},
            {"n_bins", report.n_bins},
            {"bins", std::move(bins)},
            {"params_used", std::move(params)}};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace focalcal

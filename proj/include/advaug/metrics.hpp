#pragma once

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advaug {

// One record per training step; validation results ride on the step they
// were computed at, so line count == steps taken.
struct StepRecord {
    int t = 0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> terms;  // loss term name -> value
    std::optional<double> eta;                          // curriculum threshold, once seeded
    std::optional<double> rate;                         // curriculum selection ratio r_t
    std::vector<double> lambdas;                        // interpolation draws this step
    std::optional<double> val_loss, val_bleu, val_seq_acc;
    std::string note;  // nonempty marks a diagnostic record (e.g. non-finite loss)
};

inline nlohmann::json to_json(const StepRecord& r) {
    nlohmann::json j;
    j["t"] = r.t;
    j["total"] = r.total;
    nlohmann::json losses = nlohmann::json::object();
    for (const auto& [name, v] : r.terms) losses[name] = v;
    j["losses"] = std::move(losses);
    j["eta"] = r.eta ? nlohmann::json(*r.eta) : nlohmann::json();
    j["r"] = r.rate ? nlohmann::json(*r.rate) : nlohmann::json();
    nlohmann::json lam;
    lam["count"] = r.lambdas.size();
    if (!r.lambdas.empty()) {
        lam["mean"] = std::accumulate(r.lambdas.begin(), r.lambdas.end(), 0.0) /
                      static_cast<double>(r.lambdas.size());
        lam["min"] = *std::min_element(r.lambdas.begin(), r.lambdas.end());
        lam["max"] = *std::max_element(r.lambdas.begin(), r.lambdas.end());
    }
    j["lambda"] = std::move(lam);
    if (r.val_loss) {
        j["val"] = {{"loss", *r.val_loss}, {"bleu", *r.val_bleu}, {"seq_acc", *r.val_seq_acc}};
    }
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

// Line-delimited JSON, one line per step, flushed as written.
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
        if (!out_) throw std::runtime_error("MetricsWriter: cannot open " + path);
    }

    void write(const StepRecord& r) {
        out_ << to_json(r).dump() << "\n";
        out_.flush();
        if (!out_) throw std::runtime_error("MetricsWriter: write failed for " + path_);
    }

  private:
    std::string path_;
    std::ofstream out_;
};

inline std::vector<nlohmann::json> load_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_metrics: cannot open " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("load_metrics: malformed record at " + path + ":" +
                                     std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace advaug

#pragma once

#include "advaug/config.hpp"
#include "advaug/losses.hpp"
#include "advaug/model.hpp"
#include "advaug/vocab.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace advaug {

template <class Real>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<Real, float>) return "f32";
    else return "f64";
}

// Parameter file: msgpack with raw little-endian tensor blobs, so values
// round-trip bit-exactly.
template <class Real>
inline void save_params(const std::string& path, const TransformerParams<Real>& params,
                        const ModelConfig& cfg) {
    nlohmann::json j;
    j["dtype"] = dtype_name<Real>();
    nlohmann::json tensors = nlohmann::json::array();
    auto& mut = const_cast<TransformerParams<Real>&>(params);
    for (const auto& ref : tensor_refs(mut, cfg)) {
        nlohmann::json t;
        t["name"] = ref.name;
        t["rows"] = ref.rows;
        t["cols"] = ref.cols;
        std::vector<std::uint8_t> bytes(sizeof(Real) * static_cast<std::size_t>(ref.size()));
        std::memcpy(bytes.data(), ref.data, bytes.size());
        t["data"] = nlohmann::json::binary(std::move(bytes));
        tensors.push_back(std::move(t));
    }
    j["tensors"] = std::move(tensors);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    const std::vector<std::uint8_t> packed = nlohmann::json::to_msgpack(j);
    out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

template <class Real>
inline void load_params(const std::string& path, TransformerParams<Real>& params, const ModelConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    const std::vector<std::uint8_t> packed((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
        j = nlohmann::json::from_msgpack(packed);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_params: malformed file " + path + ": " + e.what());
    }
    if (j.at("dtype").get<std::string>() != dtype_name<Real>())
        throw std::runtime_error("load_params: " + path + " holds dtype " +
                                 j.at("dtype").get<std::string>() + ", expected " + dtype_name<Real>());
    auto refs = tensor_refs(params, cfg);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != refs.size())
        throw std::runtime_error("load_params: " + path + " holds " + std::to_string(tensors.size()) +
                                 " tensors, model expects " + std::to_string(refs.size()));
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != refs[i].name)
            throw std::runtime_error("load_params: tensor " + std::to_string(i) + " is '" +
                                     t.at("name").get<std::string>() + "', expected '" + refs[i].name + "'");
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        if (rows != refs[i].rows || cols != refs[i].cols)
            throw std::runtime_error("load_params: tensor '" + refs[i].name + "' has shape " +
                                     std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                                     std::to_string(refs[i].rows) + "x" + std::to_string(refs[i].cols));
        const auto& bytes = t.at("data").get_binary();
        if (bytes.size() != sizeof(Real) * static_cast<std::size_t>(refs[i].size()))
            throw std::runtime_error("load_params: tensor '" + refs[i].name + "' has wrong byte length");
        std::memcpy(refs[i].data, bytes.data(), bytes.size());
    }
}

struct CurriculumSnapshot {
    long long t = 0;
    double eta = 0.0;
    bool seeded = false;
};

// An unseeded threshold is -inf, which JSON cannot carry; it round-trips as
// null.
inline nlohmann::json to_json(const CurriculumSnapshot& s) {
    nlohmann::json j{{"t", s.t}, {"seeded", s.seeded}};
    j["eta"] = std::isfinite(s.eta) ? nlohmann::json(s.eta) : nlohmann::json(nullptr);
    return j;
}

inline CurriculumSnapshot curriculum_snapshot_from_json(const nlohmann::json& j) {
    CurriculumSnapshot s;
    s.t = j.at("t").get<long long>();
    const nlohmann::json& eta = j.at("eta");
    s.eta = eta.is_null() ? -std::numeric_limits<double>::infinity() : eta.get<double>();
    s.seeded = j.at("seeded").get<bool>();
    return s;
}

// One checkpoint directory: params.bin + vocab.txt + meta.json (step,
// curriculum state and a full config echo), self-sufficient for evaluation.
template <class Real>
inline void save_checkpoint(const std::string& dir, const Transformer<Real>& model,
                            const Vocabulary& vocab, const TrainConfig& cfg, int step,
                            const CurriculumSnapshot& curriculum) {
    std::filesystem::create_directories(dir);
    save_params(dir + "/params.bin", model.params(), model.config());
    vocab.save(dir + "/vocab.txt");
    nlohmann::json meta;
    meta["step"] = step;
    meta["curriculum"] = to_json(curriculum);
    meta["config"] = to_json(cfg);
    meta["vocab_size"] = vocab.size();
    std::ofstream out(dir + "/meta.json");
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + dir + "/meta.json");
    out << meta.dump(2) << "\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + dir + "/meta.json");
}

template <class Real>
struct Checkpoint {
    Transformer<Real> model;
    Vocabulary vocab;
    TrainConfig config;
    int step = 0;
    CurriculumSnapshot curriculum;
};

inline nlohmann::json read_checkpoint_meta(const std::string& dir) {
    std::ifstream in(dir + "/meta.json");
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + dir + "/meta.json");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: malformed " + dir + "/meta.json: " + e.what());
    }
    return meta;
}

template <class Real>
inline Checkpoint<Real> load_checkpoint(const std::string& dir) {
    const nlohmann::json meta = read_checkpoint_meta(dir);
    Checkpoint<Real> out{Transformer<Real>(), Vocabulary(), parse_train_config(meta.at("config")), 0, {}};
    if (out.config.precision != (std::is_same_v<Real, float> ? "float32" : "float64"))
        throw std::runtime_error("load_checkpoint: " + dir + " was trained with precision " +
                                 out.config.precision);
    out.vocab = Vocabulary::load(dir + "/vocab.txt");
    ModelConfig mc = out.config.model;
    mc.vocab_size = out.vocab.size();
    TransformerParams<Real> params;
    params.init_zero(mc);
    load_params(dir + "/params.bin", params, mc);
    out.model = Transformer<Real>::with_params(mc, std::move(params));
    out.step = meta.at("step").get<int>();
    out.curriculum = curriculum_snapshot_from_json(meta.at("curriculum"));
    return out;
}

}  // namespace advaug

#pragma once

// Experiment configuration, per-session training records and their on-disk
// layout: runs/<config>/s##_i##/ holds the checkpoint, curves, test
// predictions and the session's mean test heatmap. Everything is derived
// deterministically from the JSON config; no ambient randomness.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cleverscan/csvio.hpp"
#include "cleverscan/lrp.hpp"
#include "cleverscan/net.hpp"
#include "cleverscan/phantom.hpp"
#include "cleverscan/prep.hpp"
#include "cleverscan/spray.hpp"
#include "cleverscan/train.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::harness {

namespace fs = std::filesystem;
using nlohmann::json;

/// Invalid configuration; the CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Nothing converged (or the reference has no converged run); exit code 3.
struct no_converged_runs_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    phantom::PhantomSpec phantom_spec;
    int n_subjects = 200;
    int images_per_subject = 1;
    std::vector<std::string> config_ids = {"A1", "B1", "C1", "D1",
                                           "A2", "B2", "C2", "D2"};
    std::string reference_id = "A2";
    int n_samplings = 10;
    int n_inits = 3;
    net::Hyperparams hyperparams;

    std::uint64_t dataset_seed = 1;
    std::uint64_t split_seed_base = 100;
    std::uint64_t init_seed_base = 900;

    bool lrp_target_true_class = false;  // default: predicted class
    double lrp_epsilon = 1e-9;
    double top_fraction = 0.4;

    spray::SprayParams spray_params;
    bool run_spray = true;

    double convergence_margin = 0.05;
    double alpha = 0.05;
    int bootstrap = 10000;
    int threads = 0;  // 0 selects hardware concurrency
    std::string out_dir = "out";

    void validate() const {
        if (config_ids.empty()) throw config_error("config: empty config list");
        for (const auto& id : config_ids) prep::config_from_id(id);  // throws on unknown
        bool have_reference = false;
        for (const auto& id : config_ids) have_reference |= id == reference_id;
        if (!have_reference)
            throw config_error("config: reference id " + reference_id +
                               " is not in the config list");
        if (n_subjects < 10) throw config_error("config: need at least 10 subjects");
        if (n_samplings < 1 || n_inits < 1)
            throw config_error("config: n_samplings and n_inits must be >= 1");
        if (hyperparams.epochs < 1 || hyperparams.batch < 1 || hyperparams.lr <= 0)
            throw config_error("config: invalid hyperparameters");
        if (top_fraction <= 0.0 || top_fraction > 1.0)
            throw config_error("config: top_fraction must be in (0,1]");
        try {
            phantom_spec.validate();
        } catch (const std::exception& e) {
            throw config_error(std::string("config: ") + e.what());
        }
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig cfg;
        if (j.contains("phantom")) {
            const auto& p = j.at("phantom");
            auto& spec = cfg.phantom_spec;
            if (p.contains("dims")) {
                const auto dims = p.at("dims");
                if (!dims.is_array() || dims.size() != 3)
                    throw config_error("config: phantom.dims must be [nx,ny,nz]");
                spec.nx = dims[0].get<int>();
                spec.ny = dims[1].get<int>();
                spec.nz = dims[2].get<int>();
            }
            spec.spacing_mm = p.value("spacing_mm", spec.spacing_mm);
            spec.brain_radius_frac = p.value("brain_radius_frac", spec.brain_radius_frac);
            spec.shell_thickness_vox =
                p.value("shell_thickness_vox", spec.shell_thickness_vox);
            if (p.contains("ventricle_radius_frac")) {
                spec.ventricle_radius_frac[0] = p.at("ventricle_radius_frac").at("nc");
                spec.ventricle_radius_frac[1] = p.at("ventricle_radius_frac").at("ad");
            }
            if (p.contains("texture_contrast")) {
                spec.texture_contrast[0] = p.at("texture_contrast").at("nc");
                spec.texture_contrast[1] = p.at("texture_contrast").at("ad");
            }
            spec.noise_sigma = p.value("noise_sigma", spec.noise_sigma);
            if (p.contains("signal_mode"))
                spec.signal_mode =
                    phantom::signal_mode_from_string(p.at("signal_mode").get<std::string>());
            cfg.n_subjects = p.value("n_subjects", cfg.n_subjects);
            cfg.images_per_subject = p.value("images_per_subject", cfg.images_per_subject);
        }
        cfg.config_ids = j.value("configs", cfg.config_ids);
        cfg.reference_id = j.value("reference", cfg.reference_id);
        cfg.n_samplings = j.value("n_samplings", cfg.n_samplings);
        cfg.n_inits = j.value("n_inits", cfg.n_inits);
        if (j.contains("hyperparams")) {
            const auto& h = j.at("hyperparams");
            cfg.hyperparams.epochs = h.value("epochs", cfg.hyperparams.epochs);
            cfg.hyperparams.batch = h.value("batch", cfg.hyperparams.batch);
            cfg.hyperparams.lr = h.value("lr", cfg.hyperparams.lr);
        }
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            cfg.dataset_seed = s.value("dataset", cfg.dataset_seed);
            cfg.split_seed_base = s.value("split_base", cfg.split_seed_base);
            cfg.init_seed_base = s.value("init_base", cfg.init_seed_base);
        }
        if (j.contains("lrp")) {
            const auto& l = j.at("lrp");
            cfg.lrp_target_true_class = l.value("target", "predicted") == std::string("true");
            cfg.lrp_epsilon = l.value("epsilon", cfg.lrp_epsilon);
            cfg.top_fraction = l.value("top_fraction", cfg.top_fraction);
        }
        if (j.contains("spray")) {
            const auto& s = j.at("spray");
            cfg.run_spray = s.value("enabled", cfg.run_spray);
            cfg.spray_params.target_spacing =
                s.value("target_spacing", cfg.spray_params.target_spacing);
            cfg.spray_params.k_neighbors =
                s.value("k_neighbors", cfg.spray_params.k_neighbors);
            cfg.spray_params.k_max = s.value("k_max", cfg.spray_params.k_max);
            cfg.spray_params.perplexity = s.value("perplexity", cfg.spray_params.perplexity);
            cfg.spray_params.tsne_iterations =
                s.value("tsne_iterations", cfg.spray_params.tsne_iterations);
            cfg.spray_params.seed = s.value("seed", cfg.spray_params.seed);
        }
        cfg.convergence_margin = j.value("convergence_margin", cfg.convergence_margin);
        cfg.alpha = j.value("alpha", cfg.alpha);
        cfg.bootstrap = j.value("bootstrap", cfg.bootstrap);
        cfg.threads = j.value("threads", cfg.threads);
        cfg.out_dir = j.value("out", cfg.out_dir);
        return cfg;
    }

    json to_json() const {
        json j;
        j["phantom"] = {
            {"dims", {phantom_spec.nx, phantom_spec.ny, phantom_spec.nz}},
            {"spacing_mm", phantom_spec.spacing_mm},
            {"brain_radius_frac", phantom_spec.brain_radius_frac},
            {"shell_thickness_vox", phantom_spec.shell_thickness_vox},
            {"ventricle_radius_frac",
             {{"nc", phantom_spec.ventricle_radius_frac[0]},
              {"ad", phantom_spec.ventricle_radius_frac[1]}}},
            {"texture_contrast",
             {{"nc", phantom_spec.texture_contrast[0]},
              {"ad", phantom_spec.texture_contrast[1]}}},
            {"noise_sigma", phantom_spec.noise_sigma},
            {"signal_mode", phantom::to_string(phantom_spec.signal_mode)},
            {"n_subjects", n_subjects},
            {"images_per_subject", images_per_subject},
        };
        j["configs"] = config_ids;
        j["reference"] = reference_id;
        j["n_samplings"] = n_samplings;
        j["n_inits"] = n_inits;
        j["hyperparams"] = {{"epochs", hyperparams.epochs},
                            {"batch", hyperparams.batch},
                            {"lr", hyperparams.lr}};
        j["seeds"] = {{"dataset", dataset_seed},
                      {"split_base", split_seed_base},
                      {"init_base", init_seed_base}};
        j["lrp"] = {{"target", lrp_target_true_class ? "true" : "predicted"},
                    {"epsilon", lrp_epsilon},
                    {"top_fraction", top_fraction}};
        j["spray"] = {{"enabled", run_spray},
                      {"target_spacing", spray_params.target_spacing},
                      {"k_neighbors", spray_params.k_neighbors},
                      {"k_max", spray_params.k_max},
                      {"perplexity", spray_params.perplexity},
                      {"tsne_iterations", spray_params.tsne_iterations},
                      {"seed", spray_params.seed}};
        j["convergence_margin"] = convergence_margin;
        j["alpha"] = alpha;
        j["bootstrap"] = bootstrap;
        j["threads"] = threads;
        j["out"] = out_dir;
        return j;
    }

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("config: cannot open " + path);
        json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw config_error(std::string("config: invalid JSON: ") + e.what());
        }
        return from_json(j);
    }
};

// ---------------------------------------------------------------------------
// Session records.
// ---------------------------------------------------------------------------

struct RunRecord {
    std::string config_id;
    int sampling_idx = 0;
    int init_idx = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    bool hit_non_finite = false;
    bool converged = false;
    std::string exclusion_reason;  // empty when converged
    double final_val_acc = 0.0;
    net::TrainCurves curves;
    std::vector<net::Prediction> predictions;
    Volume mean_test_heatmap;  // empty when not converged
    std::string dir;
};

/// Converged iff the loss stayed finite, ended below its starting value, and
/// the final validation accuracy clears chance by the margin.
inline bool convergence_screen(const net::TrainCurves& curves, bool hit_non_finite,
                               double margin, std::string* reason = nullptr) {
    const auto fail = [&](const char* why) {
        if (reason) *reason = why;
        return false;
    };
    if (hit_non_finite) return fail("non_finite_loss");
    if (curves.train_loss.empty()) return fail("no_epochs");
    const double final_loss = curves.train_loss.back();
    if (!std::isfinite(final_loss)) return fail("non_finite_loss");
    if (!(final_loss < curves.train_loss.front())) return fail("train_loss_not_decreasing");
    if (!(curves.val_acc.back() >= 0.5 + margin)) return fail("val_acc_at_chance");
    if (reason) reason->clear();
    return true;
}

inline std::string session_dir_name(int sampling_idx, int init_idx) {
    char buffer[24];
    std::snprintf(buffer, sizeof buffer, "s%02d_i%02d", sampling_idx, init_idx);
    return buffer;
}

// ---------------------------------------------------------------------------
// Session artifacts.
// ---------------------------------------------------------------------------

inline void write_curves_csv(const net::TrainCurves& curves, const std::string& path) {
    csv::Writer w(path);
    w.row({"epoch", "train_loss", "train_acc", "val_loss", "val_acc"});
    for (std::size_t e = 0; e < curves.train_loss.size(); ++e)
        w.row({csv::fmt(e), csv::fmt(curves.train_loss[e]), csv::fmt(curves.train_acc[e]),
               csv::fmt(curves.val_loss[e]), csv::fmt(curves.val_acc[e])});
}

inline void write_predictions_csv(const std::vector<net::Prediction>& predictions,
                                  const std::string& path) {
    csv::Writer w(path);
    w.row({"image_id", "true_label", "predicted", "score1"});
    for (const auto& p : predictions)
        w.row({p.image_id, csv::fmt(p.true_label), csv::fmt(p.predicted),
               csv::fmt(p.score1)});
}

inline std::vector<net::Prediction> read_predictions_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    std::vector<net::Prediction> predictions;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 4)
            throw std::runtime_error("read_predictions_csv: malformed row in " + path);
        net::Prediction p;
        p.image_id = rows[r][0];
        p.true_label = std::stoi(rows[r][1]);
        p.predicted = std::stoi(rows[r][2]);
        p.score1 = std::stod(rows[r][3]);
        predictions.push_back(p);
    }
    return predictions;
}

inline void write_session_json(const RunRecord& record, const std::string& path) {
    json j;
    j["config_id"] = record.config_id;
    j["sampling"] = record.sampling_idx;
    j["init"] = record.init_idx;
    j["split_seed"] = record.split_seed;
    j["init_seed"] = record.init_seed;
    j["converged"] = record.converged;
    j["exclusion_reason"] = record.exclusion_reason;
    j["hit_non_finite"] = record.hit_non_finite;
    j["final_val_acc"] = record.final_val_acc;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

inline RunRecord read_session_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_session_json: cannot open " + path);
    json j;
    in >> j;
    RunRecord record;
    record.config_id = j.at("config_id").get<std::string>();
    record.sampling_idx = j.at("sampling").get<int>();
    record.init_idx = j.at("init").get<int>();
    record.split_seed = j.at("split_seed").get<std::uint64_t>();
    record.init_seed = j.at("init_seed").get<std::uint64_t>();
    record.converged = j.at("converged").get<bool>();
    record.exclusion_reason = j.value("exclusion_reason", std::string{});
    record.hit_non_finite = j.value("hit_non_finite", false);
    record.final_val_acc = j.at("final_val_acc").get<double>();
    return record;
}

/// Sidecar for persisted relevance maps.
inline void write_heatmap_sidecar(const std::string& path, const std::string& image_id,
                                  const std::string& config_id, int sampling_idx,
                                  int init_idx, const std::string& target_mode,
                                  int target_class) {
    json j;
    j["image_id"] = image_id;
    j["config_id"] = config_id;
    j["sampling"] = sampling_idx;
    j["init"] = init_idx;
    j["target_mode"] = target_mode;
    j["target_class"] = target_class;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// One training session: preprocess views, train, screen, write artifacts.
// ---------------------------------------------------------------------------

struct PreparedDataset {
    // preprocessed volumes per config id, aligned with the cohort records
    std::vector<phantom::SubjectRecord> records;
    std::map<std::string, std::vector<Volume>> by_config;
};

/// Generates the cohort once and applies every requested configuration.
inline PreparedDataset prepare_dataset(const ExperimentConfig& cfg) {
    PreparedDataset data;
    data.records = phantom::generate_cohort(cfg.phantom_spec, cfg.n_subjects,
                                            cfg.dataset_seed, cfg.images_per_subject);
    for (const auto& id : cfg.config_ids) {
        const auto& pc = prep::config_from_id(id);
        std::vector<Volume> prepped;
        prepped.reserve(data.records.size());
        for (const auto& record : data.records) {
            const Volume normalized = prep::normalize_to_wm_peak(record.image);
            prepped.push_back(prep::apply_config(normalized, record.brain_mask, pc));
        }
        data.by_config[id] = std::move(prepped);
    }
    return data;
}

inline std::vector<net::LabeledImage> make_views(const PreparedDataset& data,
                                                 const std::string& config_id,
                                                 const std::vector<std::size_t>& indices) {
    const auto& volumes = data.by_config.at(config_id);
    std::vector<net::LabeledImage> views;
    views.reserve(indices.size());
    for (std::size_t idx : indices)
        views.push_back({data.records[idx].image_id, data.records[idx].label,
                         &volumes[idx]});
    return views;
}

/// Trains one (config, sampling, init) session, computes its mean test
/// heatmap when converged, and persists all artifacts under `dir`.
inline RunRecord run_session(const ExperimentConfig& cfg, const PreparedDataset& data,
                             const std::string& config_id, const phantom::Sampling& session,
                             const std::string& dir) {
    RunRecord record;
    record.config_id = config_id;
    record.sampling_idx = session.sampling_idx;
    record.init_idx = session.init_idx;
    record.split_seed = session.split_seed;
    record.init_seed = session.init_seed;
    record.dir = dir;

    const auto train_views = make_views(data, config_id, session.split.train);
    const auto val_views = make_views(data, config_id, session.split.val);
    const auto test_views = make_views(data, config_id, session.split.test);

    const auto& spec = cfg.phantom_spec;
    auto result = net::train(train_views, val_views, test_views, spec.nx, spec.ny,
                             spec.nz, cfg.hyperparams, session.init_seed,
                             mix_seed(session.split_seed, session.init_seed));

    record.hit_non_finite = result.hit_non_finite;
    record.curves = std::move(result.curves);
    record.predictions = std::move(result.test_predictions);
    record.final_val_acc = record.curves.val_acc.empty() ? 0.0 : record.curves.val_acc.back();
    record.converged = convergence_screen(record.curves, record.hit_non_finite,
                                          cfg.convergence_margin, &record.exclusion_reason);

    if (record.converged) {
        lrp::LRPParams params;
        params.epsilon = cfg.lrp_epsilon;
        std::vector<Volume> maps;
        maps.reserve(test_views.size());
        for (std::size_t t = 0; t < test_views.size(); ++t) {
            const int target = cfg.lrp_target_true_class ? test_views[t].label
                                                         : record.predictions[t].predicted;
            maps.push_back(
                lrp::lrp(result.model, *test_views[t].image, target, params).relevance);
        }
        record.mean_test_heatmap = lrp::mean_heatmap(maps);
    }

    fs::create_directories(dir);
    net::save_checkpoint(result.model, dir + "/checkpoint.spm");
    write_curves_csv(record.curves, dir + "/curves.csv");
    write_predictions_csv(record.predictions, dir + "/predictions.csv");
    if (record.converged)
        write_vol1(record.mean_test_heatmap, dir + "/mean_heatmap.vol");
    write_session_json(record, dir + "/session.json");
    return record;
}

/// Dataset manifest: subject ids, classes and generation seeds.
inline void write_manifest(const PreparedDataset& data, const ExperimentConfig& cfg,
                           const std::string& path) {
    json subjects = json::array();
    for (const auto& record : data.records) {
        subjects.push_back({{"subject_id", record.subject_id},
                            {"image_id", record.image_id},
                            {"class", record.label == 1 ? "AD" : "NC"},
                            {"seed", record.seed}});
    }
    json j;
    j["dataset_seed"] = cfg.dataset_seed;
    j["phantom"] = cfg.to_json()["phantom"];
    j["images"] = subjects;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

} // namespace cleverscan::harness

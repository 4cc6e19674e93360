#include "fieldharm/evaluate.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

namespace fieldharm {

std::string to_string(Method m) {
    switch (m) {
        case Method::Fi: return "fi";
        case Method::Ssi: return "ssi";
        case Method::Dt: return "dt";
        case Method::ComImp: return "comimp";
        case Method::Common: return "common";
        case Method::Calibration: return "calibration";
    }
    return "unknown";
}

Method parse_method(const std::string& text) {
    for (Method m : {Method::Fi, Method::Ssi, Method::Dt, Method::ComImp, Method::Common, Method::Calibration}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw Error(Errc::Config, "unknown method '" + text + "' (fi, ssi, dt, comimp, common, calibration)");
}

nlohmann::json config_to_json(const RunConfig& c) {
    return {{"data_root", c.data_root.string()},
            {"method", to_string(c.method)},
            {"align", to_string(c.align)},
            {"template", c.template_montage},
            {"ssi_reg", c.ssi_reg},
            {"ssi_stiffness", c.ssi_stiffness},
            {"ssi_terms", c.ssi_terms},
            {"fi_reg", c.fi_reg},
            {"source_points", c.source_points},
            {"source_fraction", c.source_fraction},
            {"comimp", {{"ridge", c.comimp.ridge}, {"max_iter", c.comimp.max_iter}, {"tol", c.comimp.tol}}},
            {"band", {c.band_low, c.band_high}},
            {"filter_order", c.filter_order},
            {"resample_hz", c.resample_hz},
            {"C", c.C},
            {"seed", c.seed}};
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig c) {
    try {
        if (!j.is_object()) {
            throw Error(Errc::Config, "configuration must be a JSON object");
        }
        static const std::set<std::string> known{"data_root",     "method",     "align",          "template",
                                                 "ssi_reg",       "ssi_stiffness", "ssi_terms",   "fi_reg",
                                                 "source_points", "source_fraction", "comimp",    "band",
                                                 "filter_order",  "resample_hz", "C",              "seed",
                                                 "simulation"};
        for (const auto& [key, value] : j.items()) {
            if (!known.contains(key)) {
                throw Error(Errc::Config, "unknown configuration key '" + key + "'");
            }
        }
        if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
        if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
        if (j.contains("align")) c.align = parse_alignment(j["align"].get<std::string>());
        if (j.contains("template")) c.template_montage = j["template"].get<std::string>();
        c.ssi_reg = j.value("ssi_reg", c.ssi_reg);
        c.ssi_stiffness = j.value("ssi_stiffness", c.ssi_stiffness);
        c.ssi_terms = j.value("ssi_terms", c.ssi_terms);
        c.fi_reg = j.value("fi_reg", c.fi_reg);
        c.source_points = j.value("source_points", c.source_points);
        c.source_fraction = j.value("source_fraction", c.source_fraction);
        if (j.contains("comimp")) {
            const auto& ci = j["comimp"];
            c.comimp.ridge = ci.value("ridge", c.comimp.ridge);
            c.comimp.max_iter = ci.value("max_iter", c.comimp.max_iter);
            c.comimp.tol = ci.value("tol", c.comimp.tol);
        }
        if (j.contains("band")) {
            const auto band = j["band"].get<std::vector<double>>();
            if (band.size() != 2) {
                throw Error(Errc::Config, "band must be [low, high]");
            }
            c.band_low = band[0];
            c.band_high = band[1];
        }
        c.filter_order = j.value("filter_order", c.filter_order);
        c.resample_hz = j.value("resample_hz", c.resample_hz);
        c.C = j.value("C", c.C);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Config, std::string("invalid configuration value: ") + e.what());
    }
    if (!(c.band_low > 0.0 && c.band_low < c.band_high) || !(c.resample_hz > 0.0) || !(c.C > 0.0) ||
        !(c.fi_reg >= 0.0) || !(c.ssi_reg >= 0.0) || c.source_points < 4 || c.comimp.max_iter < 1) {
        throw Error(Errc::Config, "configuration values out of range");
    }
    return c;
}

std::string config_hash(const RunConfig& c) {
    nlohmann::json j = config_to_json(c);
    j.erase("data_root");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Montage template_montage(const RunConfig& c) {
    if (c.template_montage == "builtin-17") {
        return template_17();
    }
    return read_montage_json(c.template_montage);
}

Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& config) {
    Dataset ds;
    ds.manifest = read_manifest(dir);
    std::map<std::string, std::size_t> slot;
    for (const auto& s : ds.manifest.subjects) {
        slot[s] = ds.subjects.size();
        SubjectData sd;
        sd.dataset = ds.manifest.name;
        sd.subject = s;
        sd.epochs.channels = ds.manifest.montage.names();
        sd.epochs.sfreq = config.resample_hz;
        ds.subjects.push_back(std::move(sd));
    }
    for (const auto& run : ds.manifest.runs) {
        auto it = slot.find(run.subject);
        if (it == slot.end()) {
            throw Error(Errc::InvalidSpec, "manifest run references unknown subject " + run.subject);
        }
        SubjectData& sd = ds.subjects[it->second];
        const auto stem = dir / run.stem;
        EpochSet raw = read_epoch_set(stem, LabelAccess::Drop);
        if (raw.channels != sd.epochs.channels) {
            throw Error(Errc::ChannelOrderMismatch, "run " + stem.string() + " does not follow the manifest montage");
        }
        EpochSet clean = resample(bandpass_filtfilt(raw, config.band_low, config.band_high, config.filter_order),
                                  config.resample_hz);
        for (auto& e : clean.epochs) {
            sd.epochs.epochs.push_back(std::move(e));
            sd.origins.push_back({run.session, run.run});
        }
        sd.stems.push_back(stem);
    }
    return ds;
}

std::vector<Dataset> load_datasets(const std::filesystem::path& root, const RunConfig& config) {
    if (!std::filesystem::is_directory(root)) {
        throw Error(Errc::Io, "data root " + root.string() + " is not a directory");
    }
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<Dataset> out;
    for (const auto& d : dirs) {
        out.push_back(load_dataset(d, config));
    }
    return out;
}

std::vector<int> load_labels(const SubjectData& subject) {
    std::vector<int> labels;
    for (const auto& stem : subject.stems) {
        const auto run = read_labels(stem);
        labels.insert(labels.end(), run.begin(), run.end());
    }
    if (labels.size() != subject.epochs.n_epochs()) {
        throw Error(Errc::DimMismatch, "label files do not match the loaded epochs of " + subject.subject);
    }
    return labels;
}

double RunResult::mean_accuracy() const {
    if (subjects.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& s : subjects) {
        sum += s.accuracy;
    }
    return sum / static_cast<double>(subjects.size());
}

std::string RunResult::method_name() const {
    return to_string(method) + (align == Alignment::None ? "-noalign" : "");
}

nlohmann::json result_to_json(const RunResult& r) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& s : r.subjects) {
        subjects.push_back({{"id", s.id}, {"accuracy", s.accuracy}, {"n_epochs", s.n_epochs}});
    }
    nlohmann::json j{{"method", to_string(r.method)},
                     {"align", to_string(r.align)},
                     {"target", r.target},
                     {"config_hash", r.config_hash},
                     {"train_datasets", r.train_datasets},
                     {"feature_channels", r.feature_channels},
                     {"mean_accuracy", r.mean_accuracy()},
                     {"subjects", subjects},
                     {"timing",
                      {{"harmonize_s", r.timing.harmonize_s},
                       {"mean_s", r.timing.mean_s},
                       {"fit_s", r.timing.fit_s},
                       {"predict_s", r.timing.predict_s}}}};
    if (r.method == Method::Common) {
        j["retained_channels"] = r.retained_channels;
    }
    return j;
}

RunResult result_from_json(const nlohmann::json& j) {
    try {
        RunResult r;
        r.method = parse_method(j.at("method").get<std::string>());
        r.align = parse_alignment(j.value("align", std::string("recenter")));
        r.target = j.at("target").get<std::string>();
        r.config_hash = j.value("config_hash", std::string());
        r.train_datasets = j.value("train_datasets", std::vector<std::string>{});
        r.feature_channels = j.value("feature_channels", Eigen::Index{0});
        r.retained_channels = j.value("retained_channels", std::vector<std::string>{});
        for (const auto& s : j.at("subjects")) {
            r.subjects.push_back({s.at("id").get<std::string>(), s.at("accuracy").get<double>(),
                                  s.at("n_epochs").get<std::size_t>(), {}});
        }
        if (j.contains("timing")) {
            const auto& t = j["timing"];
            r.timing = {t.value("harmonize_s", 0.0), t.value("mean_s", 0.0), t.value("fit_s", 0.0),
                        t.value("predict_s", 0.0)};
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed results file: ") + e.what());
    }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

EpochSet select_channels(const EpochSet& x, const std::vector<std::string>& names) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < x.channels.size(); ++i) {
        index.emplace(channel_key(x.channels[i]), static_cast<Eigen::Index>(i));
    }
    std::vector<Eigen::Index> rows;
    for (const auto& n : names) {
        auto it = index.find(channel_key(n));
        if (it == index.end()) {
            throw Error(Errc::UnknownChannel, "channel " + n + " missing from epochs");
        }
        rows.push_back(it->second);
    }
    EpochSet out;
    out.channels = names;
    out.sfreq = x.sfreq;
    out.labels = x.labels;
    for (const auto& e : x.epochs) {
        Matrix m(static_cast<Eigen::Index>(rows.size()), e.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            m.row(static_cast<Eigen::Index>(r)) = e.row(rows[r]);
        }
        out.epochs.push_back(std::move(m));
    }
    return out;
}

std::string subject_id(const SubjectData& s) { return s.dataset + "/" + s.subject; }

struct Harmonized {
    std::vector<std::vector<SpdMatrix>> covariances;  // per subject, training subjects first
    std::vector<std::string> channels;
    std::vector<std::string> retained;
};

// Brings every subject (training first, then target) to one channel space
// and returns their covariances.
Harmonized harmonize(const std::vector<const SubjectData*>& subjects,
                     const std::vector<const DatasetManifest*>& manifests,
                     const std::vector<const DatasetManifest*>& train_manifests, const RunConfig& config,
                     std::size_t n_train) {
    Harmonized h;
    h.covariances.resize(subjects.size());
    const Montage tmpl = template_montage(config);

    switch (config.method) {
        case Method::Fi:
        case Method::Ssi: {
            std::map<std::string, InterpOperator> ops;
            if (config.method == Method::Fi) {
                const SourceSpace space = fibonacci_source_grid(config.source_points, config.source_fraction,
                                                                tmpl.head_radius());
                const Leadfield lf_tmpl = leadfield(space, tmpl);
                for (const auto* m : manifests) {
                    ops.emplace(m->name, fi_operator(m->montage, tmpl, leadfield(space, m->montage), lf_tmpl,
                                                     config.fi_reg));
                }
            } else {
                SsiOptions opts{config.ssi_stiffness, config.ssi_terms, config.ssi_reg};
                for (const auto* m : manifests) {
                    ops.emplace(m->name, ssi_operator(m->montage, tmpl, opts));
                }
            }
            parallel_for(subjects.size(), [&](std::size_t i) {
                h.covariances[i] = epochs_to_covs(apply_operator(ops.at(subjects[i]->dataset), subjects[i]->epochs));
            });
            h.channels = tmpl.names();
            break;
        }
        case Method::Common: {
            std::vector<Montage> montages;
            for (const auto* m : manifests) {
                montages.push_back(m->montage);
            }
            h.channels = common_channels(montages, tmpl.names()).names();
            h.retained = h.channels;
            parallel_for(subjects.size(), [&](std::size_t i) {
                h.covariances[i] = epochs_to_covs(select_channels(subjects[i]->epochs, h.channels));
            });
            break;
        }
        case Method::Dt: {
            std::vector<std::vector<std::string>> lists;
            for (const auto* m : manifests) {
                lists.push_back(m->montage.names());
            }
            h.channels = union_channels(lists, tmpl.names());
            parallel_for(subjects.size(), [&](std::size_t i) {
                const auto native = epochs_to_covs(subjects[i]->epochs);
                for (const auto& c : native) {
                    h.covariances[i].push_back(dt_expand(c, subjects[i]->epochs.channels, h.channels).matrix);
                }
            });
            break;
        }
        case Method::ComImp: {
            std::vector<std::vector<std::string>> lists;
            for (const auto* m : train_manifests) {
                lists.push_back(m->montage.names());
            }
            h.channels = union_channels(lists, tmpl.names());
            std::set<std::string> known;
            for (const auto& n : h.channels) {
                known.insert(channel_key(n));
            }
            std::vector<EpochSet> training;
            for (std::size_t i = 0; i < n_train; ++i) {
                training.push_back(subjects[i]->epochs);
            }
            const ImputerModel model = comimp_fit(training, h.channels, config.comimp);
            parallel_for(subjects.size(), [&](std::size_t i) {
                // target channels the training pool never saw cannot be imputed into; drop them
                std::vector<std::string> kept;
                for (const auto& n : subjects[i]->epochs.channels) {
                    if (known.contains(channel_key(n))) {
                        kept.push_back(n);
                    }
                }
                if (kept.empty()) {
                    throw Error(Errc::EmptyIntersection,
                                "subject " + subject_id(*subjects[i]) + " shares no channel with the training union");
                }
                h.covariances[i] =
                    epochs_to_covs(comimp_transform(model, select_channels(subjects[i]->epochs, kept)));
            });
            break;
        }
        case Method::Calibration:
            throw Error(Errc::Config, "calibration does not harmonize across datasets");
    }
    return h;
}

}  // namespace

RunResult evaluate_transfer(std::span<const Dataset* const> train, const Dataset& target, const RunConfig& config) {
    if (train.empty()) {
        throw Error(Errc::DegenerateInput, "transfer needs at least one training dataset");
    }
    RunResult result;
    result.method = config.method;
    result.align = config.align;
    result.target = target.manifest.name;
    result.config_hash = config_hash(config);

    if (config.method == Method::Calibration) {
        for (const auto& s : target.subjects) {
            result.subjects.push_back(
                {subject_id(s), calibration(s, config), s.epochs.n_epochs() - s.epochs.n_epochs() / 2, {}});
        }
        result.feature_channels = static_cast<Eigen::Index>(target.manifest.montage.size());
        std::sort(result.subjects.begin(), result.subjects.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        return result;
    }

    // Canonical order keeps the result independent of how the pool was listed.
    std::vector<const Dataset*> pool(train.begin(), train.end());
    std::sort(pool.begin(), pool.end(),
              [](const Dataset* a, const Dataset* b) { return a->manifest.name < b->manifest.name; });

    std::vector<const SubjectData*> subjects;
    std::vector<const DatasetManifest*> manifests;
    std::vector<const DatasetManifest*> train_manifests;
    for (const Dataset* d : pool) {
        if (d->manifest.name == target.manifest.name) {
            throw Error(Errc::InvalidSpec, "target dataset " + d->manifest.name + " is also in the training pool");
        }
        result.train_datasets.push_back(d->manifest.name);
        manifests.push_back(&d->manifest);
        train_manifests.push_back(&d->manifest);
        for (const auto& s : d->subjects) {
            subjects.push_back(&s);
        }
    }
    const std::size_t n_train = subjects.size();
    manifests.push_back(&target.manifest);
    for (const auto& s : target.subjects) {
        subjects.push_back(&s);
    }

    std::vector<std::vector<int>> train_labels(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        train_labels[i] = load_labels(*subjects[i]);
    }

    auto start = Clock::now();
    Harmonized h = harmonize(subjects, manifests, train_manifests, config, n_train);
    result.timing.harmonize_s = seconds_since(start);
    result.feature_channels = static_cast<Eigen::Index>(h.channels.size());
    result.retained_channels = h.retained;

    start = Clock::now();
    std::vector<DomainRecord> domains(subjects.size());
    parallel_for(subjects.size(), [&](std::size_t i) {
        const SubjectData& s = *subjects[i];
        const bool is_train = i < n_train;
        const MeanScope scope = is_train ? MeanScope::AllData : calibration_scope(s.origins);
        const auto idx = scope_indices(s.origins, scope);
        domains[i] = make_domain({s.dataset, s.subject}, std::move(h.covariances[i]),
                                 is_train ? train_labels[i] : std::vector<int>{}, idx, scope, config.align);
    });
    result.timing.mean_s = seconds_since(start);

    start = Clock::now();
    LogisticOptions lopts;
    lopts.C = config.C;
    const Classifier clf =
        fit_pipeline(std::span<const DomainRecord>(domains.data(), n_train), h.channels, lopts);
    result.timing.fit_s = seconds_since(start);

    start = Clock::now();
    std::vector<Prediction> predictions(subjects.size() - n_train);
    parallel_for(predictions.size(), [&](std::size_t k) { predictions[k] = predict(clf, domains[n_train + k]); });
    result.timing.predict_s = seconds_since(start);

    // Scoring is the only place target labels are read.
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const SubjectData& s = *subjects[n_train + k];
        const auto truth = load_labels(s);
        std::size_t correct = 0;
        for (std::size_t e = 0; e < truth.size(); ++e) {
            correct += predictions[k].labels[e] == truth[e] ? 1 : 0;
        }
        result.subjects.push_back({subject_id(s), static_cast<double>(correct) / static_cast<double>(truth.size()),
                                   truth.size(), predictions[k].labels});
    }
    std::sort(result.subjects.begin(), result.subjects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return result;
}

RunResult lodo(std::span<const Dataset> data, const std::string& target_name, const RunConfig& config) {
    if (data.size() < 2) {
        throw Error(Errc::DegenerateInput, "leave-one-dataset-out needs at least two datasets");
    }
    const Dataset* target = nullptr;
    std::vector<const Dataset*> train;
    for (const auto& d : data) {
        if (d.manifest.name == target_name) {
            target = &d;
        } else {
            train.push_back(&d);
        }
    }
    if (target == nullptr) {
        throw Error(Errc::Config, "no dataset named '" + target_name + "'");
    }
    return evaluate_transfer(train, *target, config);
}

double calibration(const SubjectData& subject, const RunConfig& config) {
    const auto labels = load_labels(subject);
    const std::size_t n = labels.size();
    const std::size_t half = n / 2;
    auto count = [&](std::size_t lo, std::size_t hi, int cls) {
        return std::count(labels.begin() + static_cast<long>(lo), labels.begin() + static_cast<long>(hi), cls);
    };
    for (int cls : {0, 1}) {
        if (count(0, half, cls) < 4 || count(half, n, cls) < 4) {
            throw Error(Errc::TooFewEpochs, "calibration needs 4 epochs per class in each half of " +
                                                subject_id(subject));
        }
    }
    auto covs = epochs_to_covs(subject.epochs);
    std::vector<SpdMatrix> first(covs.begin(), covs.begin() + static_cast<long>(half));
    std::vector<SpdMatrix> second(covs.begin() + static_cast<long>(half), covs.end());
    std::vector<int> first_labels(labels.begin(), labels.begin() + static_cast<long>(half));

    std::vector<std::size_t> idx(half);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    DomainRecord train = make_domain({subject.dataset, subject.subject}, std::move(first), std::move(first_labels),
                                     idx, MeanScope::FirstHalf, config.align);
    DomainRecord test{{subject.dataset, subject.subject}, std::move(second), {}, train.whitening_mean,
                      MeanScope::FirstHalf};
    LogisticOptions lopts;
    lopts.C = config.C;
    const Classifier clf = fit_pipeline(std::span<const DomainRecord>(&train, 1), subject.epochs.channels, lopts);
    const Prediction p = predict(clf, test);
    std::size_t correct = 0;
    for (std::size_t e = 0; e < p.labels.size(); ++e) {
        correct += p.labels[e] == labels[half + e] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(p.labels.size());
}

std::vector<CurvePoint> learning_curve(std::span<const Dataset> data, const std::string& target_name,
                                       const std::vector<std::string>& order, const RunConfig& config) {
    std::map<std::string, const Dataset*> by_name;
    for (const auto& d : data) {
        by_name[d.manifest.name] = &d;
    }
    auto target_it = by_name.find(target_name);
    if (target_it == by_name.end()) {
        throw Error(Errc::Config, "no dataset named '" + target_name + "'");
    }
    const Dataset& target = *target_it->second;

    RunConfig fi_config = config;
    fi_config.method = Method::Fi;

    std::vector<CurvePoint> curve;
    std::vector<const Dataset*> pool;
    std::set<std::string> seen;
    for (const auto& name : order) {
        auto it = by_name.find(name);
        if (it == by_name.end() || name == target_name) {
            throw Error(Errc::Config, "invalid training dataset '" + name + "' in learning-curve order");
        }
        pool.push_back(it->second);
        for (const auto& n : it->second->manifest.montage.names()) {
            seen.insert(channel_key(n));
        }
        CurvePoint point;
        for (const Dataset* d : pool) {
            point.included.push_back(d->manifest.name);
        }
        for (const auto& n : target.manifest.montage.names()) {
            point.target_channels_seen += seen.contains(channel_key(n)) ? 1 : 0;
        }
        point.result = evaluate_transfer(pool, target, config);
        point.reference = config.method == Method::Fi && config.align == Alignment::Recenter
                              ? point.result
                              : evaluate_transfer(pool, target, fi_config);
        for (std::size_t s = 0; s < point.result.subjects.size(); ++s) {
            point.diff_vs_reference.push_back(point.result.subjects[s].accuracy -
                                              point.reference.subjects[s].accuracy);
        }
        curve.push_back(std::move(point));
    }
    return curve;
}

nlohmann::json curve_to_json(const std::vector<CurvePoint>& curve) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : curve) {
        out.push_back({{"included", p.included},
                       {"target_channels_seen", p.target_channels_seen},
                       {"result", result_to_json(p.result)},
                       {"reference", result_to_json(p.reference)},
                       {"diff_vs_reference", p.diff_vs_reference}});
    }
    return out;
}

std::string significance_stars(double p) {
    if (p > 5e-2) return "ns";
    if (p > 1e-2) return "*";
    if (p > 1e-3) return "**";
    if (p > 1e-4) return "***";
    return "****";
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw Error(Errc::DimMismatch, "paired samples differ in length");
    }
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (diff != 0.0) {
            d.push_back(diff);
        }
    }
    const std::size_t n = d.size();
    if (n < 5) {
        throw Error(Errc::TooFewPairs, "need at least 5 non-zero paired differences, got " + std::to_string(n));
    }

    // Mid-ranks of |d|, stored doubled so they stay integers.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    std::vector<long> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        const double v = std::abs(d[order[i]]);
        while (j + 1 < n && std::abs(std::abs(d[order[j + 1]]) - v) <= 1e-12 * std::max(1.0, v)) {
            ++j;
        }
        const long doubled = static_cast<long>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) {
            rank2[order[k]] = doubled;
        }
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }

    long w_plus2 = 0;
    long total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0.0) {
            w_plus2 += rank2[i];
        }
    }

    WilcoxonResult r;
    r.n = n;
    r.statistic = static_cast<double>(w_plus2) / 2.0;
    if (n <= 25) {
        // counts[s] = number of sign patterns whose doubled W+ equals s
        std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
        counts[0] = 1.0;
        long reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (long s = reach; s >= 0; --s) {
                if (counts[static_cast<std::size_t>(s)] != 0.0) {
                    counts[static_cast<std::size_t>(s + rank2[i])] += counts[static_cast<std::size_t>(s)];
                }
            }
            reach += rank2[i];
        }
        double lower = 0.0;
        double upper = 0.0;
        for (long s = 0; s <= total2; ++s) {
            if (s <= w_plus2) lower += counts[static_cast<std::size_t>(s)];
            if (s >= w_plus2) upper += counts[static_cast<std::size_t>(s)];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        r.exact = true;
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = std::max(0.0, std::abs(r.statistic - mean) - 0.5) / std::sqrt(var);
        r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
        r.exact = false;
    }
    r.stars = significance_stars(r.p_value);
    return r;
}

}  // namespace fieldharm

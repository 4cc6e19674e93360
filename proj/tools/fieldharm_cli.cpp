// Command-line driver: simulate, harmonize, lodo, learning-curve, stats.

#include "fieldharm/error.hpp"
#include "fieldharm/evaluate.hpp"
#include "fieldharm/parallel.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>
#include <map>

using namespace fieldharm;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Config, "cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::Config, "malformed JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::Io, "cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

void print_config(const std::string& command, const json& resolved) {
    std::cout << "# " << command << " configuration\n" << resolved.dump(2) << '\n' << std::flush;
}

// Config files may hold run settings, a "simulation" block, or both.
json run_section(const json& file) {
    json j = file;
    j.erase("simulation");
    return j;
}

SimSpec simulation_section(const json& file) {
    return sim_spec_from_json(file.contains("simulation") ? file.at("simulation") : file);
}

struct RunFlags {
    std::string config;
    std::string data;
    std::string method;
    std::string align;
    std::string tmpl;
    std::optional<double> fi_reg;
    std::optional<double> ssi_reg;
    std::optional<double> resample;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--config", f.config, "JSON configuration file");
    app->add_option("--data", f.data, "directory holding the dataset folders")->required();
    app->add_option("--method", f.method, "fi, ssi, dt, comimp, common or calibration");
    app->add_option("--align", f.align, "recenter or none");
    app->add_option("--template", f.tmpl, "template montage JSON or builtin-17");
    app->add_option("--fi-reg", f.fi_reg, "field interpolation regularization");
    app->add_option("--ssi-reg", f.ssi_reg, "spherical spline regularization");
    app->add_option("--resample", f.resample, "target sampling rate in Hz");
}

RunConfig resolve(const RunFlags& f) {
    RunConfig c;
    if (!f.config.empty()) {
        c = config_from_json(run_section(read_json_file(f.config)));
    }
    c.data_root = f.data;
    if (!f.method.empty()) c.method = parse_method(f.method);
    if (!f.align.empty()) c.align = parse_alignment(f.align);
    if (!f.tmpl.empty()) c.template_montage = f.tmpl;
    if (f.fi_reg) c.fi_reg = *f.fi_reg;
    if (f.ssi_reg) c.ssi_reg = *f.ssi_reg;
    if (f.resample) c.resample_hz = *f.resample;
    // re-validate after overrides
    return config_from_json(config_to_json(c));
}

std::vector<RunResult> results_from_file(const std::string& path) {
    const json j = read_json_file(path);
    std::vector<RunResult> out;
    if (j.is_array()) {
        for (const auto& r : j) {
            out.push_back(result_from_json(r));
        }
    } else {
        out.push_back(result_from_json(j));
    }
    return out;
}

int cmd_simulate(const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 std::optional<double> erd) {
    SimSpec spec = simulation_section(read_json_file(config));
    if (seed) spec.seed = *seed;
    if (erd) spec.erd_factor = *erd;
    spec.validate();
    print_config("simulate", sim_spec_to_json(spec));
    const auto manifests = generate(spec, out_dir);
    for (const auto& m : manifests) {
        std::cout << m.name << ": " << m.subjects.size() << " subjects, " << m.montage.size() << " channels, "
                  << m.runs.size() << " runs\n";
    }
    return 0;
}

int cmd_harmonize(const RunFlags& flags, const std::string& dataset, const std::string& out) {
    const RunConfig c = resolve(flags);
    print_config("harmonize", config_to_json(c));
    const DatasetManifest m = read_manifest(std::filesystem::path(c.data_root) / dataset);
    const Montage tmpl = template_montage(c);
    InterpOperator op;
    if (c.method == Method::Fi) {
        const SourceSpace space = fibonacci_source_grid(c.source_points, c.source_fraction, tmpl.head_radius());
        op = fi_operator(m.montage, tmpl, leadfield(space, m.montage), leadfield(space, tmpl), c.fi_reg);
    } else if (c.method == Method::Ssi) {
        op = ssi_operator(m.montage, tmpl, {c.ssi_stiffness, c.ssi_terms, c.ssi_reg});
    } else {
        throw Error(Errc::Config, "harmonize exports interpolation operators; use --method fi or ssi");
    }
    json j = operator_to_json(op);
    j["config_hash"] = config_hash(c);
    write_json_file(j, out);
    std::cout << "operator " << op.matrix.rows() << " x " << op.matrix.cols() << " written to " << out << '\n';
    return 0;
}

void report(const RunResult& r) {
    std::cout << r.method_name() << " -> " << r.target << ": mean accuracy " << r.mean_accuracy() << " over "
              << r.subjects.size() << " subjects (" << r.feature_channels << " channels)\n";
    if (r.method == Method::Common) {
        std::cout << "retained channels (" << r.retained_channels.size() << "):";
        for (const auto& n : r.retained_channels) {
            std::cout << ' ' << n;
        }
        std::cout << '\n';
    }
}

int cmd_lodo(const RunFlags& flags, const std::string& target, const std::string& out) {
    const RunConfig c = resolve(flags);
    print_config("lodo", config_to_json(c));
    const auto data = load_datasets(c.data_root, c);
    std::vector<std::string> targets;
    if (target == "all") {
        for (const auto& d : data) {
            targets.push_back(d.manifest.name);
        }
    } else {
        targets.push_back(target);
    }
    json all = json::array();
    for (const auto& t : targets) {
        const RunResult r = lodo(data, t, c);
        report(r);
        all.push_back(result_to_json(r));
    }
    write_json_file(targets.size() == 1 ? all[0] : all, out);
    return 0;
}

int cmd_learning_curve(const RunFlags& flags, const std::string& target, std::vector<std::string> order,
                       const std::string& out) {
    const RunConfig c = resolve(flags);
    print_config("learning-curve", config_to_json(c));
    const auto data = load_datasets(c.data_root, c);
    if (order.empty()) {
        for (const auto& d : data) {
            if (d.manifest.name != target) {
                order.push_back(d.manifest.name);
            }
        }
    }
    const auto curve = learning_curve(data, target, order, c);
    for (const auto& p : curve) {
        double mean_diff = 0.0;
        for (double d : p.diff_vs_reference) {
            mean_diff += d / static_cast<double>(p.diff_vs_reference.size());
        }
        std::cout << p.included.size() << " datasets, " << p.target_channels_seen << " target channels seen: accuracy "
                  << p.result.mean_accuracy() << ", difference to fi " << mean_diff << '\n';
    }
    write_json_file(curve_to_json(curve), out);
    return 0;
}

int cmd_stats(const std::string& a_path, const std::string& b_path) {
    print_config("stats", json{{"a", a_path}, {"b", b_path}});
    std::map<std::string, double> a;
    std::map<std::string, double> b;
    std::string a_name, b_name;
    for (const auto& r : results_from_file(a_path)) {
        a_name = r.method_name();
        for (const auto& s : r.subjects) a[s.id] = s.accuracy;
    }
    for (const auto& r : results_from_file(b_path)) {
        b_name = r.method_name();
        for (const auto& s : r.subjects) b[s.id] = s.accuracy;
    }
    std::vector<double> xa, xb;
    for (const auto& [id, acc] : a) {
        auto it = b.find(id);
        if (it == b.end()) {
            throw Error(Errc::Config, "subject " + id + " is missing from " + b_path);
        }
        xa.push_back(acc);
        xb.push_back(it->second);
    }
    if (a.size() != b.size()) {
        throw Error(Errc::Config, "the results files cover different subjects");
    }
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
        zeros += xa[i] == xb[i] ? 1 : 0;
    }
    std::cout << a_name << " vs " << b_name << ": " << xa.size() << " paired subjects, " << zeros
              << " zero differences dropped\n";
    try {
        const WilcoxonResult w = wilcoxon_signed_rank(xa, xb);
        std::cout << "W+ = " << w.statistic << ", n = " << w.n << ", p = " << w.p_value << " ("
                  << (w.exact ? "exact" : "normal approximation") << ") " << w.stars << '\n';
    } catch (const Error& e) {
        if (e.code() != Errc::TooFewPairs) {
            throw;
        }
        std::cout << "ns (too few non-zero pairs for the test: " << e.what() << ")\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fieldharm: harmonize multichannel EEG datasets and benchmark transfer"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = all cores)");

    std::string sim_config, sim_out;
    std::optional<std::uint64_t> sim_seed;
    std::optional<double> sim_erd;
    auto* simulate = app.add_subcommand("simulate", "generate synthetic datasets");
    simulate->add_option("--config", sim_config, "simulation spec JSON")->required();
    simulate->add_option("--out", sim_out, "output directory")->required();
    simulate->add_option("--seed", sim_seed, "override the spec seed");
    simulate->add_option("--erd", sim_erd, "override the erd factor");

    RunFlags harm_flags;
    std::string harm_dataset, harm_out = "operator.json";
    auto* harmonize = app.add_subcommand("harmonize", "export a dataset-to-template interpolation operator");
    add_run_flags(harmonize, harm_flags);
    harmonize->add_option("--dataset", harm_dataset, "dataset name")->required();
    harmonize->add_option("--out", harm_out, "operator JSON path");

    RunFlags lodo_flags;
    std::string lodo_target, lodo_out = "results.json";
    auto* lodo_cmd = app.add_subcommand("lodo", "leave-one-dataset-out evaluation");
    add_run_flags(lodo_cmd, lodo_flags);
    lodo_cmd->add_option("--target", lodo_target, "held-out dataset name or 'all'")->required();
    lodo_cmd->add_option("--out", lodo_out, "results JSON path");

    RunFlags curve_flags;
    std::string curve_target, curve_out = "learning_curve.json";
    std::vector<std::string> curve_order;
    auto* curve = app.add_subcommand("learning-curve", "add training datasets one at a time");
    add_run_flags(curve, curve_flags);
    curve->add_option("--target", curve_target, "held-out dataset name")->required();
    curve->add_option("--order", curve_order, "training datasets in inclusion order")->delimiter(',');
    curve->add_option("--out", curve_out, "curve JSON path");

    std::string stats_a, stats_b;
    auto* stats = app.add_subcommand("stats", "paired Wilcoxon test between two results files");
    stats->add_option("a", stats_a, "first results file")->required();
    stats->add_option("b", stats_b, "second results file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        set_thread_count(threads);
        if (*simulate) return cmd_simulate(sim_config, sim_out, sim_seed, sim_erd);
        if (*harmonize) return cmd_harmonize(harm_flags, harm_dataset, harm_out);
        if (*lodo_cmd) return cmd_lodo(lodo_flags, lodo_target, lodo_out);
        if (*curve) return cmd_learning_curve(curve_flags, curve_target, curve_order, curve_out);
        if (*stats) return cmd_stats(stats_a, stats_b);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        const bool config = e.code() == Errc::Config || e.code() == Errc::InvalidSpec;
        return config ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}

#include "unlearn/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "unlearn/io_util.hpp"
#include "unlearn/report.hpp"

namespace unlearn::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kForgetCorpusFile = "forget.jsonl";
constexpr const char* kRetainCorpusFile = "retain.jsonl";
constexpr const char* kForgetProbesFile = "forget_probes.jsonl";
constexpr const char* kRetainProbesFile = "retain_probes.jsonl";

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw InputError("cannot parse " + what + ": " + e.what());
    }
}

// Accepts inline JSON ('{'-prefixed) or a path to a JSON file.
std::string json_arg_text(const std::string& arg) {
    std::size_t i = 0;
    while (i < arg.size() && std::isspace(static_cast<unsigned char>(arg[i]))) ++i;
    if (i < arg.size() && arg[i] == '{') return arg;
    return read_file(arg);
}

struct DataFiles {
    Corpus forget_corpus;
    Corpus retain_corpus;
    ProbeSet forget_probes;
    ProbeSet retain_probes;
};

DataFiles load_data_dir(const std::string& dir) {
    DataFiles files;
    files.forget_corpus = load_corpus(fs::path(dir) / kForgetCorpusFile);
    files.retain_corpus = load_corpus(fs::path(dir) / kRetainCorpusFile);
    files.forget_probes = load_probes(fs::path(dir) / kForgetProbesFile);
    files.retain_probes = load_probes(fs::path(dir) / kRetainProbesFile);
    return files;
}

json input_fingerprint(const std::string& path) {
    return json{{"path", path}, {"fnv64", fnv1a64_hex(read_file(path))}};
}

json data_dir_fingerprint(const std::string& dir) {
    json inputs;
    for (const char* name :
         {kForgetCorpusFile, kRetainCorpusFile, kForgetProbesFile, kRetainProbesFile}) {
        inputs[name] = input_fingerprint((fs::path(dir) / name).string());
    }
    return inputs;
}

void write_manifest(const fs::path& path, json manifest) {
    manifest["tool_version"] = kToolVersion;
    write_file_atomic(path, manifest.dump(2) + "\n");
}

json dims_to_json(const ModelDims& dims) {
    return json{{"vocab_size", dims.vocab_size},
                {"embed_dim", dims.embed_dim},
                {"hidden_dim", dims.hidden_dim},
                {"context", dims.context}};
}

class WallClock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

CombinerKind parse_combiner_name(const std::string& name) {
    static const std::map<std::string, CombinerKind> kNames = {
        {"naive", CombinerKind::Naive},
        {"pcgrad-global", CombinerKind::PCGradGlobal},
        {"pcgrad-module", CombinerKind::PCGradModuleWise},
        {"sago", CombinerKind::SAGO},
    };
    const auto it = kNames.find(name);
    if (it == kNames.end()) {
        throw InputError("unknown combiner '" + name +
                         "' (valid: naive, pcgrad-global, pcgrad-module, sago)");
    }
    return it->second;
}

ForgetObjective parse_objective_name(const std::string& name) {
    static const std::map<std::string, ForgetObjective> kNames = {
        {"ga", ForgetObjective::GA},
        {"npo", ForgetObjective::NPO},
        {"simnpo", ForgetObjective::SimNPO},
    };
    const auto it = kNames.find(name);
    if (it == kNames.end()) {
        throw InputError("unknown forget objective '" + name + "' (valid: ga, npo, simnpo)");
    }
    return it->second;
}

namespace {

ZeroProductPolicy parse_policy_name(const std::string& name) {
    if (name == "forget-wins") return ZeroProductPolicy::ForgetWins;
    if (name == "retain-wins") return ZeroProductPolicy::RetainWins;
    throw InputError("unknown zero_product_policy '" + name +
                     "' (valid: forget-wins, retain-wins)");
}

UnlearnConfig unlearn_config_from_json(const json& doc) {
    UnlearnConfig cfg;
    try {
        if (doc.contains("forget_objective")) {
            cfg.forget_objective = parse_objective_name(doc.at("forget_objective").get<std::string>());
        }
        if (doc.contains("combiner")) {
            cfg.combiner = parse_combiner_name(doc.at("combiner").get<std::string>());
        }
        if (doc.contains("alpha")) cfg.alpha = doc.at("alpha").get<double>();
        if (doc.contains("gamma")) cfg.gamma = doc.at("gamma").get<double>();
        if (doc.contains("beta")) cfg.beta = doc.at("beta").get<double>();
        if (doc.contains("gamma_margin")) cfg.gamma_margin = doc.at("gamma_margin").get<double>();
        cfg.eta = doc.at("eta").get<double>();
        cfg.steps = doc.at("steps").get<int>();
        if (doc.contains("forget_batch")) cfg.forget_batch = doc.at("forget_batch").get<int>();
        if (doc.contains("retain_batch")) cfg.retain_batch = doc.at("retain_batch").get<int>();
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("zero_product_policy")) {
            cfg.zero_product_policy =
                parse_policy_name(doc.at("zero_product_policy").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed unlearn config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace

UnlearnConfig parse_unlearn_config(const std::string& json_text) {
    return unlearn_config_from_json(parse_json_text(json_text, "unlearn config"));
}

std::string unlearn_config_to_json(const UnlearnConfig& cfg) {
    json doc;
    doc["forget_objective"] = forget_objective_name(cfg.forget_objective);
    doc["combiner"] = combiner_name(cfg.combiner);
    doc["alpha"] = cfg.alpha;
    doc["gamma"] = cfg.gamma;
    doc["beta"] = cfg.beta;
    doc["gamma_margin"] = cfg.gamma_margin;
    doc["eta"] = cfg.eta;
    doc["steps"] = cfg.steps;
    doc["forget_batch"] = cfg.forget_batch;
    doc["retain_batch"] = cfg.retain_batch;
    doc["seed"] = cfg.seed;
    doc["zero_product_policy"] = cfg.zero_product_policy == ZeroProductPolicy::ForgetWins
                                     ? "forget-wins"
                                     : "retain-wins";
    return doc.dump(2) + "\n";
}

ModelDims parse_dims(const std::string& json_text) {
    const json doc = parse_json_text(json_text, "model dims");
    ModelDims dims;
    try {
        dims.vocab_size = doc.at("vocab_size").get<int>();
        dims.embed_dim = doc.at("embed_dim").get<int>();
        dims.hidden_dim = doc.at("hidden_dim").get<int>();
        dims.context = doc.at("context").get<int>();
        if (doc.contains("max_parameters")) {
            dims.max_parameters = doc.at("max_parameters").get<long>();
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed model dims: ") + e.what());
    }
    dims.validate();
    return dims;
}

namespace {

int cmd_gen_data(const std::string& spec_arg, const std::string& out_dir, std::ostream& out) {
    const CorpusSpec spec = parse_corpus_spec(json_arg_text(spec_arg));
    const GeneratedData data = generate(spec);
    fs::create_directories(out_dir);
    save_corpus(data.forget_corpus, fs::path(out_dir) / kForgetCorpusFile);
    save_corpus(data.retain_corpus, fs::path(out_dir) / kRetainCorpusFile);
    save_probes(data.forget_probes, fs::path(out_dir) / kForgetProbesFile);
    save_probes(data.retain_probes, fs::path(out_dir) / kRetainProbesFile);
    out << "wrote " << kForgetCorpusFile << " (" << data.forget_corpus.size() << " sequences), "
        << kRetainCorpusFile << " (" << data.retain_corpus.size() << " sequences), "
        << kForgetProbesFile << " (" << data.forget_probes.probes.size() << " probes), "
        << kRetainProbesFile << " (" << data.retain_probes.probes.size() << " probes) to "
        << out_dir << "\n";
    return 0;
}

int cmd_pretrain(const std::string& data_dir, const std::string& dims_arg, int steps, double eta,
                 int batch, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
    const WallClock clock;
    if (steps < 1) throw InputError("steps >= 1 required");
    const ModelDims dims = parse_dims(json_arg_text(dims_arg));
    const DataFiles data = load_data_dir(data_dir);

    Corpus combined = data.forget_corpus;
    combined.insert(combined.end(), data.retain_corpus.begin(), data.retain_corpus.end());

    const TinyLM initial = TinyLM::init(seed, dims);
    const TinyLM model = pretrain(initial, combined, steps, eta, batch, seed);
    model.save(out_path);

    json manifest;
    manifest["command"] = "pretrain";
    manifest["config"] = {{"steps", steps}, {"eta", eta}, {"batch", batch}, {"seed", seed}};
    manifest["dims"] = dims_to_json(dims);
    manifest["inputs"] = data_dir_fingerprint(data_dir);
    manifest["outputs"] = {{"checkpoint", out_path}};
    write_manifest(out_path + ".manifest.json", std::move(manifest));

    const EvalResult forget_eval = evaluate(model, data.forget_probes);
    const EvalResult retain_eval = evaluate(model, data.retain_probes);
    out << "pretrained " << model.parameter_count() << " parameters in " << steps << " steps\n";
    out << "forget_acc=" << format_g9(forget_eval.accuracy)
        << " retain_acc=" << format_g9(retain_eval.accuracy) << "\n";
    out << "wall_clock_seconds=" << format_g9(clock.seconds()) << "\n";
    return 0;
}

int cmd_unlearn(const std::string& ckpt_path, const std::string& data_dir,
                const std::string& config_arg, const std::string& out_dir, std::ostream& out) {
    const WallClock clock;
    const UnlearnConfig cfg = parse_unlearn_config(json_arg_text(config_arg));
    const TinyLM initial = TinyLM::load(ckpt_path);
    const DataFiles data = load_data_dir(data_dir);

    auto [model, logs] = run_unlearn(initial, data.forget_corpus, data.retain_corpus, cfg,
                                     &data.forget_probes, &data.retain_probes);

    fs::create_directories(out_dir);
    const fs::path out_ckpt = fs::path(out_dir) / "ckpt.json";
    const fs::path out_log = fs::path(out_dir) / "steplog.csv";
    model.save(out_ckpt);
    write_step_log_csv(logs, out_log);

    json manifest;
    manifest["command"] = "unlearn";
    manifest["config"] = json::parse(unlearn_config_to_json(cfg));
    manifest["dims"] = dims_to_json(model.dims());
    manifest["inputs"] = data_dir_fingerprint(data_dir);
    manifest["inputs"]["checkpoint"] = input_fingerprint(ckpt_path);
    manifest["outputs"] = {{"checkpoint", out_ckpt.string()}, {"step_log", out_log.string()}};
    write_manifest(fs::path(out_dir) / "manifest.json", std::move(manifest));

    const auto& last = logs.back();
    out << "forget_acc=" << format_g9(last.forget_acc.value())
        << " retain_acc=" << format_g9(last.retain_acc.value()) << "\n";
    out << "wall_clock_seconds=" << format_g9(clock.seconds()) << "\n";
    return 0;
}

SweepGrid parse_sweep_grid(const json& doc, const UnlearnConfig& base) {
    SweepGrid grid;
    try {
        if (doc.contains("combiners")) {
            for (const auto& name : doc.at("combiners")) {
                grid.combiners.push_back(parse_combiner_name(name.get<std::string>()));
            }
        } else {
            grid.combiners.push_back(base.combiner);
        }
        auto axis = [&doc](const char* key, double fallback) {
            std::vector<double> values;
            if (doc.contains(key)) {
                for (const auto& v : doc.at(key)) values.push_back(v.get<double>());
            } else {
                values.push_back(fallback);
            }
            return values;
        };
        grid.alphas = axis("alphas", base.alpha);
        grid.gammas = axis("gammas", base.gamma);
        grid.etas = axis("etas", base.eta);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed sweep grid: ") + e.what());
    }
    if (grid.combiners.empty() || grid.alphas.empty() || grid.gammas.empty() ||
        grid.etas.empty()) {
        throw InputError("empty grid");
    }
    return grid;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& data_dir,
              const std::string& grid_arg, const std::string& out_dir, std::ostream& out) {
    const json grid_doc = parse_json_text(json_arg_text(grid_arg), "sweep grid");
    if (!grid_doc.contains("base")) throw InputError("sweep grid needs a 'base' unlearn config");
    const UnlearnConfig base = unlearn_config_from_json(grid_doc.at("base"));
    const SweepGrid grid = parse_sweep_grid(grid_doc, base);

    const TinyLM initial = TinyLM::load(ckpt_path);
    const DataFiles data = load_data_dir(data_dir);
    const std::vector<SweepRow> rows = run_sweep(initial, data.forget_corpus, data.retain_corpus,
                                                 data.forget_probes, data.retain_probes, base, grid);

    fs::create_directories(out_dir);
    write_file_atomic(fs::path(out_dir) / "sweep.csv", sweep_to_csv(rows));
    std::vector<SweepRow> frontier;
    for (const auto& row : rows) {
        if (row.pareto) frontier.push_back(row);
    }
    write_file_atomic(fs::path(out_dir) / "pareto.csv", sweep_to_csv(frontier));
    out << rows.size() << " cells, " << frontier.size() << " on the Pareto frontier\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& log_paths, const std::string& out_dir,
               std::ostream& out) {
    std::vector<RunSeries> runs;
    for (const auto& path : log_paths) {
        RunSeries run;
        run.name = fs::path(path).stem().string();
        // disambiguate repeated stems so charts do not overwrite each other
        int suffix = 2;
        const std::string base = run.name;
        while (std::any_of(runs.begin(), runs.end(),
                           [&](const RunSeries& r) { return r.name == run.name; })) {
            run.name = base + "_" + std::to_string(suffix++);
        }
        run.logs = read_step_log_csv(path);
        runs.push_back(std::move(run));
    }

    fs::create_directories(out_dir);
    std::size_t svg_count = 0;
    for (const auto& run : runs) {
        write_file_atomic(fs::path(out_dir) / (run.name + "_loss.svg"), loss_chart_svg(run));
        write_file_atomic(fs::path(out_dir) / (run.name + "_cosines.svg"), cosine_chart_svg(run));
        svg_count += 2;
    }
    if (runs.size() >= 2) {
        std::vector<RunPoint> points;
        points.reserve(runs.size());
        for (const auto& run : runs) points.push_back(final_point(run));
        mark_pareto_points(points);
        write_file_atomic(fs::path(out_dir) / "scatter.svg", tradeoff_scatter_svg(points));
        ++svg_count;
    }
    write_file_atomic(fs::path(out_dir) / "summary.csv", cosine_summary_csv(runs));
    out << "wrote " << svg_count << " charts and summary.csv to " << out_dir << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retention-prioritized gradient-synthesis unlearning toolkit"};
    app.require_subcommand(1);

    std::string spec_path, out_arg, data_dir, dims_arg, ckpt_path, config_arg, grid_arg;
    std::vector<std::string> log_paths;
    int steps = 1000;
    double eta = 0.3;
    int batch = 16;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate synthetic forget/retain corpora");
    gen->add_option("--spec", spec_path, "Corpus spec JSON (inline or path)")->required();
    gen->add_option("--out", out_arg, "Output directory")->required();

    auto* pre = app.add_subcommand("pretrain", "Train the target model on forget + retain data");
    pre->add_option("--data", data_dir, "Data directory from gen-data")->required();
    pre->add_option("--dims", dims_arg, "Model dims JSON (inline or path)")->required();
    pre->add_option("--steps", steps, "Training steps");
    pre->add_option("--eta", eta, "Learning rate");
    pre->add_option("--batch", batch, "Batch size");
    pre->add_option("--seed", seed, "RNG seed");
    pre->add_option("--out", out_arg, "Output checkpoint path")->required();

    auto* unl = app.add_subcommand("unlearn", "Run the unlearning loop on a checkpoint");
    unl->add_option("--ckpt", ckpt_path, "Input checkpoint")->required();
    unl->add_option("--data", data_dir, "Data directory from gen-data")->required();
    unl->add_option("--config", config_arg, "Unlearn config JSON (inline or path)")->required();
    unl->add_option("--out", out_arg, "Output directory")->required();

    auto* swp = app.add_subcommand("sweep", "Grid of unlearning runs with a Pareto summary");
    swp->add_option("--ckpt", ckpt_path, "Input checkpoint")->required();
    swp->add_option("--data", data_dir, "Data directory from gen-data")->required();
    swp->add_option("--grid", grid_arg, "Sweep grid JSON (inline or path)")->required();
    swp->add_option("--out", out_arg, "Output directory")->required();

    auto* rep = app.add_subcommand("report", "Charts and cosine summary from step logs");
    rep->add_option("--logs", log_paths, "Step-log CSV files")->required()->expected(-1);
    rep->add_option("--out", out_arg, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_arg, out);
        if (pre->parsed()) {
            return cmd_pretrain(data_dir, dims_arg, steps, eta, batch, seed, out_arg, out);
        }
        if (unl->parsed()) return cmd_unlearn(ckpt_path, data_dir, config_arg, out_arg, out);
        if (swp->parsed()) return cmd_sweep(ckpt_path, data_dir, grid_arg, out_arg, out);
        if (rep->parsed()) return cmd_report(log_paths, out_arg, out);
    } catch (const InvariantViolation& e) {
        err << "invariant violation: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand\n";
    return 2;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace unlearn::cli

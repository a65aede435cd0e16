// Command line driver: synth, split, train, eval, sweep, dump-weights.
// Every command resolves its configuration (flags over config file over
// defaults), writes a manifest of the resolved values, and puts all artifacts
// under a run directory named by the manifest hash, so identical invocations
// land in identical places with identical bytes.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "desmil/checkpoint.hpp"
#include "desmil/data.hpp"
#include "desmil/decorrelate.hpp"
#include "desmil/evaluate.hpp"
#include "desmil/rng.hpp"
#include "desmil/synth.hpp"
#include "desmil/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace desmil;

namespace {

// ---------------------------------------------------------------- plumbing

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// nlohmann objects keep keys sorted, so dump() is canonical for our purposes.
std::string run_id(const json& manifest) { return hex16(fnv1a64(manifest.dump())); }

fs::path create_run_dir(const fs::path& out_root, json manifest) {
    const std::string id = run_id(manifest);
    const fs::path dir = out_root / ("run-" + id);
    fs::create_directories(dir);
    manifest["run_id"] = id;
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir.string());
    return dir;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path);
    json j = json::parse(in); // throws on malformed input
    if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object: " + path);
    return j;
}

void reject_unknown_keys(const json& cfg, const std::vector<std::string>& known) {
    for (const auto& [key, value] : cfg.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::runtime_error("config file: unknown key '" + key + "'");
    }
}

// Flag beats config file beats default.
template <typename T>
void fill_from_config(const json& cfg, const std::string& key, const CLI::Option* opt, T& out) {
    if (opt != nullptr && opt->count() > 0) return;
    auto it = cfg.find(key);
    if (it != cfg.end()) out = it->get<T>();
}

json read_data_manifest(const fs::path& data_dir) {
    const fs::path path = data_dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("data manifest not found: " + path.string());
    return json::parse(in);
}

SequenceDataset ingest_partition(const fs::path& data_dir, const std::string& file,
                                 const ItemVocab& vocab) {
    return ingest(data_dir / file, IngestFormat::tsv, &vocab);
}

// ------------------------------------------------------- train option block

// Options shared by train, sweep and multi-seed eval.
struct TrainCli {
    TrainConfig cfg;
    double sigma = 0.0; // <= 0 selects the median heuristic
    std::string axis = "coordinates";

    std::map<std::string, CLI::Option*> opts;

    void add_options(CLI::App& app) {
        opts["d"] = app.add_option("--d", cfg.d, "Embedding width");
        opts["d_hat"] = app.add_option("--d-hat", cfg.d_hat,
                                       "Attention hidden width (0 means 4*d)");
        opts["c"] = app.add_option("--c", cfg.c, "Number of interests");
        opts["lambda"] = app.add_option("--lambda", cfg.lambda, "Decorrelation step coefficient");
        opts["batch_size"] = app.add_option("--batch-size", cfg.batch_size, "Batch size");
        opts["lr"] = app.add_option("--lr", cfg.lr, "Adam learning rate");
        opts["k_neg"] = app.add_option("--k-neg", cfg.k_neg, "Negatives per example");
        opts["l_max"] = app.add_option("--l-max", cfg.l_max, "Input window length");
        opts["patience"] = app.add_option("--patience", cfg.patience,
                                          "Evaluations without improvement before stopping");
        opts["max_epochs"] = app.add_option("--max-epochs", cfg.max_epochs, "Epoch bound");
        opts["eval_every"] = app.add_option("--eval-every", cfg.eval_every,
                                            "Steps between validation evaluations");
        opts["eta_w"] = app.add_option("--eta-w", cfg.eta_w, "Weight update step size");
        opts["sigma"] = app.add_option("--sigma", sigma,
                                       "Fixed kernel bandwidth (<= 0 uses the median heuristic)");
        opts["axis"] = app.add_option("--axis", axis, "Dependence samples: coordinates | batch")
                           ->check(CLI::IsMember({"coordinates", "batch"}));
    }

    static std::vector<std::string> config_keys() {
        return {"d",     "d_hat",      "c",          "lambda", "batch_size",
                "lr",    "k_neg",      "l_max",      "patience", "max_epochs",
                "eval_every", "eta_w", "sigma",      "axis",   "seed"};
    }

    void resolve(const json& file_cfg, std::uint64_t seed) {
        fill_from_config(file_cfg, "d", opts.at("d"), cfg.d);
        fill_from_config(file_cfg, "d_hat", opts.at("d_hat"), cfg.d_hat);
        fill_from_config(file_cfg, "c", opts.at("c"), cfg.c);
        fill_from_config(file_cfg, "lambda", opts.at("lambda"), cfg.lambda);
        fill_from_config(file_cfg, "batch_size", opts.at("batch_size"), cfg.batch_size);
        fill_from_config(file_cfg, "lr", opts.at("lr"), cfg.lr);
        fill_from_config(file_cfg, "k_neg", opts.at("k_neg"), cfg.k_neg);
        fill_from_config(file_cfg, "l_max", opts.at("l_max"), cfg.l_max);
        fill_from_config(file_cfg, "patience", opts.at("patience"), cfg.patience);
        fill_from_config(file_cfg, "max_epochs", opts.at("max_epochs"), cfg.max_epochs);
        fill_from_config(file_cfg, "eval_every", opts.at("eval_every"), cfg.eval_every);
        fill_from_config(file_cfg, "eta_w", opts.at("eta_w"), cfg.eta_w);
        fill_from_config(file_cfg, "sigma", opts.at("sigma"), sigma);
        fill_from_config(file_cfg, "axis", opts.at("axis"), axis);

        cfg.seed = seed;
        cfg.kernel = sigma > 0.0 ? KernelConfig::fixed(sigma) : KernelConfig::median();
        cfg.axis = axis == "batch" ? DependenceAxis::batch : DependenceAxis::coordinates;
        cfg.validate();
    }

    json to_manifest() const {
        json j;
        j["d"] = cfg.d;
        j["d_hat"] = cfg.d_hat;
        j["c"] = cfg.c;
        j["lambda"] = cfg.lambda;
        j["batch_size"] = cfg.batch_size;
        j["lr"] = cfg.lr;
        j["k_neg"] = cfg.k_neg;
        j["l_max"] = cfg.l_max;
        j["patience"] = cfg.patience;
        j["max_epochs"] = cfg.max_epochs;
        j["eval_every"] = cfg.eval_every;
        j["eta_w"] = cfg.eta_w;
        j["sigma"] = sigma > 0.0 ? json(sigma) : json("median");
        j["axis"] = axis;
        j["seed"] = cfg.seed;
        return j;
    }
};

// ------------------------------------------------------------- data loading

struct TrainData {
    SequenceDataset train;
    std::vector<EvalPair> valid_pairs;
};

// Held-out protocol per data kind. Classic and synthetic corpora score each
// user against the tail of their own sequence; the temporal-shift kind joins
// the input partition against the held-out target partition.
constexpr double kEvalInputFraction = 0.8;

TrainData load_train_data(const fs::path& data_dir, const json& manifest, std::uint64_t seed) {
    const std::string kind = manifest.at("kind").get<std::string>();
    const ItemVocab vocab = load_vocab(data_dir / "vocab.tsv");
    TrainData out;
    if (kind == "classic") {
        out.train = ingest_partition(data_dir, "train.tsv", vocab);
        const SequenceDataset valid = ingest_partition(data_dir, "valid.tsv", vocab);
        out.valid_pairs = eval_pairs_by_fraction(valid, kEvalInputFraction);
    } else if (kind == "ood") {
        out.train = ingest_partition(data_dir, "train.tsv", vocab);
        const SequenceDataset valid = ingest_partition(data_dir, "valid.tsv", vocab);
        out.valid_pairs = eval_pairs_by_join(out.train, valid);
    } else if (kind == "synth") {
        // The synthetic corpus has no separate validation file; a user-level
        // split of the training phase provides one deterministically.
        const SequenceDataset full = ingest_partition(data_dir, "train.tsv", vocab);
        ClassicSplit inner = split_classic(full, 0.8, 0.1, 0.1, seed);
        out.train = std::move(inner.train);
        out.valid_pairs = eval_pairs_by_fraction(inner.valid, kEvalInputFraction);
    } else {
        throw std::runtime_error("data manifest: unsupported kind '" + kind + "'");
    }
    return out;
}

std::vector<EvalPair> load_eval_pairs(const fs::path& data_dir, const json& manifest) {
    const std::string kind = manifest.at("kind").get<std::string>();
    const ItemVocab vocab = load_vocab(data_dir / "vocab.tsv");
    if (kind == "classic" || kind == "synth")
        return eval_pairs_by_fraction(ingest_partition(data_dir, "test.tsv", vocab),
                                      kEvalInputFraction);
    if (kind == "ood")
        return eval_pairs_by_join(ingest_partition(data_dir, "test_inputs.tsv", vocab),
                                  ingest_partition(data_dir, "test_targets.tsv", vocab));
    throw std::runtime_error("data manifest: unsupported kind '" + kind + "'");
}

// --------------------------------------------------------------- train core

struct TrainArtifacts {
    fs::path dir;
    TrainResult result;
};

TrainArtifacts run_training(const fs::path& data_dir, const fs::path& out_root,
                            const TrainCli& tc, json manifest_core) {
    const json data_manifest = read_data_manifest(data_dir);
    TrainData data = load_train_data(data_dir, data_manifest, tc.cfg.seed);

    const fs::path dir = create_run_dir(out_root, std::move(manifest_core));
    std::ofstream trace(dir / "trace.csv");
    trace << kTraceCsvHeader << '\n';
    TrainHooks hooks;
    hooks.on_trace = [&trace](const TraceRecord& r) { trace << trace_csv_line(r) << std::endl; };

    TrainResult result = train(data.train, data.valid_pairs, tc.cfg, hooks);

    save_checkpoint(result.params, (dir / "checkpoint.bin").string(),
                    (dir / "checkpoint.manifest").string());
    dump_weight_table(result.weights, dir / "weights.tsv");
    json summary;
    summary["best_recall50"] = result.best_recall50;
    summary["best_step"] = result.best_step;
    summary["steps"] = result.steps;
    std::ofstream rf(dir / "result.json");
    rf << summary.dump(2) << '\n';
    return TrainArtifacts{dir, std::move(result)};
}

std::string metrics_row(const std::string& seed_label, const MetricsReport& r) {
    return "{\"seed\":" + seed_label + "," + metrics_to_json(r).substr(1);
}

// ----------------------------------------------------------------- commands

int cmd_synth(const std::string& config_path, std::uint64_t seed, const std::string& out,
              SynthConfig cfg, const std::map<std::string, CLI::Option*>& opts) {
    const json file_cfg = load_config_file(config_path);
    reject_unknown_keys(file_cfg, {"users", "items", "clusters", "len_min", "len_max",
                                   "rho_train", "rho_test", "seed"});
    fill_from_config(file_cfg, "users", opts.at("users"), cfg.num_users);
    fill_from_config(file_cfg, "items", opts.at("items"), cfg.num_items);
    fill_from_config(file_cfg, "clusters", opts.at("clusters"), cfg.num_clusters);
    fill_from_config(file_cfg, "len_min", opts.at("len_min"), cfg.seq_len_min);
    fill_from_config(file_cfg, "len_max", opts.at("len_max"), cfg.seq_len_max);
    fill_from_config(file_cfg, "rho_train", opts.at("rho_train"), cfg.rho_train);
    fill_from_config(file_cfg, "rho_test", opts.at("rho_test"), cfg.rho_test);
    cfg.seed = seed;
    cfg.validate();

    json manifest;
    manifest["command"] = "synth";
    manifest["kind"] = "synth";
    manifest["users"] = cfg.num_users;
    manifest["items"] = cfg.num_items;
    manifest["clusters"] = cfg.num_clusters;
    manifest["len_min"] = cfg.seq_len_min;
    manifest["len_max"] = cfg.seq_len_max;
    manifest["rho_train"] = cfg.rho_train;
    manifest["rho_test"] = cfg.rho_test;
    manifest["seed"] = cfg.seed;

    const SynthOutput generated = generate(cfg);
    const fs::path dir = create_run_dir(out, manifest);
    export_tsv(generated.train, dir / "train.tsv");
    export_tsv(generated.test, dir / "test.tsv");
    dump_vocab(generated.train.items, dir / "vocab.tsv");
    std::cout << dir.string() << '\n';
    return 0;
}

int cmd_split(const std::string& input, const std::string& mode, double z, double train_ratio,
              double valid_ratio, double test_ratio, std::uint64_t seed, const std::string& out) {
    const SequenceDataset ds = ingest(input);

    json manifest;
    manifest["command"] = "split";
    manifest["kind"] = mode;
    manifest["input"] = input;
    manifest["seed"] = seed;
    if (mode == "ood") manifest["z"] = z;
    else {
        manifest["train_ratio"] = train_ratio;
        manifest["valid_ratio"] = valid_ratio;
        manifest["test_ratio"] = test_ratio;
    }

    if (mode == "ood") {
        const OodSplit split = split_ood(ds, z); // validates z before any writes
        const fs::path dir = create_run_dir(out, manifest);
        export_tsv(split.train, dir / "train.tsv");
        export_tsv(split.valid, dir / "valid.tsv");
        export_tsv(split.test_inputs, dir / "test_inputs.tsv");
        export_tsv(split.test_targets, dir / "test_targets.tsv");
        dump_vocab(ds.items, dir / "vocab.tsv");
        std::cout << dir.string() << '\n';
    } else {
        const ClassicSplit split = split_classic(ds, train_ratio, valid_ratio, test_ratio, seed);
        const fs::path dir = create_run_dir(out, manifest);
        export_tsv(split.train, dir / "train.tsv");
        export_tsv(split.valid, dir / "valid.tsv");
        export_tsv(split.test, dir / "test.tsv");
        dump_vocab(ds.items, dir / "vocab.tsv");
        std::cout << dir.string() << '\n';
    }
    return 0;
}

int cmd_train(const std::string& data, const std::string& config_path, std::uint64_t seed,
              const std::string& out, TrainCli& tc) {
    const json file_cfg = load_config_file(config_path);
    reject_unknown_keys(file_cfg, TrainCli::config_keys());
    std::uint64_t resolved_seed = seed;
    fill_from_config(file_cfg, "seed", nullptr, resolved_seed);
    tc.resolve(file_cfg, resolved_seed);

    json manifest = tc.to_manifest();
    manifest["command"] = "train";
    manifest["data"] = data;

    const TrainArtifacts artifacts = run_training(data, out, tc, manifest);
    std::cout << artifacts.dir.string() << '\n';
    return 0;
}

int cmd_eval(const std::string& data, const std::string& checkpoint, const std::string& config_path,
             std::uint64_t seed, const std::string& out, const std::string& granularity,
             std::size_t seeds, TrainCli& tc) {
    const json file_cfg = load_config_file(config_path);
    reject_unknown_keys(file_cfg, TrainCli::config_keys());
    const json data_manifest = read_data_manifest(data);
    const std::vector<EvalPair> pairs = load_eval_pairs(data, data_manifest);
    const TargetGranularity gran = granularity == "per-target" ? TargetGranularity::per_target
                                                               : TargetGranularity::per_user;

    if (seeds == 0) {
        if (checkpoint.empty())
            throw std::runtime_error("eval: --checkpoint is required without --seeds");
        const fs::path ckpt(checkpoint);
        const ModelParams params = load_checkpoint((ckpt / "checkpoint.bin").string(),
                                                   (ckpt / "checkpoint.manifest").string());
        const MetricsReport report = evaluate_model(params, pairs, 20, 50, gran);

        json manifest;
        manifest["command"] = "eval";
        manifest["data"] = data;
        manifest["checkpoint"] = checkpoint;
        manifest["granularity"] = granularity;
        const fs::path dir = create_run_dir(out, manifest);
        const std::string line = metrics_to_json(report);
        std::ofstream mf(dir / "metrics.json");
        mf << line << '\n';
        std::cout << line << '\n';
        return 0;
    }

    // Multi-seed protocol: each seed trains its own model on the data
    // directory's training partitions, then scores the shared eval pairs.
    std::uint64_t base_seed = seed;
    fill_from_config(file_cfg, "seed", nullptr, base_seed);
    json manifest_base;
    manifest_base["command"] = "eval";
    manifest_base["data"] = data;
    manifest_base["granularity"] = granularity;
    manifest_base["seeds"] = seeds;

    MetricsReport mean;
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < seeds; ++s) {
        tc.resolve(file_cfg, base_seed + s);
        json manifest = manifest_base;
        manifest["train"] = tc.to_manifest();
        manifest["seed_index"] = s;
        const TrainArtifacts artifacts = run_training(data, out, tc, manifest);
        const MetricsReport report = evaluate_model(artifacts.result.params, pairs, 20, 50, gran);
        lines.push_back(metrics_row(std::to_string(base_seed + s), report));
        mean.recall20 += report.recall20;
        mean.recall50 += report.recall50;
        mean.ndcg20 += report.ndcg20;
        mean.ndcg50 += report.ndcg50;
        mean.hr20 += report.hr20;
        mean.hr50 += report.hr50;
        mean.users = report.users;
    }
    const double inv = 1.0 / static_cast<double>(seeds);
    mean.recall20 *= inv;
    mean.recall50 *= inv;
    mean.ndcg20 *= inv;
    mean.ndcg50 *= inv;
    mean.hr20 *= inv;
    mean.hr50 *= inv;
    lines.push_back(metrics_row("\"mean\"", mean));

    manifest_base["train"] = tc.to_manifest();
    const fs::path dir = create_run_dir(out, manifest_base);
    std::ofstream mf(dir / "metrics.json");
    for (const std::string& line : lines) {
        mf << line << '\n';
        std::cout << line << '\n';
    }
    return 0;
}

int cmd_sweep(const std::string& data, const std::string& config_path, std::uint64_t seed,
              const std::string& out, TrainCli& tc) {
    const json file_cfg = load_config_file(config_path);
    reject_unknown_keys(file_cfg, TrainCli::config_keys());
    const json data_manifest = read_data_manifest(data);
    const std::vector<EvalPair> pairs = load_eval_pairs(data, data_manifest);

    const std::array<double, 5> lambdas = {0.01, 0.1, 1.0, 10.0, 100.0};
    const std::array<std::size_t, 4> interests = {2, 4, 6, 8};

    json manifest;
    manifest["command"] = "sweep";
    manifest["data"] = data;
    tc.resolve(file_cfg, seed);
    manifest["train"] = tc.to_manifest();
    const fs::path dir = create_run_dir(out, manifest);

    std::ofstream table(dir / "sweep.csv");
    const std::string header = "lambda,c,recall20,recall50,ndcg20,ndcg50,hr20,hr50,users";
    table << header << '\n';
    std::cout << header << '\n';
    for (double lambda : lambdas) {
        for (std::size_t c : interests) {
            tc.resolve(file_cfg, seed);
            tc.cfg.lambda = lambda;
            tc.cfg.c = c;
            json cell = manifest;
            cell["cell_lambda"] = lambda;
            cell["cell_c"] = c;
            const TrainArtifacts artifacts = run_training(data, dir, tc, cell);
            const MetricsReport r = evaluate_model(artifacts.result.params, pairs, 20, 50);
            std::string row;
            {
                char buf[32];
                auto [p1, e1] = std::to_chars(buf, buf + sizeof(buf), lambda);
                row.assign(buf, p1);
            }
            row += ',' + std::to_string(c);
            const std::string m = metrics_to_json(r);
            // Reuse the six metric values in report order from the JSON line.
            for (const char* key : {"recall20", "recall50", "ndcg20", "ndcg50", "hr20", "hr50"}) {
                const std::string tag = std::string("\"") + key + "\":";
                const std::size_t at = m.find(tag) + tag.size();
                row += ',' + m.substr(at, m.find_first_of(",}", at) - at);
            }
            row += ',' + std::to_string(r.users);
            table << row << std::endl;
            std::cout << row << '\n';
        }
    }
    std::cout << dir.string() << '\n';
    return 0;
}

int cmd_dump_weights(const std::string& run, std::size_t bins, const std::string& out) {
    const fs::path weights_path = fs::path(run) / "weights.tsv";
    std::ifstream in(weights_path);
    if (!in) throw std::runtime_error("weight table not found: " + weights_path.string());

    std::vector<std::size_t> counts(bins, 0);
    double min_w = 1.0, max_w = 0.0, sum = 0.0;
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("weight table: malformed line '" + line + "'");
        const double w = std::stod(line.substr(tab + 1));
        std::size_t bin = static_cast<std::size_t>(w * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1; // w == 1 belongs to the top bin
        ++counts[bin];
        min_w = std::min(min_w, w);
        max_w = std::max(max_w, w);
        sum += w;
        ++n;
    }
    if (n == 0) throw std::runtime_error("weight table is empty: " + weights_path.string());

    json manifest;
    manifest["command"] = "dump-weights";
    manifest["run"] = run;
    manifest["bins"] = bins;
    const fs::path dir = create_run_dir(out, manifest);

    std::size_t peak = 1;
    for (std::size_t c : counts) peak = std::max(peak, c);
    std::string text;
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = static_cast<double>(b) / static_cast<double>(bins);
        const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
        char head[64];
        std::snprintf(head, sizeof(head), "[%.2f,%.2f%c %8zu ", lo, hi,
                      b + 1 == bins ? ']' : ')', counts[b]);
        text += head;
        text.append(40 * counts[b] / peak, '#');
        text += '\n';
    }
    char tail[128];
    std::snprintf(tail, sizeof(tail), "n %zu  min %.6f  max %.6f  mean %.6f\n", n, min_w, max_w,
                  sum / static_cast<double>(n));
    text += tail;

    std::ofstream hf(dir / "histogram.txt");
    hf << text;
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-interest sequential recommender trained with decorrelated sample weights"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 42;
    std::string out = "runs";
    app.add_option("--config", config_path, "JSON config file (flags override it)")
        ->envname("DESMIL_CONFIG");
    app.add_option("--seed", seed, "Base seed");
    app.add_option("--out", out, "Output root directory");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic two-phase corpus");
    SynthConfig synth_cfg;
    std::map<std::string, CLI::Option*> synth_opts;
    synth_opts["users"] = synth->add_option("--users", synth_cfg.num_users, "User count");
    synth_opts["items"] = synth->add_option("--items", synth_cfg.num_items, "Item count");
    synth_opts["clusters"] =
        synth->add_option("--clusters", synth_cfg.num_clusters, "Interest cluster count");
    synth_opts["len_min"] = synth->add_option("--len-min", synth_cfg.seq_len_min, "Shortest sequence");
    synth_opts["len_max"] = synth->add_option("--len-max", synth_cfg.seq_len_max, "Longest sequence");
    synth_opts["rho_train"] =
        synth->add_option("--rho-train", synth_cfg.rho_train, "Training co-occurrence strength");
    synth_opts["rho_test"] =
        synth->add_option("--rho-test", synth_cfg.rho_test, "Test co-occurrence strength");

    // split
    auto* split = app.add_subcommand("split", "Split an interaction TSV into partitions");
    std::string split_input, split_mode = "classic";
    double split_z = 0.5, tr = 0.8, vr = 0.1, te = 0.1;
    split->add_option("--input", split_input, "Interaction TSV")->required();
    split->add_option("--mode", split_mode, "classic | ood")
        ->check(CLI::IsMember({"classic", "ood"}));
    split->add_option("--z", split_z, "Covariate shift ratio (temporal mode)");
    split->add_option("--train-ratio", tr, "Classic train share");
    split->add_option("--valid-ratio", vr, "Classic validation share");
    split->add_option("--test-ratio", te, "Classic test share");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train and write checkpoint artifacts");
    std::string train_data;
    train_cmd->add_option("--data", train_data, "Data run directory")->required();
    TrainCli train_tc;
    train_tc.add_options(*train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint, or several fresh seeds");
    std::string eval_data, eval_checkpoint, eval_granularity = "per-user";
    std::size_t eval_seeds = 0;
    eval_cmd->add_option("--data", eval_data, "Data run directory")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Training run directory");
    eval_cmd->add_option("--seeds", eval_seeds, "Train+eval this many consecutive seeds");
    eval_cmd->add_option("--granularity", eval_granularity, "per-user | per-target")
        ->check(CLI::IsMember({"per-user", "per-target"}));
    TrainCli eval_tc;
    eval_tc.add_options(*eval_cmd);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over lambda and interest count");
    std::string sweep_data;
    sweep_cmd->add_option("--data", sweep_data, "Data run directory")->required();
    TrainCli sweep_tc;
    sweep_tc.add_options(*sweep_cmd);

    // dump-weights
    auto* dump_cmd = app.add_subcommand("dump-weights", "Histogram a run's sample weights");
    std::string dump_run;
    std::size_t dump_bins = 10;
    dump_cmd->add_option("--run", dump_run, "Training run directory")->required();
    dump_cmd->add_option("--bins", dump_bins, "Histogram bins");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config_path, seed, out, synth_cfg, synth_opts);
        if (split->parsed())
            return cmd_split(split_input, split_mode, split_z, tr, vr, te, seed, out);
        if (train_cmd->parsed()) return cmd_train(train_data, config_path, seed, out, train_tc);
        if (eval_cmd->parsed())
            return cmd_eval(eval_data, eval_checkpoint, config_path, seed, out, eval_granularity,
                            eval_seeds, eval_tc);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_data, config_path, seed, out, sweep_tc);
        if (dump_cmd->parsed()) return cmd_dump_weights(dump_run, dump_bins, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

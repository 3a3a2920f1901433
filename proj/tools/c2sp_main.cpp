// c2sp command-line tool: synth | train | compress | reconstruct | predict |
// export-matrix. Every artifact-producing command writes a JSON run manifest
// next to its outputs. Exit codes: 0 success, 2 config error, 3 data/format
// error, 4 numerical failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2sp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw c2sp::format_error("cannot open " + path + " for hashing");
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!f) break;
    }
    return h;
}

std::size_t thread_cap() {
    const char* env = std::getenv("C2SP_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<std::size_t>(v) : 1;
}

struct ManifestBuilder {
    json j;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    ManifestBuilder(const std::string& command, std::uint64_t seed) {
        j["command"] = command;
        j["seed"] = seed;
        j["tool_version"] = kToolVersion;
        j["threads"] = thread_cap();
        j["config"] = json::object();
        j["inputs"] = json::object();
        j["outputs"] = json::array();
    }

    void cfg(const std::string& k, const json& v) { j["config"][k] = v; }
    void input(const std::string& path) {
        j["inputs"][path] = "fnv1a64:" + std::to_string(fnv1a64_file(path));
    }
    void output(const std::string& path) { j["outputs"].push_back(path); }

    void write(const std::string& path) {
        j["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ofstream f(path);
        if (!f) throw c2sp::format_error("cannot open " + path);
        f << j.dump(2) << "\n";
    }
};

// "onset:offset,onset:offset" in minutes -> annotations in seconds.
std::vector<c2sp::Annotation> parse_schedule(const std::string& s) {
    std::vector<c2sp::Annotation> out;
    if (s.empty()) return out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            throw c2sp::config_error("--seizures entries must be onset:offset minutes, got \"" +
                                     item + "\"");
        }
        try {
            out.push_back({std::stod(item.substr(0, colon)) * 60.0,
                           std::stod(item.substr(colon + 1)) * 60.0});
        } catch (const std::invalid_argument&) {
            throw c2sp::config_error("--seizures entry \"" + item + "\" is not numeric");
        }
    }
    return out;
}

bool has_magic(const std::string& path, const char* magic) {
    std::ifstream f(path, std::ios::binary);
    char buf[8] = {};
    f.read(buf, 8);
    return f && std::memcmp(buf, magic, 8) == 0;
}

c2sp::WindowedDataset load_training_data(const std::vector<std::string>& data,
                                         const std::string& annotations) {
    if (data.size() == 1 && has_magic(data[0], "C2SPDATA")) {
        return c2sp::read_dataset(data[0]);
    }
    std::vector<c2sp::Recording> recs;
    for (const auto& p : data) recs.push_back(c2sp::read_edf(p));
    if (!annotations.empty()) c2sp::apply_annotations_csv(recs, annotations);
    return c2sp::extract_windows(recs, c2sp::label_regions(recs));
}

// Consecutive non-overlapping 20 s windows of one recording, normalized with
// the bundle's training statistics, as a [1xCxN] batch per window.
struct InferenceWindows {
    std::vector<c2sp::Tensor> batches;  // each [1xCxN]
    std::vector<double> start_s;
};

InferenceWindows window_recording(const c2sp::Recording& rec, const c2sp::ModelBundle& bundle) {
    if (rec.n_channels() != bundle.channels) {
        throw c2sp::dim_error("recording has " + std::to_string(rec.n_channels()) +
                              " channels, model expects " + std::to_string(bundle.channels));
    }
    if (rec.sample_rate != bundle.sample_rate) {
        throw c2sp::dim_error("recording sample rate " + std::to_string(rec.sample_rate) +
                              " does not match model rate " +
                              std::to_string(bundle.sample_rate));
    }
    const std::size_t N = bundle.n_in;
    const std::size_t C = bundle.channels;
    const bool norm = !bundle.norm.mean.empty();
    InferenceWindows out;
    for (std::size_t s0 = 0; s0 + N <= rec.n_samples(); s0 += N) {
        c2sp::Tensor x = c2sp::Tensor::zeros({1, C, N});
        double* p = x.data();
        for (std::size_t c = 0; c < C; ++c) {
            const double mean = norm ? bundle.norm.mean[c] : 0.0;
            const double sd = norm ? bundle.norm.stddev[c] : 1.0;
            const double* src = rec.samples[c].data() + s0;
            for (std::size_t i = 0; i < N; ++i) p[c * N + i] = (src[i] - mean) / sd;
        }
        out.batches.push_back(std::move(x));
        out.start_s.push_back(static_cast<double>(s0) / rec.sample_rate);
    }
    return out;
}

void write_windows_csv(const std::string& path, const std::vector<c2sp::Tensor>& rows,
                       const std::vector<double>& start_s, const char* value_tag) {
    std::ofstream f(path);
    if (!f) throw c2sp::format_error("cannot open " + path);
    f << "window,start_s,channel," << value_tag << "\n";
    f.precision(17);
    for (std::size_t w = 0; w < rows.size(); ++w) {
        const auto& t = rows[w];  // [1xCxL]
        const std::size_t C = t.dim(1), L = t.dim(2);
        const double* p = t.data();
        for (std::size_t c = 0; c < C; ++c) {
            f << w << "," << start_s[w] << "," << c;
            for (std::size_t i = 0; i < L; ++i) f << "," << p[c * L + i];
            f << "\n";
        }
    }
}

// Reads a CSV produced by `compress` back into [1xCxM] batches.
InferenceWindows read_windows_csv(const std::string& path, std::size_t channels,
                                  std::size_t len) {
    std::ifstream f(path);
    if (!f) throw c2sp::format_error("cannot open " + path);
    std::string line;
    std::getline(f, line);  // header
    InferenceWindows out;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ss, field, ',')) {
                throw c2sp::format_error(path + ":" + std::to_string(lineno) + ": missing " +
                                         what);
            }
            return field;
        };
        const std::size_t w = std::stoul(next("window"));
        const double t0 = std::stod(next("start_s"));
        const std::size_t c = std::stoul(next("channel"));
        if (c >= channels) {
            throw c2sp::format_error(path + ":" + std::to_string(lineno) +
                                     ": channel out of range");
        }
        while (out.batches.size() <= w) {
            out.batches.push_back(c2sp::Tensor::zeros({1, channels, len}));
            out.start_s.push_back(t0);
        }
        double* p = out.batches[w].data() + c * len;
        for (std::size_t i = 0; i < len; ++i) p[i] = std::stod(next("value"));
        if (std::getline(ss, field, ',')) {
            throw c2sp::format_error(path + ":" + std::to_string(lineno) + ": row too long");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_synth(std::uint64_t seed, std::size_t channels, double minutes,
              const std::string& seizures, const std::string& out) {
    ManifestBuilder man("synth", seed);
    man.cfg("channels", channels);
    man.cfg("minutes", minutes);
    man.cfg("seizures", seizures);
    const auto schedule = parse_schedule(seizures);
    c2sp::Recording rec =
        c2sp::synth_eeg(seed, channels, minutes, schedule, 256.0, 0.0, fs::path(out).stem());
    const std::string edf_path = out + ".edf";
    const std::string csv_path = out + ".csv";
    c2sp::write_edf(rec, edf_path);
    c2sp::write_annotations_csv({rec}, csv_path);
    man.output(edf_path);
    man.output(csv_path);
    man.write(out + ".manifest.json");
    return 0;
}

int cmd_train(const std::vector<std::string>& data, const std::string& annotations,
              const std::string& ratio_s, double lambda, const std::string& mode_s,
              const std::string& config_path, std::size_t budget, std::size_t folds,
              const std::string& out_dir) {
    const c2sp::Ratio ratio = c2sp::Ratio::parse(ratio_s);
    if (!ratio.is_supported()) {
        std::cerr << "warning: ratio " << ratio.str()
                  << " is outside the reference protocol {1/2, 1/4, 1/8, 1/16}\n";
    }
    if (mode_s != "float" && mode_s != "binary") {
        throw c2sp::config_error("--mode must be float or binary");
    }
    const c2sp::MatrixMode mode =
        mode_s == "binary" ? c2sp::MatrixMode::Binary : c2sp::MatrixMode::Float;

    c2sp::TrainConfig base;
    c2sp::SearchGrids grids;
    // Default to a singleton grid at the base configuration; --config can
    // widen any axis.
    grids.lrs = {base.lr};
    grids.filters_stem = {base.filters_stem};
    grids.size_fc = {base.size_fc};
    grids.batches = {base.batch};
    json cfg_json = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw c2sp::config_error("cannot open config " + config_path);
        try {
            f >> cfg_json;
        } catch (const json::exception& e) {
            throw c2sp::config_error(config_path + ": " + e.what());
        }
        if (cfg_json.contains("epochs")) base.epochs = cfg_json["epochs"].get<std::size_t>();
        if (cfg_json.contains("filters_recon"))
            base.filters_recon = cfg_json["filters_recon"].get<std::size_t>();
        if (cfg_json.contains("seed")) base.seed = cfg_json["seed"].get<std::uint64_t>();
        if (cfg_json.contains("keep_best")) base.keep_best = cfg_json["keep_best"].get<bool>();
        if (cfg_json.contains("residual")) {
            const std::string r = cfg_json["residual"].get<std::string>();
            if (r != "project_up" && r != "literal") {
                throw c2sp::config_error("residual must be project_up or literal");
            }
            base.residual =
                r == "literal" ? c2sp::ResidualMode::Literal : c2sp::ResidualMode::ProjectUp;
        }
        if (cfg_json.contains("lr")) grids.lrs = {cfg_json["lr"].get<double>()};
        if (cfg_json.contains("filters_stem"))
            grids.filters_stem = {cfg_json["filters_stem"].get<std::size_t>()};
        if (cfg_json.contains("size_fc")) grids.size_fc = {cfg_json["size_fc"].get<std::size_t>()};
        if (cfg_json.contains("batch")) grids.batches = {cfg_json["batch"].get<std::size_t>()};
        if (cfg_json.contains("lrs")) grids.lrs = cfg_json["lrs"].get<std::vector<double>>();
        if (cfg_json.contains("filters_stem_grid"))
            grids.filters_stem = cfg_json["filters_stem_grid"].get<std::vector<std::size_t>>();
        if (cfg_json.contains("size_fc_grid"))
            grids.size_fc = cfg_json["size_fc_grid"].get<std::vector<std::size_t>>();
        if (cfg_json.contains("batch_grid"))
            grids.batches = cfg_json["batch_grid"].get<std::vector<std::size_t>>();
    }

    ManifestBuilder man("train", base.seed);
    man.cfg("ratio", ratio.str());
    man.cfg("lambda", lambda);
    man.cfg("mode", mode_s);
    man.cfg("budget", budget);
    man.cfg("folds", folds);
    man.cfg("train_config", cfg_json);
    for (const auto& p : data) man.input(p);
    if (!annotations.empty()) man.input(annotations);

    const c2sp::WindowedDataset ds = load_training_data(data, annotations);
    if (ds.windows.empty()) throw c2sp::config_error("no labeled windows extracted from input");
    std::cerr << "training on " << ds.windows.size() << " windows, " << ds.n_channels
              << " channels, N=" << ds.window_len() << "\n";

    fs::create_directories(out_dir);
    c2sp::GridSearchResult result =
        c2sp::grid_search(ds, ratio, mode, lambda, grids, base, budget, folds);

    for (std::size_t f = 0; f < result.folds.size(); ++f) {
        const std::string model_path = out_dir + "/fold" + std::to_string(f) + ".c2spmodl";
        result.folds[f].bundle.save(model_path);
        man.output(model_path);
        const std::string log_path = out_dir + "/fold" + std::to_string(f) + "_epochs.csv";
        std::ofstream lf(log_path);
        lf << c2sp::epoch_log_csv(result.folds[f].log);
        man.output(log_path);
    }
    const std::string report_path = out_dir + "/eval_report.csv";
    result.report.write_csv(report_path);
    man.output(report_path);
    {
        std::ofstream sf(out_dir + "/sweep.csv");
        sf << "lr,filters_stem,size_fc,batch,val_accuracy\n";
        for (const auto& e : result.sweep)
            sf << e.cfg.lr << "," << e.cfg.filters_stem << "," << e.cfg.size_fc << ","
               << e.cfg.batch << "," << e.val_accuracy << "\n";
        man.output(out_dir + "/sweep.csv");
    }
    man.cfg("selected_lr", result.best.lr);
    man.cfg("selected_filters_stem", result.best.filters_stem);
    man.cfg("selected_size_fc", result.best.size_fc);
    man.cfg("selected_batch", result.best.batch);
    man.write(out_dir + "/manifest.json");
    std::cout << result.report.to_csv();
    return 0;
}

int cmd_compress(const std::string& model, const std::string& in, const std::string& out) {
    c2sp::ModelBundle bundle = c2sp::ModelBundle::load(model);
    ManifestBuilder man("compress", bundle.cfg.seed);
    man.input(model);
    man.input(in);
    const c2sp::Recording rec = c2sp::read_edf(in);
    InferenceWindows win = window_recording(rec, bundle);
    c2sp::NoGradGuard ng;
    std::vector<c2sp::Tensor> z;
    for (const auto& x : win.batches) z.push_back(c2sp::compress_batch(bundle.matrix, x));
    write_windows_csv(out, z, win.start_s, "value");
    man.output(out);
    man.write(out + ".manifest.json");
    return 0;
}

int cmd_reconstruct(const std::string& model, const std::string& in, const std::string& out) {
    c2sp::ModelBundle bundle = c2sp::ModelBundle::load(model);
    if (bundle.cfg.lambda == 0.0) {
        std::cerr << "warning: model was trained with lambda=0; its decoder is untrained\n";
    }
    ManifestBuilder man("reconstruct", bundle.cfg.seed);
    man.input(model);
    man.input(in);
    const std::size_t M = c2sp::compressed_len(bundle.ratio, bundle.n_in);
    InferenceWindows win = read_windows_csv(in, bundle.channels, M);
    c2sp::NoGradGuard ng;
    std::vector<c2sp::Tensor> xh;
    for (const auto& z : win.batches) {
        c2sp::Tensor x = bundle.recon.forward(z, false);
        // Back to the input's physical units.
        if (!bundle.norm.mean.empty()) {
            double* p = x.data();
            for (std::size_t c = 0; c < bundle.channels; ++c)
                for (std::size_t i = 0; i < bundle.n_in; ++i)
                    p[c * bundle.n_in + i] =
                        p[c * bundle.n_in + i] * bundle.norm.stddev[c] + bundle.norm.mean[c];
        }
        xh.push_back(std::move(x));
    }
    write_windows_csv(out, xh, win.start_s, "value");
    man.output(out);
    man.write(out + ".manifest.json");
    return 0;
}

int cmd_predict(const std::string& model, const std::string& in, const std::string& out) {
    c2sp::ModelBundle bundle = c2sp::ModelBundle::load(model);
    ManifestBuilder man("predict", bundle.cfg.seed);
    man.input(model);
    man.input(in);
    const c2sp::Recording rec = c2sp::read_edf(in);
    InferenceWindows win = window_recording(rec, bundle);
    c2sp::NoGradGuard ng;
    std::ofstream f(out);
    if (!f) throw c2sp::format_error("cannot open " + out);
    f << "window,start_s,p_interictal,p_preictal\n";
    f.precision(17);
    for (std::size_t w = 0; w < win.batches.size(); ++w) {
        c2sp::Tensor z = c2sp::compress_batch(bundle.matrix, win.batches[w]);
        c2sp::Tensor p = bundle.pred.forward(z, false);
        f << w << "," << win.start_s[w] << "," << p.data()[0] << "," << p.data()[1] << "\n";
    }
    man.output(out);
    man.write(out + ".manifest.json");
    return 0;
}

int cmd_export_matrix(const std::string& model, const std::string& out) {
    c2sp::ModelBundle bundle = c2sp::ModelBundle::load(model);
    ManifestBuilder man("export-matrix", bundle.cfg.seed);
    man.input(model);
    c2sp::export_matrix(bundle.matrix, out);
    man.output(out);
    man.write(out + ".manifest.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"c2sp: compressed-domain EEG seizure prediction toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic EEG recording");
    std::uint64_t seed = 0;
    std::size_t channels = 4;
    double minutes = 10.0;
    std::string seizures, synth_out = "synth";
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--channels", channels, "Channel count");
    synth->add_option("--minutes", minutes, "Recording length in minutes");
    synth->add_option("--seizures", seizures, "Schedule onset:offset[,...] in minutes");
    synth->add_option("--out", synth_out, "Output path prefix")->required();

    auto* train = app.add_subcommand("train", "Five-fold training with grid search");
    std::vector<std::string> data;
    std::string annotations, ratio = "1/4", mode = "float", config_path, train_out = "run";
    double lambda = 1.0;
    std::size_t budget = 0, folds = 5;
    train->add_option("--data", data, "EDF file(s) or one dataset container")->required();
    train->add_option("--annotations", annotations, "Annotation CSV sidecar");
    train->add_option("--ratio", ratio, "Compression ratio as a fraction, e.g. 1/4");
    train->add_option("--lambda", lambda, "Reconstruction loss weight");
    train->add_option("--mode", mode, "Matrix mode: float|binary");
    train->add_option("--config", config_path, "JSON training configuration");
    train->add_option("--budget", budget, "Max grid candidates (0 = all)");
    train->add_option("--folds", folds, "Folds to train after selection");
    train->add_option("--out", train_out, "Output directory")->required();

    std::string model, in_path, out_path;
    auto add_io = [&](CLI::App* sub, bool needs_in) {
        sub->add_option("--model", model, "Model bundle (.c2spmodl)")->required();
        if (needs_in) sub->add_option("--in", in_path, "Input file")->required();
        sub->add_option("--out", out_path, "Output file")->required();
    };
    auto* compress = app.add_subcommand("compress", "Compress EDF windows with a trained matrix");
    add_io(compress, true);
    auto* reconstruct =
        app.add_subcommand("reconstruct", "Reconstruct signals from compressed windows");
    add_io(reconstruct, true);
    auto* predict = app.add_subcommand("predict", "Per-window class probabilities for an EDF");
    add_io(predict, true);
    auto* exportm = app.add_subcommand("export-matrix", "Write the sensing matrix file");
    add_io(exportm, false);

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(seed, channels, minutes, seizures, synth_out);
        if (train->parsed())
            return cmd_train(data, annotations, ratio, lambda, mode, config_path, budget, folds,
                             train_out);
        if (compress->parsed()) return cmd_compress(model, in_path, out_path);
        if (reconstruct->parsed()) return cmd_reconstruct(model, in_path, out_path);
        if (predict->parsed()) return cmd_predict(model, in_path, out_path);
        if (exportm->parsed()) return cmd_export_matrix(model, out_path);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const c2sp::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const c2sp::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const c2sp::format_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

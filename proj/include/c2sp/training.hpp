#pragma once

#include <chrono>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "c2sp/adam.hpp"
#include "c2sp/checkpoint.hpp"
#include "c2sp/compression.hpp"
#include "c2sp/metrics.hpp"
#include "c2sp/pipeline.hpp"
#include "c2sp/prediction_net.hpp"
#include "c2sp/reconstruction_net.hpp"

namespace c2sp {

struct TrainConfig {
    double lambda = 1.0;       // joint objective weight; 0 disables reconstruction
    std::size_t epochs = 150;  // reference protocol trains a fixed 150
    double lr = 1e-3;
    std::size_t batch = 16;
    std::size_t filters_stem = 8;
    std::size_t size_fc = 50;
    std::size_t filters_recon = 16;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    // Best-validation-accuracy checkpointing (ties -> earliest epoch); set
    // false to keep the final epoch instead.
    bool keep_best = true;
    ResidualMode residual = ResidualMode::ProjectUp;
};

// The hyper-parameter grids of the reference protocol.
struct SearchGrids {
    std::vector<double> lrs = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
    std::vector<std::size_t> filters_stem = {4, 8, 16, 32};
    std::vector<std::size_t> size_fc = {25, 50, 100};
    std::vector<std::size_t> batches = {4, 8, 16, 32};

    std::size_t total() const {
        return lrs.size() * filters_stem.size() * size_fc.size() * batches.size();
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_sensitivity = 0.0;
    double wall_seconds = 0.0;
};

inline std::string epoch_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,train_loss,val_accuracy,val_sensitivity,wall_seconds\n";
    for (const auto& e : log)
        os << e.epoch << "," << e.train_loss << "," << e.val_accuracy << ","
           << e.val_sensitivity << "," << e.wall_seconds << "\n";
    return os.str();
}

// L_pred + lambda * L_recon. When lambda is 0 callers skip the
// reconstruction forward entirely and pass undefined x_hat.
inline Tensor joint_loss(const Tensor& y_hat, const Tensor& y, const Tensor& x_hat,
                         const Tensor& x, double lambda) {
    if (lambda < 0.0) throw config_error("joint_loss: lambda must be >= 0");
    Tensor pred = cross_entropy(y_hat, y);
    if (lambda == 0.0) return pred;
    return add(pred, mul_scalar(mse(x_hat, x), lambda));
}

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

struct ModelBundle {
    Ratio ratio{1, 4};
    MatrixMode mode = MatrixMode::Float;
    std::size_t n_in = 0;      // N, samples per window per channel
    std::size_t channels = 0;  // C
    double sample_rate = 256.0;
    TrainConfig cfg;
    std::size_t fold = 0;

    CompressionMatrix matrix;
    PredictionNet pred;
    ReconstructionNet recon;
    NormStats norm;

    static ModelBundle create(Ratio ratio, MatrixMode mode, std::size_t n_in,
                              std::size_t channels, double sample_rate, const TrainConfig& cfg,
                              std::size_t fold) {
        ModelBundle b;
        b.ratio = ratio;
        b.mode = mode;
        b.n_in = n_in;
        b.channels = channels;
        b.sample_rate = sample_rate;
        b.cfg = cfg;
        b.fold = fold;
        Rng rng(derive_seed(cfg.seed, 0x11117 + fold));
        b.matrix = CompressionMatrix::create(ratio, n_in, mode, rng);
        PredictionConfig pc;
        pc.in_channels = channels;
        pc.filters_stem = cfg.filters_stem;
        pc.size_fc = cfg.size_fc;
        pc.residual = cfg.residual;
        b.pred = PredictionNet(pc, rng);
        ReconstructionConfig rc;
        rc.ratio = ratio;
        rc.original_len = n_in;
        rc.channels = channels;
        rc.filters_recon = cfg.filters_recon;
        b.recon = ReconstructionNet(rc, rng);
        return b;
    }

    std::vector<NamedParam> trainable_params(bool include_recon) {
        std::vector<NamedParam> out{{"compression.weights", matrix.weights}};
        for (auto& p : pred.params()) out.push_back(p);
        if (include_recon)
            for (auto& p : recon.params()) out.push_back(p);
        return out;
    }

    std::vector<Section> state_sections() {
        std::vector<Section> out;
        out.push_back({"compression.weights", matrix.weights.values()});
        for (auto& p : pred.state()) out.push_back({p.name, p.tensor.values()});
        for (auto& p : recon.state()) out.push_back({p.name, p.tensor.values()});
        if (!norm.mean.empty()) {
            out.push_back({"norm.mean", norm.mean});
            out.push_back({"norm.stddev", norm.stddev});
        }
        return out;
    }

    void load_state_sections(const std::vector<Section>& sections) {
        std::vector<NamedParam> params{{"compression.weights", matrix.weights}};
        for (auto& p : pred.params()) params.push_back(p);
        for (auto& p : recon.params()) params.push_back(p);
        auto bns = pred.named_batchnorms();
        for (auto& b : recon.named_batchnorms()) bns.push_back(b);
        load_into(sections, params, bns);
        for (const auto& s : sections) {
            if (s.name == "norm.mean") norm.mean = s.values;
            if (s.name == "norm.stddev") norm.stddev = s.values;
        }
    }

    ConfigMap config_map() const {
        ConfigMap m;
        m["ratio"] = ratio.str();
        m["mode"] = mode == MatrixMode::Binary ? "binary" : "float";
        m["n_in"] = std::to_string(n_in);
        m["channels"] = std::to_string(channels);
        m["sample_rate"] = std::to_string(sample_rate);
        m["fold"] = std::to_string(fold);
        m["lambda"] = std::to_string(cfg.lambda);
        m["epochs"] = std::to_string(cfg.epochs);
        m["lr"] = std::to_string(cfg.lr);
        m["batch"] = std::to_string(cfg.batch);
        m["filters_stem"] = std::to_string(cfg.filters_stem);
        m["size_fc"] = std::to_string(cfg.size_fc);
        m["filters_recon"] = std::to_string(cfg.filters_recon);
        m["seed"] = std::to_string(cfg.seed);
        m["keep_best"] = cfg.keep_best ? "1" : "0";
        m["residual"] = cfg.residual == ResidualMode::ProjectUp ? "project_up" : "literal";
        return m;
    }

    void save(const std::string& path) {
        write_checkpoint(path, config_map(), state_sections());
    }

    static ModelBundle load(const std::string& path) {
        ConfigMap m;
        std::vector<Section> sections;
        read_checkpoint(path, m, sections);
        TrainConfig cfg;
        cfg.lambda = std::stod(m.at("lambda"));
        cfg.epochs = std::stoul(m.at("epochs"));
        cfg.lr = std::stod(m.at("lr"));
        cfg.batch = std::stoul(m.at("batch"));
        cfg.filters_stem = std::stoul(m.at("filters_stem"));
        cfg.size_fc = std::stoul(m.at("size_fc"));
        cfg.filters_recon = std::stoul(m.at("filters_recon"));
        cfg.seed = std::stoull(m.at("seed"));
        cfg.keep_best = m.at("keep_best") == "1";
        cfg.residual =
            m.at("residual") == "literal" ? ResidualMode::Literal : ResidualMode::ProjectUp;
        ModelBundle b = create(Ratio::parse(m.at("ratio")),
                               m.at("mode") == "binary" ? MatrixMode::Binary : MatrixMode::Float,
                               std::stoul(m.at("n_in")), std::stoul(m.at("channels")),
                               std::stod(m.at("sample_rate")), cfg, std::stoul(m.at("fold")));
        b.load_state_sections(sections);
        return b;
    }
};

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

class Trainer {
  public:
    // `ds` must already be normalized against this split's training windows
    // and must outlive the trainer.
    Trainer(const WindowedDataset& ds, const FoldSplit& split, TrainConfig cfg, Ratio ratio,
            MatrixMode mode, std::size_t fold = 0)
        : ds_(&ds), split_(split), cfg_(cfg) {
        if (split.train_ids.empty()) throw config_error("train_fold: empty training set");
        bundle_ = ModelBundle::create(ratio, mode, ds.window_len(), ds.n_channels,
                                      ds.sample_rate, cfg, fold);
        bundle_.norm = ds.stats;
        AdamConfig ac{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
        optimizer_ = Adam(bundle_.trainable_params(cfg.lambda > 0.0), ac);
    }

    ModelBundle& bundle() { return bundle_; }
    const std::vector<EpochLog>& log() const { return log_; }
    std::size_t epochs_done() const { return epoch_; }
    double best_val_accuracy() const { return best_acc_; }
    std::size_t recon_calls() const { return bundle_.recon.forward_calls(); }

    void run_epoch() {
        const auto t0 = std::chrono::steady_clock::now();
        ++epoch_;
        std::vector<std::size_t> order = split_.train_ids;
        Rng rng(derive_seed(cfg_.seed, 0xe90c + epoch_));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg_.batch) {
            const std::size_t bsz = std::min(cfg_.batch, order.size() - pos);
            std::vector<std::size_t> ids(order.begin() + pos, order.begin() + pos + bsz);
            Tensor x, y;
            assemble(ids, x, y);
            optimizer_.zero_grad();
            Tensor z = compress_batch(bundle_.matrix, x);
            Tensor probs = bundle_.pred.forward(z, true);
            Tensor loss;
            if (cfg_.lambda > 0.0) {
                Tensor x_hat = bundle_.recon.forward(z, true);
                loss = joint_loss(probs, y, x_hat, x, cfg_.lambda);
            } else {
                loss = joint_loss(probs, y, Tensor(), Tensor(), 0.0);
            }
            loss_sum += loss.item();
            backward(loss);
            optimizer_.step();
            ++n_batches;
        }

        const auto val = evaluate_classification(split_.val_ids);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EpochLog e{epoch_, loss_sum / static_cast<double>(n_batches), val.accuracy,
                   val.sensitivity.value_or(0.0), wall};
        log_.push_back(e);
        // Ties go to the later epoch: with a joint objective the
        // reconstruction keeps improving after the accuracy plateaus, so the
        // latest equally-accurate snapshot is the better model.
        if (cfg_.keep_best && (!best_snapshot_ || val.accuracy >= best_acc_)) {
            best_acc_ = val.accuracy;
            best_epoch_ = epoch_;
            best_snapshot_ = bundle_.state_sections();
        }
    }

    void run(std::size_t epochs) {
        while (epoch_ < epochs) run_epoch();
    }

    // Restores the best-validation checkpoint (if enabled) and returns the
    // finished bundle.
    ModelBundle finalize() {
        if (cfg_.keep_best && best_snapshot_) bundle_.load_state_sections(*best_snapshot_);
        return bundle_;
    }

    ClassifyMetrics evaluate_classification(const std::vector<std::size_t>& ids) {
        NoGradGuard ng;
        std::vector<int> preds, labels;
        const std::size_t eval_batch = 32;
        for (std::size_t pos = 0; pos < ids.size(); pos += eval_batch) {
            const std::size_t bsz = std::min(eval_batch, ids.size() - pos);
            std::vector<std::size_t> batch(ids.begin() + pos, ids.begin() + pos + bsz);
            Tensor x, y;
            assemble(batch, x, y);
            Tensor z = compress_batch(bundle_.matrix, x);
            Tensor probs = bundle_.pred.forward(z, false);
            const double* p = probs.data();
            for (std::size_t i = 0; i < bsz; ++i) {
                preds.push_back(p[i * 2 + 1] > p[i * 2] ? 1 : 0);
                labels.push_back(static_cast<int>(ds_->windows[batch[i]].label));
            }
        }
        return classify_metrics(preds, labels, kWindowSeconds);
    }

    FoldResult evaluate_test() {
        FoldResult fr;
        fr.fold = bundle_.fold;
        fr.cls = evaluate_classification(split_.test_ids);
        if (cfg_.lambda > 0.0) {
            NoGradGuard ng;
            double pcc_sum = 0.0, psnr_sum = 0.0;
            std::size_t pcc_n = 0, psnr_n = 0;
            const std::size_t eval_batch = 8;
            const auto& ids = split_.test_ids;
            for (std::size_t pos = 0; pos < ids.size(); pos += eval_batch) {
                const std::size_t bsz = std::min(eval_batch, ids.size() - pos);
                std::vector<std::size_t> batch(ids.begin() + pos, ids.begin() + pos + bsz);
                Tensor x, y;
                assemble(batch, x, y);
                Tensor z = compress_batch(bundle_.matrix, x);
                Tensor x_hat = bundle_.recon.forward(z, false);
                for (std::size_t i = 0; i < bsz; ++i) {
                    Tensor xo = to_cols(x, i);
                    Tensor xr = to_cols(x_hat, i);
                    if (auto v = pcc(xo, xr)) {
                        pcc_sum += *v;
                        ++pcc_n;
                    }
                    if (auto v = psnr(xo, xr); v && std::isfinite(*v)) {
                        psnr_sum += *v;
                        ++psnr_n;
                    }
                }
            }
            if (pcc_n) fr.pcc = pcc_sum / static_cast<double>(pcc_n);
            if (psnr_n) fr.psnr = psnr_sum / static_cast<double>(psnr_n);
        }
        return fr;
    }

    // Resume support: parameters, batchnorm stats, optimizer moments,
    // epoch counter and the best-checkpoint tracker.
    std::vector<Section> save_state() {
        std::vector<Section> out = bundle_.state_sections();
        for (const auto& p : optimizer_.state()) out.push_back({p.name, p.tensor.values()});
        out.push_back({"trainer.epoch", {static_cast<double>(epoch_)}});
        out.push_back({"trainer.best_acc", {best_acc_}});
        out.push_back({"trainer.best_epoch", {static_cast<double>(best_epoch_)}});
        if (best_snapshot_) {
            for (const auto& s : *best_snapshot_) out.push_back({"best." + s.name, s.values});
        }
        return out;
    }

    void load_state(const std::vector<Section>& sections) {
        bundle_.load_state_sections(sections);
        std::vector<NamedParam> adam_state;
        std::vector<Section> snapshot;
        for (const auto& s : sections) {
            if (s.name.rfind("adam.", 0) == 0) {
                adam_state.push_back({s.name, Tensor::from({s.values.size()}, s.values)});
            } else if (s.name == "trainer.epoch") {
                epoch_ = static_cast<std::size_t>(s.values.at(0));
            } else if (s.name == "trainer.best_acc") {
                best_acc_ = s.values.at(0);
            } else if (s.name == "trainer.best_epoch") {
                best_epoch_ = static_cast<std::size_t>(s.values.at(0));
            } else if (s.name.rfind("best.", 0) == 0) {
                snapshot.push_back({s.name.substr(5), s.values});
            }
        }
        optimizer_.load_state(adam_state);
        if (!snapshot.empty()) best_snapshot_ = std::move(snapshot);
    }

  private:
    // Gather windows into x [BxCxN] (window tensors are [NxC]) and one-hot
    // labels y [Bx2].
    void assemble(const std::vector<std::size_t>& ids, Tensor& x, Tensor& y) const {
        const std::size_t B = ids.size();
        const std::size_t C = ds_->n_channels;
        const std::size_t N = ds_->window_len();
        x = Tensor::zeros({B, C, N});
        y = Tensor::zeros({B, 2});
        double* px = x.data();
        double* py = y.data();
        for (std::size_t b = 0; b < B; ++b) {
            const Window& w = ds_->windows.at(ids[b]);
            const double* src = w.data.data();
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < C; ++c)
                    px[(b * C + c) * N + i] = src[i * C + c];
            py[b * 2 + static_cast<std::size_t>(w.label)] = 1.0;
        }
    }

    // Batch slice [BxCxN] -> single window [NxC] for the signal metrics.
    static Tensor to_cols(const Tensor& x, std::size_t b) {
        const std::size_t C = x.dim(1), N = x.dim(2);
        Tensor out = Tensor::zeros({N, C});
        const double* p = x.data() + b * C * N;
        double* q = out.data();
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < N; ++i) q[i * C + c] = p[c * N + i];
        return out;
    }

    const WindowedDataset* ds_;
    FoldSplit split_;
    TrainConfig cfg_;
    ModelBundle bundle_;
    Adam optimizer_;
    std::vector<EpochLog> log_;
    std::size_t epoch_ = 0;
    double best_acc_ = -1.0;
    std::size_t best_epoch_ = 0;
    std::optional<std::vector<Section>> best_snapshot_;
};

struct TrainFoldResult {
    ModelBundle bundle;
    std::vector<EpochLog> log;
    FoldResult test;
};

// Full single-fold protocol: normalize against this split's training windows,
// train for cfg.epochs, keep the best-validation checkpoint, evaluate on the
// held-out fold.
inline TrainFoldResult train_fold(const WindowedDataset& raw, const FoldSplit& split,
                                  const TrainConfig& cfg, Ratio ratio, MatrixMode mode,
                                  std::size_t fold = 0) {
    if (split.train_ids.empty()) throw config_error("train_fold: empty training set");
    std::vector<std::size_t> stat_ids = split.train_ids;
    stat_ids.insert(stat_ids.end(), split.val_ids.begin(), split.val_ids.end());
    WindowedDataset ds = normalize(raw, stat_ids);
    Trainer trainer(ds, split, cfg, ratio, mode, fold);
    trainer.run(cfg.epochs);
    TrainFoldResult out{trainer.finalize(), trainer.log(), FoldResult{}};
    out.test = trainer.evaluate_test();
    return out;
}

// ---------------------------------------------------------------------------
// grid search
// ---------------------------------------------------------------------------

struct SweepEntry {
    TrainConfig cfg;
    double val_accuracy = 0.0;
};

struct GridSearchResult {
    TrainConfig best;
    EvalReport report;
    std::vector<TrainFoldResult> folds;
    std::vector<SweepEntry> sweep;
};

// Exhaustive sweep over the grids; selection by validation accuracy on fold
// 0, ties broken by enumeration order (lower lr, then smaller model, then
// smaller batch). `budget` > 0 deterministically subsamples the grid.
inline GridSearchResult grid_search(const WindowedDataset& raw, Ratio ratio, MatrixMode mode,
                                    double lambda, const SearchGrids& grids,
                                    const TrainConfig& base, std::size_t budget = 0,
                                    std::size_t n_folds = 5) {
    if (grids.lrs.empty() || grids.filters_stem.empty() || grids.size_fc.empty() ||
        grids.batches.empty()) {
        throw config_error("grid_search: empty grid");
    }
    std::vector<TrainConfig> candidates;
    for (double lr : grids.lrs)
        for (std::size_t fs : grids.filters_stem)
            for (std::size_t fc : grids.size_fc)
                for (std::size_t b : grids.batches) {
                    TrainConfig c = base;
                    c.lambda = lambda;
                    c.lr = lr;
                    c.filters_stem = fs;
                    c.size_fc = fc;
                    c.batch = b;
                    candidates.push_back(c);
                }
    if (budget > 0 && budget < candidates.size()) {
        std::vector<TrainConfig> picked;
        for (std::size_t i = 0; i < budget; ++i)
            picked.push_back(candidates[i * candidates.size() / budget]);
        candidates = std::move(picked);
    }

    const auto splits = five_fold_split(raw.windows.size(), base.seed);
    GridSearchResult out;
    double best_acc = -1.0;
    for (const auto& cand : candidates) {
        TrainFoldResult r = train_fold(raw, splits[0], cand, ratio, mode, 0);
        double acc = -1.0;
        for (const auto& e : r.log) acc = std::max(acc, e.val_accuracy);
        out.sweep.push_back({cand, acc});
        if (acc > best_acc) {
            best_acc = acc;
            out.best = cand;
        }
    }

    for (std::size_t f = 0; f < std::min<std::size_t>(n_folds, splits.size()); ++f) {
        TrainFoldResult r = train_fold(raw, splits[f], out.best, ratio, mode, f);
        out.report.folds.push_back(r.test);
        out.folds.push_back(std::move(r));
    }
    return out;
}

}  // namespace c2sp

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "c2sp/compression.hpp"
#include "c2sp/edf.hpp"
#include "c2sp/tensor.hpp"

namespace c2sp {

constexpr double kWindowSeconds = 20.0;
constexpr double kSphSeconds = 5.0 * 60.0;      // seizure prediction horizon
constexpr double kPilSeconds = 30.0 * 60.0;     // preictal interval length
constexpr double kLeadGapSeconds = 4.0 * 3600.0;
constexpr double kPostSeizureSeconds = 30.0 * 60.0;
constexpr double kPreictalStride = 15.0;  // 25% overlap of 20 s windows
constexpr double kInterictalStride = 20.0;

enum class WindowLabel : std::uint8_t { Interictal = 0, Preictal = 1 };

struct Seizure {
    double onset_s = 0.0;   // global timeline
    double offset_s = 0.0;
};

struct LabeledInterval {
    WindowLabel label = WindowLabel::Interictal;
    double begin_s = 0.0;  // global timeline, [begin, end)
    double end_s = 0.0;
};

struct Window {
    Tensor data;  // [N_raw x C]
    WindowLabel label = WindowLabel::Interictal;
    std::string recording_id;
    double start_s = 0.0;  // global timeline
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct WindowedDataset {
    std::vector<Window> windows;
    double sample_rate = 256.0;
    std::size_t n_channels = 0;
    NormStats stats;  // populated by normalize()
    bool normalized = false;

    std::size_t window_len() const {
        return static_cast<std::size_t>(kWindowSeconds * sample_rate);
    }
};

// ---------------------------------------------------------------------------
// labeling protocol
// ---------------------------------------------------------------------------

inline std::vector<Seizure> all_seizures(const std::vector<Recording>& subject) {
    std::vector<Seizure> out;
    for (const auto& rec : subject)
        for (const auto& a : rec.annotations)
            out.push_back({rec.start_time_s + a.onset_s, rec.start_time_s + a.offset_s});
    std::sort(out.begin(), out.end(),
              [](const Seizure& a, const Seizure& b) { return a.onset_s < b.onset_s; });
    return out;
}

inline double timeline_start(const std::vector<Recording>& subject) {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& r : subject) t = std::min(t, r.start_time_s);
    return t;
}

inline double timeline_end(const std::vector<Recording>& subject) {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& r : subject) t = std::max(t, r.end_time_s());
    return t;
}

// Seizures whose onset follows >= 4 h without seizures; the subject's first
// seizure qualifies when >= 4 h of timeline precede it.
inline std::vector<Seizure> find_lead_seizures(const std::vector<Recording>& subject) {
    const auto seizures = all_seizures(subject);
    const double start = timeline_start(subject);
    std::vector<Seizure> lead;
    for (std::size_t i = 0; i < seizures.size(); ++i) {
        const double prev_end = i == 0 ? start : seizures[i - 1].offset_s;
        if (seizures[i].onset_s - prev_end >= kLeadGapSeconds) lead.push_back(seizures[i]);
    }
    return lead;
}

// Preictal: [onset - 35 min, onset - 5 min) per lead seizure. Interictal:
// between 30 min after any seizure offset and 35 min before the next seizure
// (conservatively including non-lead seizures as boundaries), plus the span
// before the first seizure and after the last. The SPH gap and ictal spans
// carry no label. Intervals are clipped to the subject timeline.
inline std::vector<LabeledInterval> label_regions(const std::vector<Recording>& subject,
                                                  double sph = kSphSeconds,
                                                  double pil = kPilSeconds) {
    const auto seizures = all_seizures(subject);
    const auto lead = find_lead_seizures(subject);
    const double start = timeline_start(subject);
    const double end = timeline_end(subject);

    std::vector<LabeledInterval> out;
    for (const auto& s : lead) {
        LabeledInterval iv{WindowLabel::Preictal, std::max(s.onset_s - sph - pil, start),
                           std::min(s.onset_s - sph, end)};
        if (iv.end_s - iv.begin_s > 0.0) out.push_back(iv);
    }
    // Interictal boundaries from consecutive seizures over the whole timeline.
    double cursor = start;
    for (const auto& s : seizures) {
        LabeledInterval iv{WindowLabel::Interictal, cursor,
                           std::min(s.onset_s - sph - pil, end)};
        if (iv.end_s - iv.begin_s > 0.0) out.push_back(iv);
        cursor = std::max(cursor, s.offset_s + kPostSeizureSeconds);
    }
    if (end - cursor > 0.0) out.push_back({WindowLabel::Interictal, cursor, end});
    std::sort(out.begin(), out.end(), [](const LabeledInterval& a, const LabeledInterval& b) {
        return a.begin_s < b.begin_s;
    });
    return out;
}

// ---------------------------------------------------------------------------
// window extraction
// ---------------------------------------------------------------------------

inline std::vector<Recording const*> sorted_recordings(const std::vector<Recording>& subject) {
    std::vector<Recording const*> recs;
    for (const auto& r : subject) recs.push_back(&r);
    std::sort(recs.begin(), recs.end(), [](const Recording* a, const Recording* b) {
        return a->start_time_s < b->start_time_s;
    });
    return recs;
}

inline WindowedDataset extract_windows(const std::vector<Recording>& subject,
                                       const std::vector<LabeledInterval>& intervals) {
    WindowedDataset ds;
    if (subject.empty()) return ds;
    ds.sample_rate = subject.front().sample_rate;
    ds.n_channels = subject.front().n_channels();
    for (const auto& r : subject) {
        if (r.sample_rate != ds.sample_rate || r.n_channels() != ds.n_channels) {
            throw config_error("extract_windows: recordings disagree on rate or channel count");
        }
    }
    const std::size_t n_raw = ds.window_len();

    for (const auto& iv : intervals) {
        const double stride =
            iv.label == WindowLabel::Preictal ? kPreictalStride : kInterictalStride;
        for (const Recording* rec : sorted_recordings(subject)) {
            const double seg_begin = std::max(iv.begin_s, rec->start_time_s);
            const double seg_end = std::min(iv.end_s, rec->end_time_s());
            if (seg_end - seg_begin < kWindowSeconds) continue;
            const std::size_t count = static_cast<std::size_t>(
                std::floor((seg_end - seg_begin - kWindowSeconds) / stride + 1e-9)) + 1;
            for (std::size_t w = 0; w < count; ++w) {
                const double t0 = seg_begin + stride * static_cast<double>(w);
                const std::size_t s0 = static_cast<std::size_t>(
                    std::llround((t0 - rec->start_time_s) * rec->sample_rate));
                if (s0 + n_raw > rec->n_samples()) break;
                Tensor data = Tensor::zeros({n_raw, ds.n_channels});
                double* p = data.data();
                for (std::size_t c = 0; c < ds.n_channels; ++c) {
                    const double* src = rec->samples[c].data() + s0;
                    for (std::size_t i = 0; i < n_raw; ++i) p[i * ds.n_channels + c] = src[i];
                }
                ds.windows.push_back({std::move(data), iv.label, rec->id, t0});
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// normalization (training-fold statistics only)
// ---------------------------------------------------------------------------

inline NormStats compute_norm_stats(const WindowedDataset& ds,
                                    const std::vector<std::size_t>& train_ids) {
    const std::size_t C = ds.n_channels;
    NormStats st;
    st.mean.assign(C, 0.0);
    st.stddev.assign(C, 0.0);
    std::size_t n = 0;
    for (std::size_t id : train_ids) {
        const Tensor& w = ds.windows.at(id).data;
        const double* p = w.data();
        const std::size_t rows = w.dim(0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t c = 0; c < C; ++c) st.mean[c] += p[i * C + c];
        n += rows;
    }
    for (std::size_t c = 0; c < C; ++c) st.mean[c] /= static_cast<double>(n);
    for (std::size_t id : train_ids) {
        const Tensor& w = ds.windows.at(id).data;
        const double* p = w.data();
        const std::size_t rows = w.dim(0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                const double d = p[i * C + c] - st.mean[c];
                st.stddev[c] += d * d;
            }
    }
    for (std::size_t c = 0; c < C; ++c) {
        st.stddev[c] = std::sqrt(st.stddev[c] / static_cast<double>(n));
        st.stddev[c] = std::max(st.stddev[c], 1e-8);
    }
    return st;
}

// Returns a normalized copy; stats derive from the given training windows and
// are applied to every window.
inline WindowedDataset normalize(const WindowedDataset& ds,
                                 const std::vector<std::size_t>& train_ids) {
    WindowedDataset out;
    out.sample_rate = ds.sample_rate;
    out.n_channels = ds.n_channels;
    out.stats = compute_norm_stats(ds, train_ids);
    out.normalized = true;
    const std::size_t C = ds.n_channels;
    out.windows.reserve(ds.windows.size());
    for (const auto& w : ds.windows) {
        Window nw{w.data.clone(), w.label, w.recording_id, w.start_s};
        double* p = nw.data.data();
        const std::size_t rows = nw.data.dim(0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t c = 0; c < C; ++c)
                p[i * C + c] = (p[i * C + c] - out.stats.mean[c]) / out.stats.stddev[c];
        out.windows.push_back(std::move(nw));
    }
    return out;
}

// ---------------------------------------------------------------------------
// five-fold cross validation split
// ---------------------------------------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> val_ids;
    std::vector<std::size_t> test_ids;
};

inline std::vector<FoldSplit> five_fold_split(std::size_t n_windows, std::uint64_t seed) {
    const std::size_t k = 5;
    if (n_windows < k) {
        throw config_error("five_fold_split: need at least 5 windows, have " +
                           std::to_string(n_windows));
    }
    std::vector<std::size_t> ids(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) ids[i] = i;
    Rng rng(derive_seed(seed, 0xf01d));
    rng.shuffle(ids);

    // Fold sizes within one of each other; earlier folds absorb the remainder.
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n_windows / k + (f < n_windows % k ? 1 : 0);
        folds[f].assign(ids.begin() + pos, ids.begin() + pos + size);
        pos += size;
    }

    std::vector<FoldSplit> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        out[f].test_ids = folds[f];
        std::vector<std::size_t> rest;
        for (std::size_t g = 0; g < k; ++g)
            if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
        Rng inner(derive_seed(seed, 0x7a10 + f));
        inner.shuffle(rest);
        const std::size_t n_val = rest.size() / 5;  // 20% of the training set
        out[f].val_ids.assign(rest.begin(), rest.begin() + n_val);
        out[f].train_ids.assign(rest.begin() + n_val, rest.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic EEG generator
// ---------------------------------------------------------------------------

struct SynthParams {
    double background_amp = 1.0;   // sum-of-damped-sinusoids background
    double white_noise_amp = 0.05;
    double burst_amp = 1.0;        // preictal discriminative component
    std::size_t n_components = 5;
};

// Deterministic synthetic EEG. Background is a sum of slowly amplitude-
// modulated sinusoids (0.5-12 Hz) plus white noise. Ahead of each scheduled
// seizure onset a subject-seeded narrowband burst (18-24 Hz), amplitude
// modulated at 2 Hz, ramps up through the preictal span.
inline Recording synth_eeg(std::uint64_t seed, std::size_t n_channels, double minutes,
                           const std::vector<Annotation>& schedule,
                           double sample_rate = 256.0, double start_time_s = 0.0,
                           const std::string& id = "synth",
                           const SynthParams& params = SynthParams()) {
    if (minutes <= 0.0) throw config_error("synth_eeg: duration must be positive");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& a = schedule[i];
        if (a.offset_s <= a.onset_s || a.onset_s < 0.0 || a.offset_s > minutes * 60.0) {
            throw config_error("synth_eeg: bad seizure interval");
        }
        if (i > 0 && a.onset_s < schedule[i - 1].offset_s) {
            throw config_error("synth_eeg: overlapping seizures in schedule");
        }
    }

    Recording rec;
    rec.id = id;
    rec.start_time_s = start_time_s;
    rec.sample_rate = sample_rate;
    rec.annotations = schedule;
    const std::size_t total = static_cast<std::size_t>(std::llround(minutes * 60.0 * sample_rate));
    rec.samples.assign(n_channels, std::vector<double>(total, 0.0));

    const double two_pi = 6.283185307179586476925286766559;
    Rng subject_rng(derive_seed(seed, 0x5ee6));
    const std::size_t nc = params.n_components;
    std::vector<double> freq(nc), env_freq(nc), amp(nc);
    for (std::size_t j = 0; j < nc; ++j) {
        freq[j] = subject_rng.uniform(0.5, 12.0);
        env_freq[j] = subject_rng.uniform(0.05, 0.2);
        amp[j] = subject_rng.uniform(0.5, 1.0);
    }
    const double burst_freq = subject_rng.uniform(18.0, 24.0);

    for (std::size_t c = 0; c < n_channels; ++c) {
        Rng ch_rng(derive_seed(seed, 0xc000 + c));
        std::vector<double> phase(nc), env_phase(nc);
        for (std::size_t j = 0; j < nc; ++j) {
            phase[j] = ch_rng.uniform(0.0, two_pi);
            env_phase[j] = ch_rng.uniform(0.0, two_pi);
        }
        const double burst_phase = ch_rng.uniform(0.0, two_pi);
        double* out = rec.samples[c].data();
        for (std::size_t i = 0; i < total; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            double v = 0.0;
            if (params.background_amp != 0.0) {
                for (std::size_t j = 0; j < nc; ++j) {
                    const double env =
                        1.0 + 0.3 * std::sin(two_pi * env_freq[j] * t + env_phase[j]);
                    v += amp[j] * env * std::sin(two_pi * freq[j] * t + phase[j]);
                }
                v *= params.background_amp;
            }
            if (params.white_noise_amp != 0.0) v += params.white_noise_amp * ch_rng.normal();
            out[i] = v;
        }
        if (params.burst_amp != 0.0) {
            for (const auto& sz : schedule) {
                const double pre_begin = std::max(sz.onset_s - kSphSeconds - kPilSeconds, 0.0);
                const std::size_t i0 =
                    static_cast<std::size_t>(std::llround(pre_begin * sample_rate));
                const std::size_t i1 = std::min(
                    total, static_cast<std::size_t>(std::llround(sz.offset_s * sample_rate)));
                for (std::size_t i = i0; i < i1; ++i) {
                    const double t = static_cast<double>(i) / sample_rate;
                    double a = 1.5;
                    if (t < sz.onset_s) {
                        // Ramp 0.5 -> 1.5 across the pre-onset span.
                        const double frac = (t - pre_begin) / (sz.onset_s - pre_begin);
                        a = 0.5 + frac;
                    }
                    const double am = 1.0 + 0.5 * std::sin(two_pi * 2.0 * t);
                    out[i] += params.burst_amp * a * am *
                              std::sin(two_pi * burst_freq * t + burst_phase);
                }
            }
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// annotation CSV sidecar: recording_id,onset_s,offset_s
// ---------------------------------------------------------------------------

inline void write_annotations_csv(const std::vector<Recording>& recs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw format_error("cannot open " + path);
    f << "recording_id,onset_s,offset_s\n";
    for (const auto& r : recs)
        for (const auto& a : r.annotations)
            f << r.id << "," << a.onset_s << "," << a.offset_s << "\n";
}

inline void apply_annotations_csv(std::vector<Recording>& recs, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw format_error("cannot open " + path);
    std::string line;
    std::getline(f, line);  // header
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, onset, offset;
        if (!std::getline(ss, id, ',') || !std::getline(ss, onset, ',') ||
            !std::getline(ss, offset)) {
            throw format_error(path + ":" + std::to_string(lineno) + ": malformed row");
        }
        bool found = false;
        for (auto& r : recs) {
            if (r.id == id) {
                r.annotations.push_back({std::stod(onset), std::stod(offset)});
                found = true;
            }
        }
        if (!found) {
            throw format_error(path + ":" + std::to_string(lineno) + ": unknown recording id " +
                               id);
        }
    }
    for (auto& r : recs) {
        std::sort(r.annotations.begin(), r.annotations.end(),
                  [](const Annotation& a, const Annotation& b) { return a.onset_s < b.onset_s; });
    }
}

// ---------------------------------------------------------------------------
// cached dataset container, magic "C2SPDATA"
// ---------------------------------------------------------------------------

inline void write_dataset(const WindowedDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open " + path);
    std::string out = "C2SPDATA";
    out.push_back(1);  // version
    detail::put_u32_le(out, static_cast<std::uint32_t>(ds.windows.size()));
    detail::put_u32_le(out, static_cast<std::uint32_t>(ds.n_channels));
    detail::put_u32_le(out, static_cast<std::uint32_t>(ds.window_len()));
    detail::put_u32_le(out, static_cast<std::uint32_t>(std::llround(ds.sample_rate)));
    std::vector<std::string> rec_ids;
    auto rec_index = [&](const std::string& id) -> std::uint32_t {
        for (std::size_t i = 0; i < rec_ids.size(); ++i)
            if (rec_ids[i] == id) return static_cast<std::uint32_t>(i);
        rec_ids.push_back(id);
        return static_cast<std::uint32_t>(rec_ids.size() - 1);
    };
    for (const auto& w : ds.windows) {
        out.push_back(static_cast<char>(w.label));
        detail::put_u32_le(out, rec_index(w.recording_id));
        std::uint64_t start_sample =
            static_cast<std::uint64_t>(std::llround(w.start_s * ds.sample_rate));
        for (int i = 0; i < 8; ++i)
            out.push_back(static_cast<char>((start_sample >> (8 * i)) & 0xff));
        const double* p = w.data.data();
        for (std::size_t i = 0; i < w.data.size(); ++i) detail::put_f64_le(out, p[i]);
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw format_error("write failed for " + path);
}

inline WindowedDataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 25 || std::memcmp(p, "C2SPDATA", 8) != 0) {
        throw format_error(path + ": bad dataset magic");
    }
    if (p[8] != 1) throw format_error(path + ": unsupported dataset version");
    WindowedDataset ds;
    const std::uint32_t count = detail::get_u32_le(p + 9);
    ds.n_channels = detail::get_u32_le(p + 13);
    const std::uint32_t n_raw = detail::get_u32_le(p + 17);
    ds.sample_rate = detail::get_u32_le(p + 21);
    std::size_t off = 25;
    const std::size_t window_bytes = 1 + 4 + 8 + static_cast<std::size_t>(n_raw) *
                                     ds.n_channels * 8;
    if (blob.size() != 25 + count * window_bytes) {
        throw format_error(path + ": dataset payload size mismatch");
    }
    for (std::uint32_t w = 0; w < count; ++w) {
        Window win;
        win.label = static_cast<WindowLabel>(p[off]);
        const std::uint32_t rec = detail::get_u32_le(p + off + 1);
        win.recording_id = "rec" + std::to_string(rec);
        std::uint64_t start_sample = 0;
        for (int i = 0; i < 8; ++i)
            start_sample |= static_cast<std::uint64_t>(p[off + 5 + i]) << (8 * i);
        win.start_s = static_cast<double>(start_sample) / ds.sample_rate;
        off += 13;
        std::vector<double> vals(static_cast<std::size_t>(n_raw) * ds.n_channels);
        for (std::size_t i = 0; i < vals.size(); ++i, off += 8)
            vals[i] = detail::get_f64_le(p + off);
        win.data = Tensor::from({n_raw, ds.n_channels}, std::move(vals));
        ds.windows.push_back(std::move(win));
    }
    return ds;
}

}  // namespace c2sp

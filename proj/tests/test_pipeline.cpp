#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "c2sp/pipeline.hpp"

using namespace c2sp;

namespace {

// A recording shell with no samples, for labeling-rule tests that only need
// the timeline geometry.
Recording shell(double start_s, double minutes, std::vector<Annotation> ann = {},
                const std::string& id = "shell") {
    Recording r;
    r.id = id;
    r.start_time_s = start_s;
    r.sample_rate = 1.0;
    r.samples.assign(1, std::vector<double>(static_cast<std::size_t>(minutes * 60.0), 0.0));
    r.annotations = std::move(ann);
    return r;
}

const LabeledInterval* find_interval(const std::vector<LabeledInterval>& ivs, WindowLabel l,
                                     double begin_s) {
    for (const auto& iv : ivs)
        if (iv.label == l && std::fabs(iv.begin_s - begin_s) < 1e-9) return &iv;
    return nullptr;
}

}  // namespace

TEST_CASE("lead seizures: 4 h seizure-free rule") {
    // Onsets at 5 h and 5.5 h: only the first is lead.
    std::vector<Recording> subj{shell(0.0, 6.5 * 60.0,
                                      {{5.0 * 3600.0, 5.0 * 3600.0 + 60.0},
                                       {5.5 * 3600.0, 5.5 * 3600.0 + 60.0}})};
    auto lead = find_lead_seizures(subj);
    REQUIRE(lead.size() == 1);
    CHECK(lead[0].onset_s == 5.0 * 3600.0);
}

TEST_CASE("lead seizures: single seizure needs 4 h of prior recording") {
    std::vector<Recording> four{shell(0.0, 5.0 * 60.0, {{4.0 * 3600.0, 4.0 * 3600.0 + 30.0}})};
    CHECK(find_lead_seizures(four).size() == 1);
    std::vector<Recording> three{shell(0.0, 4.0 * 60.0, {{3.0 * 3600.0, 3.0 * 3600.0 + 30.0}})};
    CHECK(find_lead_seizures(three).empty());
}

TEST_CASE("label regions: preictal [onset-35, onset-5] minutes") {
    // Lead onset at 60 min into a record that started 4 h earlier on the
    // global timeline (so the seizure is lead).
    const double base = 4.0 * 3600.0;
    std::vector<Recording> subj{shell(0.0, 240.0), shell(base, 120.0, {{3600.0, 3660.0}})};
    auto ivs = label_regions(subj);
    const auto* pre = find_interval(ivs, WindowLabel::Preictal, base + 25.0 * 60.0);
    REQUIRE(pre != nullptr);
    CHECK(pre->end_s == doctest::Approx(base + 55.0 * 60.0));
}

TEST_CASE("label regions: interictal [offset+30, next onset-35] minutes") {
    // Offset at 10 min, next lead onset at 300 min -> interictal [40, 265].
    std::vector<Recording> subj{
        shell(-4.0 * 3600.0, 240.0),
        shell(0.0, 320.0, {{5.0 * 60.0, 10.0 * 60.0}, {300.0 * 60.0, 305.0 * 60.0}})};
    auto ivs = label_regions(subj);
    const auto* inter = find_interval(ivs, WindowLabel::Interictal, 40.0 * 60.0);
    REQUIRE(inter != nullptr);
    CHECK(inter->end_s == doctest::Approx(265.0 * 60.0));
}

TEST_CASE("label regions: preictal clipped at the timeline start") {
    // A seizure 20 min in is not lead under the 4 h rule, so its preictal
    // never materializes with default parameters...
    std::vector<Recording> subj{shell(0.0, 30.0, {{20.0 * 60.0, 21.0 * 60.0}})};
    CHECK(find_lead_seizures(subj).empty());
    CHECK(label_regions(subj).empty());  // everything is gap or ictal here

    // ...so exercise the clip with a lead seizure whose preictal reaches past
    // the timeline start: onset 260 min in, PIL widened to 290 min.
    std::vector<Recording> subj2{shell(0.0, 280.0, {{260.0 * 60.0, 261.0 * 60.0}})};
    REQUIRE(find_lead_seizures(subj2).size() == 1);
    auto ivs = label_regions(subj2, kSphSeconds, 290.0 * 60.0);
    bool found = false;
    for (const auto& iv : ivs) {
        if (iv.label == WindowLabel::Preictal) {
            found = true;
            CHECK(iv.begin_s == 0.0);  // would be -35 min unclipped
            CHECK(iv.end_s == doctest::Approx(255.0 * 60.0));
        }
    }
    CHECK(found);
}

TEST_CASE("window extraction: 30-min preictal gives exactly 119 windows") {
    Recording rec = synth_eeg(1, 2, 40.0, {}, 64.0);
    std::vector<Recording> subj{rec};
    std::vector<LabeledInterval> ivs{{WindowLabel::Preictal, 0.0, 1800.0}};
    WindowedDataset ds = extract_windows(subj, ivs);
    CHECK(ds.windows.size() == 119);
    for (const auto& w : ds.windows) CHECK(w.label == WindowLabel::Preictal);
}

TEST_CASE("window extraction: 1 h interictal gives 180 windows; 19 s gives none") {
    Recording rec = synth_eeg(2, 2, 65.0, {}, 64.0);
    std::vector<Recording> subj{rec};
    WindowedDataset full =
        extract_windows(subj, {{WindowLabel::Interictal, 0.0, 3600.0}});
    CHECK(full.windows.size() == 180);
    WindowedDataset none = extract_windows(subj, {{WindowLabel::Interictal, 0.0, 19.0}});
    CHECK(none.windows.empty());
}

TEST_CASE("windows carry the right samples and never overlap interictally") {
    Recording rec = synth_eeg(3, 2, 3.0, {}, 32.0);
    std::vector<Recording> subj{rec};
    WindowedDataset ds = extract_windows(subj, {{WindowLabel::Interictal, 0.0, 180.0}});
    REQUIRE(ds.windows.size() == 9);
    for (std::size_t w = 0; w + 1 < ds.windows.size(); ++w) {
        CHECK(ds.windows[w + 1].start_s - ds.windows[w].start_s ==
              doctest::Approx(kInterictalStride));
    }
    // Sample-level check against the raw recording.
    const Window& w0 = ds.windows[3];
    const std::size_t s0 = static_cast<std::size_t>(w0.start_s * 32.0);
    for (std::size_t i = 0; i < ds.window_len(); ++i)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(w0.data.data()[i * 2 + c] == rec.samples[c][s0 + i]);
}

TEST_CASE("five-fold split: balanced sizes and exact partition") {
    auto splits10 = five_fold_split(10, 7);
    for (const auto& s : splits10) CHECK(s.test_ids.size() == 2);
    auto splits11 = five_fold_split(11, 7);
    std::multiset<std::size_t> sizes;
    for (const auto& s : splits11) sizes.insert(s.test_ids.size());
    CHECK(sizes == std::multiset<std::size_t>{3, 2, 2, 2, 2});

    std::set<std::size_t> all;
    for (const auto& s : splits11) {
        for (std::size_t id : s.test_ids) {
            CHECK(all.insert(id).second);  // pairwise disjoint
        }
        // train/val partition the remainder
        std::set<std::size_t> tv(s.train_ids.begin(), s.train_ids.end());
        for (std::size_t id : s.val_ids) CHECK(tv.insert(id).second);
        CHECK(tv.size() == 11 - s.test_ids.size());
        CHECK(s.val_ids.size() == (11 - s.test_ids.size()) / 5);
    }
    CHECK(all.size() == 11);  // union is everything
    CHECK_THROWS_AS(five_fold_split(4, 0), config_error);
}

TEST_CASE("five-fold split is seed-deterministic") {
    auto a = five_fold_split(100, 42);
    auto b = five_fold_split(100, 42);
    auto c = five_fold_split(100, 43);
    CHECK(a[0].test_ids == b[0].test_ids);
    CHECK(a[0].train_ids == b[0].train_ids);
    CHECK(a[0].test_ids != c[0].test_ids);
}

TEST_CASE("normalization: (9-5)/2 = 2 and stats from training windows only") {
    WindowedDataset ds;
    ds.sample_rate = 0.1;  // window_len = 2 samples
    ds.n_channels = 1;
    // Training windows with channel mean 5, std 2: values {3, 7}, {3, 7}.
    ds.windows.push_back({Tensor::from({2, 1}, {3, 7}), WindowLabel::Interictal, "a", 0.0});
    ds.windows.push_back({Tensor::from({2, 1}, {3, 7}), WindowLabel::Interictal, "a", 20.0});
    // Held-out window holding the probe value 9.
    ds.windows.push_back({Tensor::from({2, 1}, {9, 5}), WindowLabel::Preictal, "a", 40.0});
    WindowedDataset out = normalize(ds, {0, 1});
    CHECK(out.stats.mean[0] == doctest::Approx(5.0));
    CHECK(out.stats.stddev[0] == doctest::Approx(2.0));
    CHECK(out.windows[2].data.data()[0] == doctest::Approx(2.0));  // (9-5)/2
    CHECK(out.windows[2].data.data()[1] == doctest::Approx(0.0));
    // Test-fold stats differ from the stored training-fold stats.
    NormStats test_stats = compute_norm_stats(ds, {2});
    CHECK(test_stats.mean[0] != out.stats.mean[0]);
}

TEST_CASE("normalization: constant channel maps to 0 via the std floor") {
    WindowedDataset ds;
    ds.sample_rate = 0.1;
    ds.n_channels = 1;
    ds.windows.push_back({Tensor::full({2, 1}, 4.2), WindowLabel::Interictal, "a", 0.0});
    WindowedDataset out = normalize(ds, {0});
    CHECK(out.stats.stddev[0] == 1e-8);
    CHECK(out.windows[0].data.data()[0] == 0.0);
}

TEST_CASE("normalization: post-normalization training stats are ~(0, 1)") {
    Recording rec = synth_eeg(4, 3, 10.0, {}, 32.0);
    WindowedDataset ds =
        extract_windows({rec}, {{WindowLabel::Interictal, 0.0, 600.0}});
    std::vector<std::size_t> train_ids;
    for (std::size_t i = 0; i < ds.windows.size(); i += 2) train_ids.push_back(i);
    WindowedDataset out = normalize(ds, train_ids);
    NormStats post = compute_norm_stats(out, train_ids);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::fabs(post.mean[c]) < 1e-10);
        CHECK(std::fabs(post.stddev[c] - 1.0) < 1e-6);
    }
}

TEST_CASE("synth_eeg: determinism and schedule validation") {
    Recording a = synth_eeg(5, 2, 2.0, {{30.0, 60.0}}, 64.0);
    Recording b = synth_eeg(5, 2, 2.0, {{30.0, 60.0}}, 64.0);
    CHECK(a.samples == b.samples);
    Recording c = synth_eeg(6, 2, 2.0, {{30.0, 60.0}}, 64.0);
    CHECK(a.samples != c.samples);
    CHECK_THROWS_AS(synth_eeg(5, 2, 0.0, {}), config_error);
    CHECK_THROWS_AS(synth_eeg(5, 2, 2.0, {{60.0, 30.0}}), config_error);
    CHECK_THROWS_AS(synth_eeg(5, 2, 2.0, {{10.0, 50.0}, {40.0, 70.0}}), config_error);
}

TEST_CASE("synth_eeg: zero amplitudes give the zero signal") {
    SynthParams p;
    p.background_amp = 0.0;
    p.white_noise_amp = 0.0;
    p.burst_amp = 0.0;
    Recording rec = synth_eeg(7, 2, 1.0, {}, 64.0, 0.0, "zero", p);
    for (const auto& ch : rec.samples)
        for (double v : ch) CHECK(v == 0.0);
}

TEST_CASE("synth_eeg: bandpower threshold separates the classes >= 99%") {
    // One seizure far enough in for a full preictal span; classify windows by
    // 15-30 Hz bandpower via Goertzel-style DFT energy.
    const double rate = 64.0;
    Recording rec = synth_eeg(8, 2, 80.0, {{70.0 * 60.0, 71.0 * 60.0}}, rate);
    // Preictal span [onset-35, onset-5] min; interictal ends where the
    // ramping burst begins (onset-35 min).
    std::vector<LabeledInterval> ivs{
        {WindowLabel::Interictal, 0.0, 35.0 * 60.0},
        {WindowLabel::Preictal, 35.0 * 60.0, 65.0 * 60.0}};
    WindowedDataset ds = extract_windows({rec}, ivs);
    REQUIRE(ds.windows.size() > 50);

    auto bandpower = [&](const Window& w) {
        const std::size_t n = ds.window_len();
        double acc = 0.0;
        // Probe at the window's natural resolution (1/20 s = 0.05 Hz) so an
        // off-grid burst tone is not lost to spectral leakage.
        for (double f = 15.0; f <= 30.0; f += 0.05) {
            double re = 0.0, im = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ph = 2.0 * 3.14159265358979323846 * f * static_cast<double>(i) / rate;
                re += w.data.data()[i * 2] * std::cos(ph);
                im += w.data.data()[i * 2] * std::sin(ph);
            }
            acc += re * re + im * im;
        }
        return acc;
    };

    std::vector<double> pre, inter;
    for (const auto& w : ds.windows)
        (w.label == WindowLabel::Preictal ? pre : inter).push_back(bandpower(w));
    REQUIRE(!pre.empty());
    REQUIRE(!inter.empty());
    // The two classes sit orders of magnitude apart but the preictal powers
    // span a wide range themselves (the burst ramps up), so threshold at the
    // geometric midpoint of the class medians rather than the arithmetic one.
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    const double thr = std::sqrt(median(pre) * median(inter));
    std::size_t correct = 0;
    for (double v : pre) correct += v > thr;
    for (double v : inter) correct += v <= thr;
    const double acc =
        static_cast<double>(correct) / static_cast<double>(pre.size() + inter.size());
    CHECK(acc >= 0.99);
}

TEST_CASE("annotation CSV round trip and validation") {
    Recording rec = synth_eeg(9, 1, 2.0, {{30.0, 60.0}, {90.0, 100.0}}, 32.0, 0.0, "recA");
    std::vector<Recording> recs{rec};
    const std::string path = "annotations_test.csv";
    write_annotations_csv(recs, path);
    std::vector<Recording> fresh{synth_eeg(9, 1, 2.0, {}, 32.0, 0.0, "recA")};
    apply_annotations_csv(fresh, path);
    REQUIRE(fresh[0].annotations.size() == 2);
    CHECK(fresh[0].annotations[0].onset_s == 30.0);
    CHECK(fresh[0].annotations[1].offset_s == 100.0);
    std::vector<Recording> wrong{synth_eeg(9, 1, 2.0, {}, 32.0, 0.0, "other")};
    CHECK_THROWS_AS(apply_annotations_csv(wrong, path), format_error);
    std::remove(path.c_str());
}

TEST_CASE("dataset container round trip") {
    Recording rec = synth_eeg(10, 2, 3.0, {}, 32.0);
    WindowedDataset ds = extract_windows({rec}, {{WindowLabel::Interictal, 0.0, 180.0}});
    const std::string path = "dataset_test.c2spdata";
    write_dataset(ds, path);
    WindowedDataset back = read_dataset(path);
    REQUIRE(back.windows.size() == ds.windows.size());
    CHECK(back.n_channels == ds.n_channels);
    CHECK(back.sample_rate == ds.sample_rate);
    for (std::size_t i = 0; i < ds.windows.size(); ++i) {
        CHECK(back.windows[i].label == ds.windows[i].label);
        CHECK(back.windows[i].start_s == ds.windows[i].start_s);
        CHECK(back.windows[i].data.values() == ds.windows[i].data.values());
    }
    // Corrupt the magic.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    CHECK_THROWS_AS(read_dataset(path), format_error);
    std::remove(path.c_str());
}

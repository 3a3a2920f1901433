#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "c2sp/common.hpp"
#include "c2sp/edf.hpp"

using namespace c2sp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string fixed(const std::string& s, std::size_t w) {
    std::string out = s.substr(0, w);
    out.resize(w, ' ');
    return out;
}

// Hand-crafted 1-channel EDF: 1 record of 4 samples at 4 Hz, digital range
// [-32768, 32767] mapped to physical [-1, 1].
std::string craft_fixture(const std::vector<std::int16_t>& digital) {
    std::string out;
    auto f = [&](const std::string& s, std::size_t w) { out += fixed(s, w); };
    f("0", 8);
    f("fixture", 80);
    f("test", 80);
    f("02.01.00", 8);
    f("00.00.10", 8);
    f("512", 8);  // header bytes: 256 + 1*256
    f("", 44);
    f("1", 8);  // records
    f("1", 8);  // record duration
    f("1", 4);  // signals
    f("EEG CH0", 16);
    f("crafted", 80);
    f("uV", 8);
    f("-1", 8);
    f("1", 8);
    f("-32768", 8);
    f("32767", 8);
    f("none", 80);
    f("4", 8);  // samples per record
    f("", 32);
    for (std::int16_t v : digital) {
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
    }
    return out;
}

}  // namespace

TEST_CASE("crafted fixture: affine digital-to-physical map") {
    const std::string path = "edf_fixture.edf";
    {
        std::ofstream f(path, std::ios::binary);
        const std::string blob = craft_fixture({-32768, 0, 32767, 16384});
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    Recording rec = read_edf(path);
    CHECK(rec.id == "fixture");
    CHECK(rec.n_channels() == 1);
    CHECK(rec.n_samples() == 4);
    CHECK(rec.sample_rate == 4.0);
    // Start time: day 1 after 2000-01-01 plus 10 s.
    CHECK(rec.start_time_s == doctest::Approx(86400.0 + 10.0));
    CHECK(rec.samples[0][0] == doctest::Approx(-1.0));
    // Digital 0 under dmin->pmin, dmax->pmax: (0+32768)*2/65535 - 1 = 1/65535.
    CHECK(rec.samples[0][1] == doctest::Approx(1.0 / 65535.0).epsilon(1e-12));
    CHECK(rec.samples[0][2] == doctest::Approx(1.0));
    CHECK(rec.samples[0][3] == doctest::Approx((16384.0 + 32768.0) * 2.0 / 65535.0 - 1.0));
    std::remove(path.c_str());
}

TEST_CASE("write/read round trip: digital samples bit-exact") {
    Recording rec;
    rec.id = "roundtrip";
    rec.start_time_s = 3 * 86400.0 + 3661.0;  // day 3, 01:01:01
    rec.sample_rate = 8.0;
    Rng rng(21);
    rec.samples.assign(2, std::vector<double>(16, 0.0));
    for (auto& ch : rec.samples)
        for (double& v : ch) v = rng.uniform(-0.9, 0.9);

    const std::string p1 = "edf_rt1.edf", p2 = "edf_rt2.edf";
    write_edf(rec, p1, -1.0, 1.0);
    Recording back = read_edf(p1);
    CHECK(back.n_channels() == 2);
    CHECK(back.n_samples() == 16);
    CHECK(back.sample_rate == 8.0);
    CHECK(back.start_time_s == rec.start_time_s);
    // Quantization error bounded by half a digital step.
    const double step = 2.0 / 65535.0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(std::fabs(back.samples[c][i] - rec.samples[c][i]) <= step / 2.0 + 1e-12);
    // Writing the re-read recording reproduces the file byte for byte: the
    // digital values are already on the quantization grid.
    back.id = rec.id;
    write_edf(back, p2, -1.0, 1.0);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("truncated file is a format error") {
    const std::string path = "edf_trunc.edf";
    {
        std::ofstream f(path, std::ios::binary);
        const std::string blob = craft_fixture({1, 2, 3, 4});
        f.write(blob.data(), 200);  // cut inside the header
    }
    CHECK_THROWS_AS(read_edf(path), format_error);
    {
        std::ofstream f(path, std::ios::binary);
        const std::string blob = craft_fixture({1, 2, 3, 4});
        f.write(blob.data(), static_cast<std::streamsize>(blob.size() - 3));  // cut samples
    }
    CHECK_THROWS_AS(read_edf(path), format_error);
    std::remove(path.c_str());
}

TEST_CASE("malformed header fields name a byte offset") {
    const std::string path = "edf_bad.edf";
    std::string blob = craft_fixture({1, 2, 3, 4});
    blob[236] = 'x';  // record count
    {
        std::ofstream f(path, std::ios::binary);
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    try {
        read_edf(path);
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("rate mismatch across channels is rejected") {
    // Two signals with different samples-per-record.
    std::string out;
    auto f = [&](const std::string& s, std::size_t w) { out += fixed(s, w); };
    f("0", 8);
    f("mismatch", 80);
    f("test", 80);
    f("01.01.00", 8);
    f("00.00.00", 8);
    f("768", 8);
    f("", 44);
    f("1", 8);
    f("1", 8);
    f("2", 4);
    for (int s = 0; s < 2; ++s) f("EEG", 16);
    for (int s = 0; s < 2; ++s) f("t", 80);
    for (int s = 0; s < 2; ++s) f("uV", 8);
    for (int s = 0; s < 2; ++s) f("-1", 8);
    for (int s = 0; s < 2; ++s) f("1", 8);
    for (int s = 0; s < 2; ++s) f("-32768", 8);
    for (int s = 0; s < 2; ++s) f("32767", 8);
    for (int s = 0; s < 2; ++s) f("none", 80);
    f("4", 8);
    f("8", 8);  // differing rate
    for (int s = 0; s < 2; ++s) f("", 32);
    out.append((4 + 8) * 2, '\0');
    const std::string path = "edf_rate.edf";
    {
        std::ofstream fo(path, std::ios::binary);
        fo.write(out.data(), static_cast<std::streamsize>(out.size()));
    }
    CHECK_THROWS_AS(read_edf(path), format_error);
    std::remove(path.c_str());
}

TEST_CASE("writer rejects unusable recordings") {
    Recording empty;
    CHECK_THROWS_AS(write_edf(empty, "x.edf"), config_error);
    Recording ragged;
    ragged.sample_rate = 4.0;
    ragged.samples = {{1.0, 2.0, 3.0}};  // not a whole record
    CHECK_THROWS_AS(write_edf(ragged, "x.edf"), config_error);
}

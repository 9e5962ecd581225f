#include <cmath>
#include <bit>
#include <cstring>

#include "doctest.h"
#include "pedseg/error.hpp"
#include "pedseg/volume_io.hpp"
#include "test_util.hpp"

using namespace pedseg;

namespace {

// Minimal hand-rolled NIfTI-1 writer, independent of the library's.
struct Fixture {
    bool big_endian = false;
    std::int16_t datatype = 16;
    std::int16_t bitpix = 32;
    std::array<std::int16_t, 4> dim{3, 3, 2, 2};
    std::array<float, 3> pixdim{1.5f, 2.0f, 2.5f};
    float slope = 0.0f;
    float inter = 0.0f;
    const char* magic = "n+1";

    template <typename T>
    void put(std::vector<std::uint8_t>& b, std::size_t off, T v) const {
        std::uint8_t tmp[sizeof(T)];
        std::memcpy(tmp, &v, sizeof(T));
        if (big_endian) std::reverse(tmp, tmp + sizeof(T));
        std::memcpy(b.data() + off, tmp, sizeof(T));
    }

    template <typename T>
    std::vector<std::uint8_t> build(const std::vector<T>& values) const {
        std::vector<std::uint8_t> b(352, 0);
        put<std::int32_t>(b, 0, 348);
        for (int i = 0; i < 4; ++i) put<std::int16_t>(b, 40 + 2 * i, dim[i]);
        put<std::int16_t>(b, 70, datatype);
        put<std::int16_t>(b, 72, bitpix);
        put<float>(b, 76, 1.0f);
        for (int i = 0; i < 3; ++i) put<float>(b, 80 + 4 * i, pixdim[i]);
        put<float>(b, 108, 352.0f);
        put<float>(b, 112, slope);
        put<float>(b, 116, inter);
        std::memcpy(b.data() + 344, magic, 4);
        for (const T& v : values) {
            const std::size_t off = b.size();
            b.resize(off + sizeof(T));
            put<T>(b, off, v);
        }
        return b;
    }
};

std::vector<float> ramp(std::size_t n) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 0.5f * static_cast<float>(i) - 3.0f;
    return v;
}

}  // namespace

TEST_CASE("little-endian float32 NIfTI decodes values and spacing") {
    TempDir dir("io_le");
    Fixture fx;
    write_file_bytes(dir / "a.nii", fx.build(ramp(12)));
    const auto v = read_scalar_volume(dir / "a.nii");
    CHECK(v.dims() == Dims{3, 2, 2});
    CHECK(v.spacing()[0] == doctest::Approx(1.5));
    CHECK(v.spacing()[2] == doctest::Approx(2.5));
    for (std::size_t i = 0; i < 12; ++i) CHECK(v[i] == doctest::Approx(0.5 * i - 3.0));
    CHECK(v.at(2, 1, 0) == doctest::Approx(0.5 * 5 - 3.0));
}

TEST_CASE("big-endian header and payload are byte-swapped") {
    TempDir dir("io_be");
    Fixture le, be;
    be.big_endian = true;
    write_file_bytes(dir / "le.nii", le.build(ramp(12)));
    write_file_bytes(dir / "be.nii", be.build(ramp(12)));
    CHECK(read_scalar_volume(dir / "le.nii") == read_scalar_volume(dir / "be.nii"));

    Fixture be16 = be;
    be16.datatype = 4;
    be16.bitpix = 16;
    write_file_bytes(dir / "be16.nii", be16.build(std::vector<std::int16_t>{-1000, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 300}));
    const auto v = read_scalar_volume(dir / "be16.nii");
    CHECK(v[0] == -1000.0);
    CHECK(v[11] == 300.0);
}

TEST_CASE("every supported datatype decodes") {
    TempDir dir("io_types");
    auto check = [&](auto sample, std::int16_t code) {
        using T = decltype(sample);
        Fixture fx;
        fx.datatype = code;
        fx.bitpix = static_cast<std::int16_t>(8 * sizeof(T));
        std::vector<T> values(12);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(i * 7 % 100);
        const auto path = dir / ("t" + std::to_string(code) + ".nii");
        write_file_bytes(path, fx.build(values));
        const auto v = read_scalar_volume(path);
        for (std::size_t i = 0; i < values.size(); ++i) CHECK(v[i] == static_cast<double>(values[i]));
    };
    check(std::uint8_t{}, 2);
    check(std::int16_t{}, 4);
    check(std::int32_t{}, 8);
    check(float{}, 16);
    check(double{}, 64);
    check(std::int8_t{}, 256);
    check(std::uint16_t{}, 512);
}

TEST_CASE("scl_slope and scl_inter are applied") {
    TempDir dir("io_slope");
    Fixture fx;
    fx.datatype = 4;
    fx.bitpix = 16;
    fx.slope = 2.0f;
    fx.inter = -1024.0f;
    write_file_bytes(dir / "s.nii", fx.build(std::vector<std::int16_t>(12, 10)));
    CHECK(read_scalar_volume(dir / "s.nii")[3] == -1004.0);
}

TEST_CASE("malformed inputs raise typed errors") {
    TempDir dir("io_bad");
    Fixture fx;
    auto bytes = fx.build(ramp(12));

    SUBCASE("truncated payload") {
        bytes.resize(bytes.size() - 5);
        write_file_bytes(dir / "t.nii", bytes);
        CHECK_THROWS_AS(read_scalar_volume(dir / "t.nii"), TruncationError);
    }
    SUBCASE("truncated header") {
        bytes.resize(200);
        write_file_bytes(dir / "h.nii", bytes);
        CHECK_THROWS_AS(read_scalar_volume(dir / "h.nii"), RuntimeFailure);
    }
    SUBCASE("unknown magic") {
        std::memcpy(bytes.data() + 344, "xyz", 4);
        write_file_bytes(dir / "m.nii", bytes);
        CHECK_THROWS_AS(read_scalar_volume(dir / "m.nii"), FormatError);
    }
    SUBCASE("truncated gzip stream") {
        auto gz = gzip_compress(bytes);
        gz.resize(gz.size() / 2);
        write_file_bytes(dir / "g.nii.gz", gz);
        CHECK_THROWS_AS(read_scalar_volume(dir / "g.nii.gz"), TruncationError);
    }
    SUBCASE("bitpix inconsistent with datatype") {
        Fixture bad;
        bad.bitpix = 16;
        write_file_bytes(dir / "b.nii", bad.build(ramp(12)));
        CHECK_THROWS_AS(read_scalar_volume(dir / "b.nii"), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(read_scalar_volume(dir / "none.nii"), IoError); }
}

TEST_CASE("gzip is detected by content, not extension") {
    TempDir dir("io_gz");
    Fixture fx;
    const auto raw = fx.build(ramp(12));
    write_file_bytes(dir / "plain_name.nii", gzip_compress(raw));
    write_file_bytes(dir / "raw.nii", raw);
    CHECK(read_scalar_volume(dir / "plain_name.nii") == read_scalar_volume(dir / "raw.nii"));
    CHECK(gzip_decompress(gzip_compress(raw)) == raw);
}

TEST_CASE("two-file ni1 pairs are read") {
    TempDir dir("io_pair");
    Fixture fx;
    fx.magic = "ni1";
    auto bytes = fx.build(ramp(12));
    std::vector<std::uint8_t> hdr(bytes.begin(), bytes.begin() + 348);
    std::vector<std::uint8_t> img(352, 0);
    img.insert(img.end(), bytes.begin() + 352, bytes.end());
    write_file_bytes(dir / "p.hdr", hdr);
    write_file_bytes(dir / "p.img", img);
    const auto v = read_scalar_volume(dir / "p.hdr");
    CHECK(v[4] == doctest::Approx(-1.0));
}

TEST_CASE("write/read round trip: scalar and label, nifti, gzip and native") {
    TempDir dir("io_rt");
    Grid g{{5, 4, 3}, {0.8, 1.25, 3.0}, {-10.0, 4.5, 100.0}};
    std::vector<double> values(g.dims.count());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(std::sin(0.3 * i) * 800.0);
    std::vector<std::uint16_t> labels(g.dims.count());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(i % 7);

    for (const char* name : {"v.nii", "v.nii.gz", "v.psv"}) {
        CAPTURE(name);
        const ScalarVolume sv(g, values, SampleType::float64);
        write_volume(sv, dir / name);
        const auto back = read_scalar_volume(dir / name);
        CHECK(back.dims() == g.dims);
        CHECK(same_spacing(back.spacing(), g.spacing));
        for (std::size_t i = 0; i < values.size(); ++i) CHECK(back[i] == doctest::Approx(values[i]).epsilon(1e-6));

        const LabelVolume lv(g, labels, 19);
        const std::string lname = std::string("l_") + name;
        write_volume(lv, dir / lname);
        const auto lback = read_label_volume(dir / lname);
        CHECK(std::equal(lback.labels().begin(), lback.labels().end(), labels.begin()));
        // The native header has no class count; it falls back to the largest label.
        CHECK(lback.num_classes() == (std::string(name) == "v.psv" ? 6 : 19));
    }
    const auto nii = read_scalar_volume(dir / "v.nii");
    CHECK(nii.grid().origin[0] == doctest::Approx(-10.0));
    CHECK(nii.grid().origin[2] == doctest::Approx(100.0));
}

TEST_CASE("integral scalar storage is preserved exactly") {
    TempDir dir("io_int");
    Grid g{{4, 4, 4}, {1, 1, 1}, {}};
    std::vector<double> values(64);
    for (std::size_t i = 0; i < 64; ++i) values[i] = static_cast<double>(i) * 37.0 - 1000.0;
    write_volume(ScalarVolume(g, values, SampleType::int16), dir / "i.nii");
    CHECK(std::equal(values.begin(), values.end(), read_scalar_volume(dir / "i.nii").data().begin()));
}

TEST_CASE("label reads reject non-integral or out-of-domain values") {
    TempDir dir("io_lab");
    Fixture fx;
    write_file_bytes(dir / "f.nii", fx.build(ramp(12)));
    CHECK_THROWS_AS(read_label_volume(dir / "f.nii"), LabelDomainError);

    Grid g{{2, 2, 2}, {1, 1, 1}, {}};
    write_volume(LabelVolume(g, {0, 1, 2, 3, 4, 5, 6, 25}), dir / "big.nii");
    CHECK_THROWS_AS(read_label_volume(dir / "big.nii", 19), LabelDomainError);
}

TEST_CASE("volume constructors validate invariants") {
    CHECK_THROWS_AS(ScalarVolume(Grid{{2, 2, 2}, {1, 1, 1}, {}}, std::vector<double>(7)), InvariantError);
    CHECK_THROWS_AS(ScalarVolume(Grid{{2, 2, 2}, {1, 0, 1}, {}}, std::vector<double>(8)), InvariantError);
    std::vector<double> bad(8, 0.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(ScalarVolume(Grid{{2, 2, 2}, {1, 1, 1}, {}}, bad), InvariantError);
}

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "cleverscan/rng.hpp"
#include "cleverscan/tensor.hpp"
#include "cleverscan/volume.hpp"

using namespace cleverscan;

TEST_CASE("VOL1 round-trip preserves dims, spacing and voxels", "[volume]") {
    Rng rng(314);
    Volume v(5, 7, 3, 2.0);
    for (auto& x : v.voxels) x = static_cast<float>(rng.normal());

    const std::string path = "volume_test.vol";
    write_vol1(v, path);
    const Volume back = read_vol1(path);
    std::remove(path.c_str());

    REQUIRE(back.same_dims(v));
    CHECK(back.spacing_mm == v.spacing_mm);
    REQUIRE(back.voxels == v.voxels);
}

TEST_CASE("VOL1 reader rejects bad magic and truncation", "[volume]") {
    {
        std::ofstream out("bad_magic.vol", std::ios::binary);
        out << "NOPE" << std::string(32, '\0');
    }
    CHECK_THROWS_AS(read_vol1("bad_magic.vol"), std::runtime_error);
    std::remove("bad_magic.vol");

    Volume v(4, 4, 4);
    write_vol1(v, "trunc.vol");
    {
        // chop the voxel payload
        std::ifstream in("trunc.vol", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
        bytes.resize(bytes.size() - 10);
        std::ofstream out("trunc.vol", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_vol1("trunc.vol"), std::runtime_error);
    std::remove("trunc.vol");
}

TEST_CASE("volume invariants are enforced at construction", "[volume]") {
    CHECK_THROWS_AS(Volume(0, 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(Volume(4, 4, 4, -1.0), std::invalid_argument);
}

TEST_CASE("tensor storage is x-fastest and channel-slowest", "[volume]") {
    Tensor4<float> t(2, 3, 4, 5);
    CHECK(t.index(0, 1, 0, 0) == 1u);
    CHECK(t.index(0, 0, 1, 0) == 3u);
    CHECK(t.index(0, 0, 0, 1) == 12u);
    CHECK(t.index(1, 0, 0, 0) == 60u);

    Volume v(3, 4, 5);
    for (std::size_t i = 0; i < v.size(); ++i) v.voxels[i] = static_cast<float>(i);
    const auto wrapped = Tensor4<float>::from_volume(v);
    const Volume back = wrapped.to_volume(0);
    REQUIRE(back.voxels == v.voxels);
}

TEST_CASE("rng replays exactly and fills both normal and uniform", "[volume]") {
    Rng a(999), b(999);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng r(4);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += r.normal();
    mean /= n;
    CHECK(std::abs(mean) < 0.03);

    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }

    // mix_seed separates streams
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
}

TEST_CASE("PGM slice export windows and clamps", "[volume]") {
    Volume v(4, 4, 2);
    for (std::size_t i = 0; i < v.size(); ++i) v.voxels[i] = static_cast<float>(i);
    write_pgm_slice(v, 1, "slice.pgm", 16.0, 31.0);
    std::ifstream in("slice.pgm", std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "P5");
    std::string dims_line;
    std::getline(in, dims_line);
    CHECK(dims_line == "4 4");
    std::remove("slice.pgm");
}

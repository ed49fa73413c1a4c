#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fringelab/fst.hpp"
#include "fringelab/rng.hpp"

using namespace fringelab;
namespace fs = std::filesystem;

namespace {

std::string tmpdir() {
    auto dir = fs::temp_directory_path() / "fringelab_fst_test";
    fs::create_directories(dir);
    return dir.string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fst write/read round trip is bit-identical for both dtypes") {
    Rng rng(7);
    for (FstDtype dtype : {FstDtype::f32, FstDtype::f64}) {
        FstData d;
        d.channels = 3;
        d.height = 5;
        d.width = 4;
        d.dtype = dtype;
        d.data.resize(60);
        for (auto& v : d.data) v = rng.uniform(-2.0, 2.0);

        const std::string p1 = tmpdir() + "/a.fst";
        const std::string p2 = tmpdir() + "/b.fst";
        write_fst(p1, d);
        FstData r = read_fst(p1);
        CHECK(r.channels == d.channels);
        CHECK(r.height == d.height);
        CHECK(r.width == d.width);
        CHECK(static_cast<int>(r.dtype) == static_cast<int>(dtype));
        write_fst(p2, r);
        CHECK(slurp(p1) == slurp(p2));
        if (dtype == FstDtype::f64) {
            CHECK(r.data == d.data);
        }
    }
}

TEST_CASE("fst reader rejects wrong magic") {
    const std::string p = tmpdir() + "/bad.fst";
    std::ofstream os(p, std::ios::binary);
    os << "NOPE" << std::string(16, '\0');
    os.close();
    CHECK_THROWS(read_fst(p));
}

TEST_CASE("fst payload length is validated on write") {
    FstData d;
    d.channels = 2;
    d.height = 2;
    d.width = 2;
    d.data.resize(7);  // should be 8
    CHECK_THROWS_AS(write_fst(tmpdir() + "/short.fst", d), std::invalid_argument);
}

TEST_CASE("image stack conversion preserves order and shape") {
    std::vector<Image> imgs;
    for (int c = 0; c < 3; c++) {
        Image img(4, 2);
        for (size_t i = 0; i < img.v.size(); i++) img.v[i] = c * 100.0 + static_cast<double>(i);
        imgs.push_back(img);
    }
    FstData d = fst_from_images(imgs, FstDtype::f64);
    auto back = fst_to_images(d);
    REQUIRE(back.size() == 3);
    for (size_t c = 0; c < 3; c++) CHECK(back[c].v == imgs[c].v);
}

TEST_CASE("pgm previews have the right headers") {
    Image img(3, 2, 0.5);
    const std::string p8 = tmpdir() + "/p8.pgm";
    const std::string p16 = tmpdir() + "/p16.pgm";
    write_pgm8(p8, img);
    write_pgm16(p16, img, 0.0, 1.0);
    auto a = slurp(p8);
    auto b = slurp(p16);
    CHECK(std::string(a.begin(), a.begin() + 2) == "P5");
    CHECK(std::string(b.begin(), b.begin() + 2) == "P5");
    CHECK(a.size() == 11 + 3 * 2);       // "P5\n3 2\n255\n" + payload
    CHECK(b.size() == 13 + 3 * 2 * 2);   // "P5\n3 2\n65535\n" + payload
}

TEST_CASE("ply writer emits one vertex per valid pixel") {
    std::vector<double> xyz = {0, 0, 1, 2, 2, 2, 3, 3, 3};
    std::vector<uint8_t> valid = {1, 0, 1};
    const std::string p = tmpdir() + "/c.ply";
    write_ply(p, xyz, valid);
    std::ifstream is(p);
    std::string line;
    int vertices = -1, rows = 0;
    bool in_body = false;
    while (std::getline(is, line)) {
        if (line.rfind("element vertex", 0) == 0) vertices = std::stoi(line.substr(15));
        if (in_body && !line.empty()) rows++;
        if (line == "end_header") in_body = true;
    }
    CHECK(vertices == 2);
    CHECK(rows == 2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "desmil/checkpoint.hpp"
#include "desmil/rng.hpp"

using namespace desmil;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("desmil_ckpt_" + name);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelParams random_params(Rng& rng, std::size_t num_items, std::size_t d, std::size_t d_hat,
                          std::size_t c, std::size_t l_max) {
    ModelParams p;
    p.item_embeddings = Matrix(num_items + 1, d);
    p.position_embeddings = Matrix(l_max, d);
    p.attention_w1 = Matrix(d_hat, d);
    p.attention_w2 = Matrix(c, d_hat);
    for (Matrix* m : {&p.item_embeddings, &p.position_embeddings, &p.attention_w1, &p.attention_w2})
        for (std::size_t r = 0; r < m->rows(); ++r)
            for (std::size_t k = 0; k < m->cols(); ++k) (*m)(r, k) = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 0; k < d; ++k) p.item_embeddings(num_items, k) = 0.0;
    return p;
}

} // namespace

TEST_CASE("checkpoint round trip is bitwise exact") {
    Rng rng(404);
    ModelParams p = random_params(rng, 17, 8, 5, 3, 6);
    const fs::path bin = temp_file("rt.bin");
    const fs::path man = temp_file("rt.manifest");
    save_checkpoint(p, bin.string(), man.string());
    ModelParams q = load_checkpoint(bin.string(), man.string());
    CHECK(bitwise_equal(p.item_embeddings, q.item_embeddings));
    CHECK(bitwise_equal(p.position_embeddings, q.position_embeddings));
    CHECK(bitwise_equal(p.attention_w1, q.attention_w1));
    CHECK(bitwise_equal(p.attention_w2, q.attention_w2));
}

TEST_CASE("identical parameters serialize to identical bytes") {
    Rng rng(405);
    ModelParams p = random_params(rng, 9, 4, 3, 2, 5);
    const fs::path bin1 = temp_file("det1.bin"), man1 = temp_file("det1.manifest");
    const fs::path bin2 = temp_file("det2.bin"), man2 = temp_file("det2.manifest");
    save_checkpoint(p, bin1.string(), man1.string());
    save_checkpoint(p, bin2.string(), man2.string());
    CHECK(read_file(bin1) == read_file(bin2));
    CHECK(read_file(man1) == read_file(man2));
}

TEST_CASE("manifest lists the four tensors with shapes and byte offsets") {
    Rng rng(406);
    ModelParams p = random_params(rng, 9, 4, 3, 2, 5);
    const fs::path bin = temp_file("man.bin"), man = temp_file("man.manifest");
    save_checkpoint(p, bin.string(), man.string());

    // 10x4 items, 5x4 positions, 3x4 w1, 2x3 w2; offsets in bytes of doubles.
    const std::string expected = "item_embeddings\t10\t4\t0\n"
                                 "position_embeddings\t5\t4\t320\n"
                                 "attention_w1\t3\t4\t480\n"
                                 "attention_w2\t2\t3\t576\n";
    CHECK(read_file(man) == expected);
    CHECK(fs::file_size(bin) == (10 * 4 + 5 * 4 + 3 * 4 + 2 * 3) * sizeof(double));
}

TEST_CASE("loading rejects a manifest with tensors misnamed or missing") {
    Rng rng(407);
    ModelParams p = random_params(rng, 5, 2, 2, 2, 3);
    const fs::path bin = temp_file("bad.bin"), man = temp_file("bad.manifest");
    save_checkpoint(p, bin.string(), man.string());

    std::string manifest = read_file(man);

    SUBCASE("wrong tensor name") {
        std::ofstream out(man);
        out << "item_table\t6\t2\t0\n" << manifest.substr(manifest.find('\n') + 1);
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(bin.string(), man.string()),
                             doctest::Contains("expected tensor 'item_embeddings'"),
                             std::runtime_error);
    }
    SUBCASE("missing line") {
        std::ofstream out(man);
        out << manifest.substr(0, manifest.rfind("attention_w2"));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(bin.string(), man.string()),
                             doctest::Contains("expected 4 tensor lines"), std::runtime_error);
    }
    SUBCASE("non-numeric shape") {
        std::ofstream out(man);
        out << "item_embeddings\tsix\t2\t0\n" << manifest.substr(manifest.find('\n') + 1);
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(bin.string(), man.string()),
                             doctest::Contains("bad number"), std::runtime_error);
    }
    SUBCASE("offset past end of binary") {
        std::ofstream out(man);
        out << "item_embeddings\t6\t2\t999999\n" << manifest.substr(manifest.find('\n') + 1);
        out.close();
        CHECK_THROWS_AS(load_checkpoint(bin.string(), man.string()), std::runtime_error);
    }
}

TEST_CASE("loading revalidates parameter invariants") {
    Rng rng(408);
    ModelParams p = random_params(rng, 5, 2, 2, 2, 3);
    const fs::path bin = temp_file("pad.bin"), man = temp_file("pad.manifest");
    save_checkpoint(p, bin.string(), man.string());

    // Corrupt one double of the pad row in place: row 5 of a 6x2 item table.
    std::fstream f(bin, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(5 * 2 * sizeof(double));
    const double poison = 3.5;
    f.write(reinterpret_cast<const char*>(&poison), sizeof(double));
    f.close();
    CHECK_THROWS(load_checkpoint(bin.string(), man.string()));
}

TEST_CASE("missing files are reported by path") {
    CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/x.bin", "/nonexistent/x.manifest"),
                         doctest::Contains("/nonexistent/x.manifest"), std::runtime_error);
}

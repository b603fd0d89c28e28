#include "doctest.h"

#include <cmath>

#include "upl/encoder.hpp"
#include "upl/rng.hpp"

using namespace upl;

namespace {

ToyEncoder identity_encoder(std::size_t dim, double tau = 1.0,
                            std::vector<std::pair<std::string, Vec>> pinned = {}) {
    ToyEncoderOptions opt;
    opt.dim = dim;
    opt.seed = 0;
    opt.temperature = tau;
    opt.identity_vision = true;
    opt.identity_text = true;
    opt.pinned_vocab = std::move(pinned);
    return ToyEncoder(opt);
}

Vec basis(std::size_t dim, std::size_t i) {
    Vec v(dim, 0.0);
    v[i] = 1.0;
    return v;
}

} // namespace

TEST_CASE("encode_image rejects the zero vector with the image id") {
    ToyEncoder enc = identity_encoder(4);
    RawImage img{"img-zero", Vec(4, 0.0)};
    try {
        enc.encode_image(img);
        FAIL("expected input error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::input);
        CHECK(std::string(e.what()).find("img-zero") != std::string::npos);
    }
}

TEST_CASE("encode_image identity weights map basis vector to itself") {
    ToyEncoder enc = identity_encoder(4);
    auto f = enc.encode_image({"e1", basis(4, 0)});
    CHECK(f.image_id == "e1");
    for (std::size_t i = 0; i < 4; ++i) CHECK(f.vector[i] == doctest::Approx(i == 0 ? 1.0 : 0.0));
}

TEST_CASE("encode_image dimension mismatch is a config error") {
    ToyEncoder enc = identity_encoder(4);
    RawImage img{"bad", Vec(3, 1.0)};
    try {
        enc.encode_image(img);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("encode_image golden vector, seed 7, 8-dim input") {
    // frozen from a reference run of the toy encoder
    ToyEncoderOptions opt;
    opt.seed = 7;
    opt.dim = 8;
    ToyEncoder enc(opt);
    RawImage img{"golden", {0.25, -1.5, 0.75, 2.0, -0.5, 1.0, 0.0, -2.25}};
    const Vec expected = {-0.155347903372791,   -0.22632427214448572, 0.17827055025677832,
                          0.62625815258623097,  -0.41535406329204111, -0.41204341722082594,
                          -0.13026860661735234, -0.37602660085175105};
    auto f = enc.encode_image(img);
    REQUIRE(f.vector.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(f.vector[i] == doctest::Approx(expected[i]).epsilon(1e-14));
    }
}

TEST_CASE("encode_text_from_embeddings mean-then-normalize symmetry") {
    ToyEncoder enc = identity_encoder(5);
    Vec u = normalized({1.0, -2.0, 0.5, 3.0, -1.0});
    auto out = enc.encode_text_from_embeddings(std::vector<Vec>{u, u});
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(out[i] == doctest::Approx(u[i]));
}

TEST_CASE("encode_text_from_embeddings orthonormal pair gives (e1+e2)/sqrt(2)") {
    ToyEncoder enc = identity_encoder(4);
    auto out = enc.encode_text_from_embeddings(std::vector<Vec>{basis(4, 0), basis(4, 1)});
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(out[0] == doctest::Approx(inv_sqrt2));
    CHECK(out[1] == doctest::Approx(inv_sqrt2));
    CHECK(out[2] == doctest::Approx(0.0));
    CHECK(out[3] == doctest::Approx(0.0));
}

TEST_CASE("encode_text_from_embeddings rejects an empty sequence") {
    ToyEncoder enc = identity_encoder(4);
    CHECK_THROWS_AS(enc.encode_text_from_embeddings(std::vector<Vec>{}), Error);
}

TEST_CASE("text encoder gradient matches central finite differences") {
    ToyEncoderOptions opt;
    opt.seed = 11;
    opt.dim = 6;
    ToyEncoder enc(opt);
    Rng rng(5);

    std::vector<Vec> seq;
    for (int s = 0; s < 3; ++s) seq.push_back(rng.gaussian_vec(6));
    Vec grad_out = rng.gaussian_vec(6);

    auto scalar = [&](const std::vector<Vec>& s) {
        Vec out = enc.encode_text_from_embeddings(s);
        return dot(out, grad_out);
    };
    auto analytic = enc.encode_text_backward(seq, grad_out);

    const double step = 1e-4;
    bool any_nonzero = false;
    for (std::size_t s = 0; s < seq.size(); ++s) {
        for (std::size_t i = 0; i < 6; ++i) {
            auto plus = seq, minus = seq;
            plus[s][i] += step;
            minus[s][i] -= step;
            double fd = (scalar(plus) - scalar(minus)) / (2.0 * step);
            double denom = std::max(std::abs(fd), 1e-8);
            CHECK(std::abs(analytic[s][i] - fd) / denom < 1e-3);
            if (std::abs(analytic[s][i]) > 1e-12) any_nonzero = true;
        }
    }
    CHECK(any_nonzero);
}

TEST_CASE("class token lookup returns the stored embedding bitwise") {
    Vec pinned = normalized({0.3, -0.1, 0.7, 0.2});
    ToyEncoder enc = identity_encoder(4, 1.0, {{"cat", pinned}});
    const Vec& first = enc.class_token_embedding("cat");
    const Vec& second = enc.class_token_embedding("cat");
    CHECK(first == pinned);
    CHECK(first == second);
    CHECK(&first == &second); // the table owns one copy
}

TEST_CASE("unknown class name raises a lookup error with suggestions") {
    ToyEncoder enc = identity_encoder(4);
    try {
        enc.class_token_embedding("zzz");
        FAIL("expected lookup error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::lookup);
        CHECK(std::string(e.what()).find("nearest") != std::string::npos);
    }
}

TEST_CASE("multi-token class names are rejected by the toy backend") {
    ToyEncoder enc = identity_encoder(4);
    CHECK_THROWS_AS(enc.class_token_embedding("two words"), Error);
}

TEST_CASE("encoders are deterministic and normalization holds") {
    ToyEncoderOptions opt;
    opt.seed = 21;
    opt.dim = 12;
    ToyEncoder a(opt);
    ToyEncoder b(opt);
    CHECK(a.parameter_hash() == b.parameter_hash());

    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        RawImage img{"t" + std::to_string(trial), rng.gaussian_vec(12)};
        auto fa = a.encode_image(img);
        auto fb = b.encode_image(img);
        CHECK(fa.vector == fb.vector);
        CHECK(std::abs(norm2(fa.vector) - 1.0) < 1e-5);
    }

    Vec t1 = a.encode_prompt_text("a photo of a pet.");
    Vec t2 = b.encode_prompt_text("a photo of a pet.");
    CHECK(t1 == t2);
    CHECK(std::abs(norm2(t1) - 1.0) < 1e-5);
}

TEST_CASE("raw_image_for_feature inverts the vision map") {
    ToyEncoderOptions opt;
    opt.seed = 9;
    opt.dim = 10;
    ToyEncoder enc(opt);
    Rng rng(4);
    Vec direction = normalized(rng.gaussian_vec(10));
    Vec raw = enc.raw_image_for_feature(direction);
    auto f = enc.encode_image({"inv", raw});
    for (std::size_t i = 0; i < 10; ++i) CHECK(f.vector[i] == doctest::Approx(direction[i]));
}

TEST_CASE("prompt tokenization lowercases and strips edge punctuation") {
    auto tokens = ToyEncoder::tokenize("A photo of a Sphere.");
    REQUIRE(tokens.size() == 5);
    CHECK(tokens[0] == "a");
    CHECK(tokens[1] == "photo");
    CHECK(tokens[4] == "sphere");
}

TEST_CASE("registry key construction") {
    auto enc = make_encoder("toy:7");
    CHECK(enc->embed_dim() == 16);
    CHECK(enc->model_tag() == "toy:7:d16");

    auto enc8 = make_encoder("toy:3:d8");
    CHECK(enc8->embed_dim() == 8);

    CHECK_THROWS_AS(make_encoder("clip:RN50"), Error);
    CHECK_THROWS_AS(make_encoder("toy:notanumber"), Error);
    try {
        make_encoder("clip:RN50");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("vocabulary rejects duplicates and suggests near tokens") {
    VocabularyTable vocab;
    vocab.add("photo", {1.0, 0.0});
    vocab.add("photos", {0.0, 1.0});
    CHECK_THROWS_AS(vocab.add("photo", {0.5, 0.5}), Error);
    auto near = vocab.nearest_tokens("phot", 2);
    REQUIRE(near.size() == 2);
    CHECK(near[0] == "photo");
}

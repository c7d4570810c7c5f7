// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "topmil/errors.hpp"
#include "topmil/prompt_files.hpp"
#include "topmil/prompt_model.hpp"
#include "topmil/rng.hpp"

using namespace topmil;

namespace {

PromptGroup make_group(Vocabulary& vocab, std::size_t M, const std::string& desc, const std::string& cls, Rng& rng) {
  PromptGroup g;
  g.tag = cls;
  g.polarity = Polarity::Positive;
  g.learnable = init_context(M, vocab.word_dim(), rng);
  g.descriptive_tokens = tokenize(desc);
  g.class_tokens = tokenize(cls);
  vocab.add_all(g.descriptive_tokens);
  vocab.add_all(g.class_tokens);
  return g;
}

Matrix random_sequence(Rng& rng, std::size_t L, std::size_t d) {
  Matrix s(L, d);
  rng.fill_uniform(s.data(), -kInitRange, kInitRange);
  return s;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on whitespace") {
  const auto t = tokenize("  An Image\tpatch\nOF Tumor ");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "an");
  CHECK(t[4] == "tumor");
  CHECK(tokenize("   ").empty());
}

TEST_CASE("vocabulary embeddings depend only on seed and word") {
  Vocabulary a(7, 16), b(7, 16);
  a.add("tumor");
  a.add("stroma");
  b.add("stroma");
  b.add("tumor");
  const auto ea = a.embedding(a.id("tumor"));
  const auto eb = b.embedding(b.id("tumor"));
  CHECK(std::equal(ea.begin(), ea.end(), eb.begin()));
  for (double v : ea) {
    CHECK(v >= -kInitRange);
    CHECK(v <= kInitRange);
  }
  CHECK(a.add("tumor") == a.id("tumor"));
  CHECK(a.size() == 2);
}

TEST_CASE("vocabulary errors name the token") {
  Vocabulary v(1, 8);
  v.add("known");
  v.freeze();
  CHECK_THROWS_WITH_AS(v.id("mystery"), doctest::Contains("mystery"), VocabularyError);
  CHECK_THROWS_AS(v.add("another"), VocabularyError);
  CHECK_NOTHROW(v.add("known"));
}

TEST_CASE("assemble_prompt lengths") {
  Rng rng(1);
  Vocabulary vocab(3, 32);
  SUBCASE("M=0, class only") {
    const PromptGroup g = make_group(vocab, 0, "", "tumor", rng);
    CHECK(assemble_prompt(g, vocab).rows() == 1);
  }
  SUBCASE("M=10, 5 descriptive, 4 class") {
    const PromptGroup g = make_group(vocab, 10, "one two three four five", "a patch of tumor", rng);
    const Matrix seq = assemble_prompt(g, vocab);
    CHECK(seq.rows() == 19);
    CHECK(g.sequence_length() == 19);
    CHECK(seq == assemble_prompt(g, vocab));
    // learnable rows first, then description, then class template
    CHECK(std::equal(seq.row(0).begin(), seq.row(0).end(), g.learnable.row(0).begin()));
    const auto five = vocab.embedding(vocab.id("five"));
    CHECK(std::equal(seq.row(14).begin(), seq.row(14).end(), five.begin()));
    const auto tumor = vocab.embedding(vocab.id("tumor"));
    CHECK(std::equal(seq.row(18).begin(), seq.row(18).end(), tumor.begin()));
  }
  SUBCASE("unknown token") {
    PromptGroup g = make_group(vocab, 2, "", "tumor", rng);
    g.class_tokens.push_back("zebra");
    CHECK_THROWS_WITH_AS(assemble_prompt(g, vocab), doctest::Contains("zebra"), VocabularyError);
  }
}

TEST_CASE("encode_text basics") {
  const EncoderSpec enc = EncoderSpec::toy(8, 4, 99);
  Rng rng(2);
  SUBCASE("single token gives normalized projection") {
    const Matrix seq = random_sequence(rng, 1, 8);
    const Vector f = encode_text(seq, enc);
    Vector e(4, 0.0);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 8; ++c) e[r] += enc.projection(r, c) * seq(0, c);
    const double n = norm(e);
    for (std::size_t r = 0; r < 4; ++r) CHECK(f[r] == doctest::Approx(e[r] / n).epsilon(1e-12));
  }
  SUBCASE("duplicating every token leaves the output unchanged") {
    const Matrix seq = random_sequence(rng, 5, 8);
    Matrix doubled(10, 8);
    for (std::size_t r = 0; r < 10; ++r) std::ranges::copy(seq.row(r / 2), doubled.row(r).begin());
    const Vector a = encode_text(seq, enc), b = encode_text(doubled, enc);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(encode_text(Matrix(0, 8), enc), DegenerateInput);
    CHECK_THROWS_AS(encode_text(Matrix(3, 8, 0.0), enc), DegenerateInput);
  }
}

TEST_CASE("encode_text output is unit norm over 1000 random sequences") {
  const EncoderSpec enc = EncoderSpec::toy(32, 16, 5);
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Vector f = encode_text(random_sequence(rng, 1 + rng.below(30), 32), enc);
    CHECK(std::abs(norm(f) - 1.0) <= 1e-9);
  }
}

TEST_CASE("encode_text_backward matches finite differences") {
  const EncoderSpec enc = EncoderSpec::toy(12, 6, 17);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix seq = random_sequence(rng, 2 + rng.below(8), 12);
    Vector g(6);
    rng.fill_uniform(g, -1.0, 1.0);
    const TextEncoding fwd = encode_text_detailed(seq, enc);
    const Vector per_position = encode_text_backward(fwd, g, enc);
    // every position receives the same gradient, so perturb one row at a time
    Matrix analytic(seq.rows(), seq.cols());
    for (std::size_t r = 0; r < seq.rows(); ++r) std::ranges::copy(per_position, analytic.row(r).begin());
    auto f = [&](std::span<const double> flat) {
      return dot(encode_text(Matrix(seq.rows(), seq.cols(), Vector(flat.begin(), flat.end())), enc), g);
    };
    const auto report = grad_check_report(f, analytic.data(), seq.data(), 1e-6);
    CHECK(report.max_relative_error < 1e-5);
  }
}

TEST_CASE("encode_image") {
  const EncoderSpec pre = EncoderSpec::precomputed(2);
  const Vector f = encode_image(Vector{3.0, 4.0}, pre);
  CHECK(f[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(encode_image(Vector{3.0, 4.0}, pre) == f);
  CHECK_THROWS_AS(encode_image(Vector{1.0, 2.0, 3.0}, pre), ContractViolation);

  const EncoderSpec toy = EncoderSpec::toy(5, 3, 21);
  for (std::size_t k = 0; k < 5; ++k) {
    Vector e(5, 0.0);
    e[k] = 1.0;
    const Vector out = encode_image(e, toy);
    Vector col(3);
    for (std::size_t r = 0; r < 3; ++r) col[r] = toy.projection(r, k);
    const Vector want = normalized(col);
    for (std::size_t r = 0; r < 3; ++r) CHECK(out[r] == doctest::Approx(want[r]).epsilon(1e-14));
  }
}

TEST_CASE("encoder determinism") {
  const EncoderSpec a = EncoderSpec::toy(64, 8, 123), b = EncoderSpec::toy(64, 8, 123);
  CHECK(a.projection == b.projection);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(EncoderSpec::toy(64, 8, 124).fingerprint() != a.fingerprint());
  for (double v : a.projection.data()) CHECK(std::abs(v) <= kInitRange);
}

TEST_CASE("build_prototypes shapes") {
  Rng rng(6);
  Vocabulary vocab(2, 24);
  const EncoderSpec enc = EncoderSpec::toy(24, 10, 3);
  SUBCASE("two groups") {
    std::vector<PromptGroup> groups{make_group(vocab, 4, "dense cells", "tumor", rng),
                                    make_group(vocab, 4, "fat", "adipose", rng)};
    groups[1].polarity = Polarity::Negative;
    const PrototypeSet ps = build_prototypes(groups, vocab, enc);
    CHECK(ps.P.rows() == 2);
    CHECK(ps.P.cols() == 10);
    CHECK(ps.count_positive() == 1);
    for (std::size_t k = 0; k < 2; ++k) CHECK(norm(ps.P.row(k)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("identical groups give identical rows") {
    const PromptGroup g = make_group(vocab, 4, "dense cells", "tumor", rng);
    const std::vector<PromptGroup> groups{g, g};
    const PrototypeSet ps = build_prototypes(groups, vocab, enc);
    CHECK(std::equal(ps.P.row(0).begin(), ps.P.row(0).end(), ps.P.row(1).begin()));
  }
  SUBCASE("26 groups") {
    std::vector<PromptGroup> groups;
    for (int i = 0; i < 26; ++i) groups.push_back(make_group(vocab, 10, "phenotype " + std::to_string(i), "cells", rng));
    const PrototypeSet ps = build_prototypes(groups, vocab, enc);
    CHECK(ps.P.rows() == 26);
    CHECK(ps.P.cols() == 10);
  }
  SUBCASE("a single group is rejected") {
    const std::vector<PromptGroup> groups{make_group(vocab, 4, "x", "y", rng)};
    CHECK_THROWS_AS(build_prototypes(groups, vocab, enc), ContractViolation);
  }
}

TEST_CASE("backprop_to_contexts gives every learnable row the same gradient") {
  Rng rng(9);
  Vocabulary vocab(2, 16);
  const EncoderSpec enc = EncoderSpec::toy(16, 6, 3);
  std::vector<PromptGroup> groups{make_group(vocab, 3, "a b", "c", rng), make_group(vocab, 5, "d", "e f", rng)};
  Matrix g(2, 6);
  rng.fill_uniform(g.data(), -1.0, 1.0);

  std::vector<TextEncoding> fwd;
  encode_groups(groups, vocab, enc, &fwd);
  std::vector<Matrix> grads{Matrix(3, 16), Matrix(5, 16)};
  backprop_to_contexts(fwd, g, enc, grads);

  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t r = 1; r < grads[k].rows(); ++r)
      CHECK(std::equal(grads[k].row(r).begin(), grads[k].row(r).end(), grads[k].row(0).begin()));
    auto f = [&](std::span<const double> flat) {
      auto copy = groups;
      copy[k].learnable = Matrix(copy[k].learnable.rows(), 16, Vector(flat.begin(), flat.end()));
      const Matrix P = encode_groups(copy, vocab, enc);
      double acc = 0.0;
      for (std::size_t i = 0; i < P.data().size(); ++i) acc += P.data()[i] * g.data()[i];
      return acc;
    };
    CHECK(grad_check(f, grads[k].data(), groups[k].learnable.data(), 1e-6) < 1e-5);
  }
}

TEST_CASE("prompt description parsing") {
  const std::string text =
      "level=instance; tag=Lymphocytes; polarity=negative\n"
      "an image patch of [CLASS]\n"
      "Small round cells.\n\n"
      "Dense dark nuclei.\n";
  const PromptDescription d = parse_prompt_description(text, "lymph.txt");
  CHECK(d.level == PromptLevel::Instance);
  CHECK(d.polarity == Polarity::Negative);
  CHECK(d.tag == "Lymphocytes");
  CHECK(d.class_text() == "an image patch of Lymphocytes");
  CHECK(d.description == "Small round cells. Dense dark nuclei.");

  CHECK_THROWS_WITH_AS(parse_prompt_description("level=instance; tag=x; polarity=n/a\n[CLASS]\n", "a.txt"),
                       doctest::Contains("a.txt:1"), FormatError);
  CHECK_THROWS_WITH_AS(parse_prompt_description("level=bag; tag=x; polarity=n/a\nno placeholder\n", "b.txt"),
                       doctest::Contains("b.txt:2"), FormatError);
  CHECK_THROWS_WITH_AS(parse_prompt_description("level=bag; tag=x; polarity=n/a; color=red\n[CLASS]\n", "c.txt"),
                       doctest::Contains("unknown header key"), FormatError);
  CHECK_THROWS_AS(parse_prompt_description("level=bag; tag=x; polarity=positive\n[CLASS]\n", "d.txt"), FormatError);
  CHECK_THROWS_AS(parse_prompt_description("level=bag; tag=x\n[CLASS]\n", "e.txt"), FormatError);
}

TEST_CASE("shipped prompt directories load") {
  for (const char* name : {"camelyon_tumor_detection", "tcga_lung_subtyping", "synthetic_benchmark"}) {
    const auto dir = std::filesystem::path(TOPMIL_SOURCE_DIR) / "prompts" / name;
    const PromptDirectory p = load_prompt_directory(dir);
    CHECK(p.bag.size() == 2);
    CHECK(p.instance.size() >= 2);
    std::size_t positives = 0;
    for (const auto& d : p.instance) positives += d.polarity == Polarity::Positive;
    CHECK(positives >= 1);
  }
  const PromptDirectory cam = load_prompt_directory(std::filesystem::path(TOPMIL_SOURCE_DIR) / "prompts/camelyon_tumor_detection");
  CHECK(cam.bag[0].tag == "normal lymph node");
  CHECK(cam.bag[1].tag == "lymph node metastasis");
}

TEST_CASE("make_prompt_group registers words and validates") {
  Rng rng(3);
  Vocabulary vocab(1, 16);
  const PromptDescription d =
      parse_prompt_description("level=instance; tag=tumor; polarity=positive\nan image of [CLASS]\nbig nuclei\n", "t");
  const PromptGroup full = make_prompt_group(d, vocab, 10, rng);
  CHECK(full.sequence_length() == 10 + 2 + 4);
  const PromptGroup bare = make_prompt_group(d, vocab, 10, rng, false);
  CHECK(bare.descriptive_tokens.empty());
  vocab.freeze();
  const PromptDescription other =
      parse_prompt_description("level=instance; tag=fat; polarity=negative\nan image of [CLASS]\n", "f");
  CHECK_THROWS_WITH_AS(build_prompt_group(other, vocab, 10, rng), doctest::Contains("fat"), VocabularyError);
}

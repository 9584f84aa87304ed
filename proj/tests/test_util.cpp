#include <catch2/catch_amalgamated.hpp>

#include "scenecomp/io.hpp"
#include "scenecomp/rng.hpp"
#include "scenecomp/sha256.hpp"

using namespace scenecomp;

TEST_CASE("sha256 matches NIST vectors") {
  CHECK(Sha256::hex_digest("", 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::hex_digest("abc", 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string s = "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
  CHECK(Sha256::hex_digest(s.data(), s.size()) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  std::string m(1000000, 'a');
  CHECK(Sha256::hex_digest(m.data(), m.size()) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("rng streams are deterministic and independent") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream root(7);
  auto c1 = root.child("forge", 0);
  auto c2 = root.child("forge", 1);
  auto c3 = root.child("train", 0);
  CHECK(c1.seed() != c2.seed());
  CHECK(c1.seed() != c3.seed());

  // Child derivation does not consume from the parent.
  RngStream r1(7), r2(7);
  (void)r1.child("x");
  CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("rng uniform and normal have sane moments") {
  RngStream rng(123);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.005);
  CHECK(std::abs(var - 1.0 / 12.0) < 0.005);

  double nsum = 0, nsum2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    nsum += x;
    nsum2 += x * x;
  }
  CHECK(std::abs(nsum / n) < 0.01);
  CHECK(std::abs(nsum2 / n - 1.0) < 0.02);
}

TEST_CASE("uniform_index is unbiased over small ranges") {
  RngStream rng(5);
  int counts[7] = {0};
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[rng.uniform_index(7)]++;
  for (int k = 0; k < 7; ++k) CHECK(std::abs(counts[k] - n / 7) < 500);
}

TEST_CASE("byte writer and reader round-trip") {
  io::ByteWriter w;
  w.u8(7);
  w.u16(65535);
  w.u32(123456789u);
  w.u64(0xdeadbeefcafebabeull);
  w.f32(1.5f);
  w.f64(-2.25);
  w.str("hello");
  std::string bytes = w.take();

  io::ByteReader r(bytes);
  CHECK(r.u8() == 7);
  CHECK(r.u16() == 65535);
  CHECK(r.u32() == 123456789u);
  CHECK(r.u64() == 0xdeadbeefcafebabeull);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -2.25);
  CHECK(r.str() == "hello");
  CHECK(r.exhausted());
}

TEST_CASE("byte reader rejects truncated input") {
  io::ByteWriter w;
  w.u32(5);
  std::string bytes = w.take();
  io::ByteReader r(bytes);
  (void)r.u32();
  CHECK_THROWS_AS(r.u64(), LoadError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ddwm/quantizer.hpp"
#include "ddwm/rng.hpp"

using namespace ddwm;

namespace {

Codebook make_codebook(const std::vector<std::vector<double>>& rows) {
  Codebook cb(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t k = 0; k < rows[i].size(); ++k) cb.code(static_cast<int>(i))[k] = rows[i][k];
  return cb;
}

}  // namespace

TEST_SUITE("quantize") {
  TEST_CASE("picks the nearest code") {
    Codebook cb = make_codebook({{0.0, 0.0}, {10.0, 10.0}});
    QuantizeResult q = quantize({1.0, 1.0}, cb);
    CHECK(q.indices == std::vector<int>{0});
    CHECK(q.quantized == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("a vector equal to a code maps to it at distance zero") {
    Codebook cb = make_codebook({{0.5, -1.0}, {2.0, 3.0}, {-4.0, 0.25}});
    QuantizeResult q = quantize({2.0, 3.0}, cb);
    CHECK(q.indices == std::vector<int>{1});
    CHECK(q.quantized[0] == 2.0);
    CHECK(q.quantized[1] == 3.0);
  }

  TEST_CASE("exact ties break to the lower index") {
    // codes 2 and 5 both at distance 1 from z = 1
    Codebook cb = make_codebook({{9.0}, {9.0}, {0.0}, {9.0}, {9.0}, {2.0}});
    QuantizeResult q = quantize({1.0}, cb);
    CHECK(q.indices == std::vector<int>{2});
  }

  TEST_CASE("quantizing the quantized output is idempotent") {
    Rng rng(3);
    Codebook cb(32, 4);
    for (double& v : cb.codes) v = rng.normal();
    std::vector<double> z(4 * 10);
    for (double& v : z) v = rng.normal() * 2.0;
    QuantizeResult q1 = quantize(z, cb);
    QuantizeResult q2 = quantize(q1.quantized, cb);
    CHECK(q1.indices == q2.indices);
    CHECK(q1.quantized == q2.quantized);
  }

  TEST_CASE("matches an exhaustive scan on a large codebook") {
    Rng rng(4);
    Codebook cb(4096, 3);
    for (double& v : cb.codes) v = rng.normal();
    std::vector<double> z(3 * 20);
    for (double& v : z) v = rng.normal() * 1.5;
    QuantizeResult q = quantize(z, cb);
    for (int v = 0; v < 20; ++v) {
      int best = 0;
      double best_d2 = 1e300;
      for (int j = 0; j < 4096; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double diff = z[v * 3 + k] - cb.code(j)[k];
          d2 += diff * diff;
        }
        if (d2 < best_d2) {
          best_d2 = d2;
          best = j;
        }
      }
      REQUIRE(q.indices[v] == best);
    }
  }

  TEST_CASE("ages reset on use and grow otherwise; the bank records inputs") {
    Codebook cb = make_codebook({{0.0}, {10.0}, {20.0}});
    MemoryBank bank(3, 1);
    quantize({0.1, 9.5}, cb, &bank);  // uses codes 0 and 1
    CHECK(cb.usage_age == std::vector<int>{0, 0, 1});
    quantize({0.2}, cb, &bank);  // only code 0
    CHECK(cb.usage_age == std::vector<int>{0, 1, 2});
    CHECK(bank.size() == 3);
    CHECK(bank.snapshot() == std::vector<double>{0.1, 9.5, 0.2});
  }

  TEST_CASE("rejects an empty batch and mismatched dims") {
    Codebook cb = make_codebook({{0.0, 0.0}});
    CHECK_THROWS_AS(quantize({}, cb), std::invalid_argument);
    CHECK_THROWS_AS(quantize({1.0, 2.0, 3.0}, cb), std::invalid_argument);
    Codebook empty;
    CHECK_THROWS_AS(quantize({1.0}, empty), std::invalid_argument);
  }
}

TEST_SUITE("memory_bank") {
  TEST_CASE("capacity is exactly ten times the codebook size with FIFO eviction") {
    MemoryBank bank(2, 1);
    CHECK(bank.capacity == 20);
    for (int i = 0; i < 25; ++i) {
      const double v = i;
      bank.push(&v);
    }
    CHECK(bank.size() == 20);
    std::vector<double> snap = bank.snapshot();
    REQUIRE(snap.size() == 20);
    for (int i = 0; i < 20; ++i) CHECK(snap[i] == 5.0 + i);  // oldest five evicted
  }
}

TEST_SUITE("vq_loss") {
  TEST_CASE("zero when the input equals its code") {
    Codebook cb = make_codebook({{1.0, 2.0}});
    QuantizeResult q = quantize({1.0, 2.0}, cb);
    VqLossResult res = vq_loss({1.0, 2.0}, q, cb);
    CHECK(res.loss == 0.0);
    for (double g : res.dz) CHECK(g == 0.0);
    for (double g : res.dcodes) CHECK(g == 0.0);
  }

  TEST_CASE("unit offset in one dimension costs a quarter plus one") {
    Codebook cb = make_codebook({{0.0}});
    QuantizeResult q = quantize({1.0}, cb);
    VqLossResult res = vq_loss({1.0}, q, cb);
    CHECK(res.loss == doctest::Approx(1.25).epsilon(1e-15));
  }

  TEST_CASE("gradients route per term and match finite differences") {
    Rng rng(7);
    Codebook cb(4, 3);
    for (double& v : cb.codes) v = rng.normal();
    std::vector<double> z(3 * 5);
    for (double& v : z) v = rng.normal();
    QuantizeResult q = quantize(z, cb);
    VqLossResult res = vq_loss(z, q, cb);

    // codebook side: only the first (code-pulling) term moves
    auto term1 = [&] {
      double s = 0.0;
      for (size_t v = 0; v < q.indices.size(); ++v)
        for (int k = 0; k < 3; ++k) {
          const double diff = z[v * 3 + k] - cb.code(q.indices[v])[k];
          s += 0.25 * diff * diff;
        }
      return s / q.indices.size();
    };
    // z side: only the commitment term moves (codes held fixed)
    auto term2 = [&] {
      double s = 0.0;
      for (size_t v = 0; v < q.indices.size(); ++v)
        for (int k = 0; k < 3; ++k) {
          const double diff = z[v * 3 + k] - q.quantized[v * 3 + k];
          s += 1.0 * diff * diff;
        }
      return s / q.indices.size();
    };
    const double h = 1e-6;
    for (size_t i = 0; i < cb.codes.size(); ++i) {
      const double save = cb.codes[i];
      cb.codes[i] = save + h;
      const double up = term1();
      cb.codes[i] = save - h;
      const double down = term1();
      cb.codes[i] = save;
      CHECK(res.dcodes[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
    for (size_t i = 0; i < z.size(); ++i) {
      const double save = z[i];
      z[i] = save + h;
      const double up = term2();
      z[i] = save - h;
      const double down = term2();
      z[i] = save;
      CHECK(res.dz[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_SUITE("straight_through") {
  TEST_CASE("copies the gradient bit for bit") {
    std::vector<double> g = {1.0, -2.5, 0.0, 1e-300, 3.7};
    CHECK(straight_through(g) == g);
  }

  TEST_CASE("composes with the commitment gradient through a toy pipeline") {
    // decoder loss sum(sin(zhat)); surrogate treats zhat as z plus a frozen
    // offset, which is exactly what the straight-through estimator assumes
    Codebook cb = make_codebook({{0.4, -0.3}, {1.5, 2.0}});
    std::vector<double> z = {0.7, 0.1, 1.2, 1.9};
    QuantizeResult q = quantize(z, cb);
    std::vector<double> ddec(z.size());
    for (size_t i = 0; i < z.size(); ++i) ddec[i] = std::cos(q.quantized[i]);
    VqLossResult vq = vq_loss(z, q, cb);
    std::vector<double> copied = straight_through(ddec);
    std::vector<double> total(z.size());
    for (size_t i = 0; i < z.size(); ++i) total[i] = copied[i] + vq.dz[i];

    std::vector<double> offset(z.size());
    for (size_t i = 0; i < z.size(); ++i) offset[i] = q.quantized[i] - z[i];
    auto surrogate = [&](const std::vector<double>& zz) {
      double s = 0.0;
      for (size_t i = 0; i < zz.size(); ++i) {
        s += std::sin(zz[i] + offset[i]);  // decoder sees the shifted input
        const double diff = zz[i] - q.quantized[i];
        s += 1.0 * diff * diff / q.indices.size();
      }
      return s;
    };
    const double h = 1e-6;
    for (size_t i = 0; i < z.size(); ++i) {
      std::vector<double> zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (surrogate(zp) - surrogate(zm)) / (2 * h);
      CHECK(total[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("zero decoder gradient leaves the commitment term alone") {
    Codebook cb = make_codebook({{0.0}});
    std::vector<double> z = {0.8};
    QuantizeResult q = quantize(z, cb);
    VqLossResult vq = vq_loss(z, q, cb);
    std::vector<double> total = straight_through({0.0});
    total[0] += vq.dz[0];
    CHECK(total[0] == vq.dz[0]);
    CHECK(total[0] == doctest::Approx(2.0 * 0.8).epsilon(1e-15));
  }
}

TEST_SUITE("kmeans") {
  TEST_CASE("recovers the means of two tight separable clusters") {
    Rng rng(11);
    std::vector<double> pts;
    std::vector<double> mean_a(2, 0.0), mean_b(2, 0.0);
    for (int i = 0; i < 30; ++i) {
      const double x = -5.0 + 0.01 * rng.normal(), y = -5.0 + 0.01 * rng.normal();
      pts.push_back(x);
      pts.push_back(y);
      mean_a[0] += x / 30;
      mean_a[1] += y / 30;
    }
    for (int i = 0; i < 30; ++i) {
      const double x = 5.0 + 0.01 * rng.normal(), y = 5.0 + 0.01 * rng.normal();
      pts.push_back(x);
      pts.push_back(y);
      mean_b[0] += x / 30;
      mean_b[1] += y / 30;
    }
    std::vector<double> cent = kmeans(pts, 60, 2, 2, rng);
    // order-free comparison against the two empirical means
    auto close = [&](const double* c, const std::vector<double>& m) {
      return std::abs(c[0] - m[0]) < 1e-6 && std::abs(c[1] - m[1]) < 1e-6;
    };
    const bool ab = close(&cent[0], mean_a) && close(&cent[2], mean_b);
    const bool ba = close(&cent[0], mean_b) && close(&cent[2], mean_a);
    CHECK((ab || ba));
  }

  TEST_CASE("deterministic given the rng seed") {
    std::vector<double> pts;
    Rng data(12);
    for (int i = 0; i < 50; ++i) pts.push_back(data.normal());
    Rng r1(5), r2(5);
    CHECK(kmeans(pts, 50, 1, 4, r1) == kmeans(pts, 50, 1, 4, r2));
  }

  TEST_CASE("rejects more clusters than points") {
    Rng rng(1);
    CHECK_THROWS_AS(kmeans({1.0, 2.0}, 2, 1, 3, rng), std::invalid_argument);
  }
}

TEST_SUITE("maintain") {
  TEST_CASE("codes used every iteration never reinitialize") {
    Codebook cb = make_codebook({{0.0}, {10.0}});
    MemoryBank bank(2, 1);
    Rng rng(2);
    for (int it = 0; it < 300; ++it) {
      quantize({0.1, 9.9}, cb, &bank);
      MaintainResult res = maintain(cb, bank, rng);
      REQUIRE_FALSE(res.reinitialized);
      REQUIRE(res.dead_count == 0);
    }
    CHECK(cb.iteration == 300);
  }

  TEST_CASE("a starved code dies at age 256 and triggers reinitialization") {
    Codebook cb = make_codebook(
        {{0.0}, {10.0}, {20.0}, {30.0}, {40.0}, {50.0}, {60.0}, {999.0}});
    MemoryBank bank(8, 1);
    Rng rng(3);
    int fired_at = -1;
    for (int it = 1; it <= 300 && fired_at < 0; ++it) {
      // feed every code except the last one
      quantize({0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0}, cb, &bank);
      MaintainResult res = maintain(cb, bank, rng);
      if (it < 256) REQUIRE(res.dead_count == 0);
      if (res.reinitialized) fired_at = it;
    }
    // age reaches 256 on the 256th starved iteration; gates are already open
    CHECK(fired_at == 256);
    CHECK(cb.last_reinit_iteration == 256);
    for (int a : cb.usage_age) CHECK(a == 0);
    // centroids of a bank holding only the seven fed values stay in range
    for (int j = 0; j < cb.count(); ++j) {
      CHECK(cb.code(j)[0] >= 0.0);
      CHECK(cb.code(j)[0] <= 60.0);
    }
  }

  TEST_CASE("a dead fraction of 2.9 percent does not reinitialize") {
    Codebook cb(1000, 1);
    for (int j = 0; j < 1000; ++j) cb.code(j)[0] = j;
    for (int j = 0; j < 29; ++j) cb.usage_age[j] = 256;  // 2.9% dead
    cb.iteration = 500;  // age gate wide open
    MemoryBank bank(1000, 1);
    const double v = 0.0;
    for (size_t i = 0; i < bank.capacity; ++i) bank.push(&v);
    Rng rng(4);
    MaintainResult res = maintain(cb, bank, rng);
    CHECK(res.dead_count == 29);
    CHECK_FALSE(res.reinitialized);
    // one more dead code crosses the strict 3% threshold
    cb.usage_age[29] = 256;
    MaintainResult res2 = maintain(cb, bank, rng);
    CHECK(res2.dead_count == 30);
    CHECK_FALSE(res2.reinitialized);  // 30/1000 is exactly 3%, not more
    cb.usage_age[30] = 300;
    MaintainResult res3 = maintain(cb, bank, rng);
    CHECK(res3.dead_count == 31);
    CHECK(res3.reinitialized);
  }

  TEST_CASE("no reinitialization before 200 iterations have accumulated") {
    Codebook cb = make_codebook({{0.0}, {1.0}});
    cb.usage_age = {256, 256};  // 100% dead from the start
    MemoryBank bank(2, 1);
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
      const double v = 0.1 * i;
      bank.push(&v);
    }
    for (int it = 1; it <= 250; ++it) {
      MaintainResult res = maintain(cb, bank, rng);
      if (it < 200) {
        REQUIRE_FALSE(res.reinitialized);
      } else {
        REQUIRE(res.reinitialized);
        break;
      }
      cb.usage_age = {256, 256};  // keep them dead
    }
    CHECK(cb.last_reinit_iteration == 200);
    // a fresh die-off within 200 iterations of the reinit stays blocked
    cb.usage_age = {400, 400};
    MaintainResult res = maintain(cb, bank, rng);
    CHECK_FALSE(res.reinitialized);
  }

  TEST_CASE("a bank smaller than the codebook skips with a warning") {
    Codebook cb = make_codebook({{0.0}, {1.0}, {2.0}});
    cb.usage_age = {256, 256, 256};
    cb.iteration = 400;
    MemoryBank bank(3, 1);
    const double v = 1.0;
    bank.push(&v);
    bank.push(&v);
    Rng rng(6);
    MaintainResult res = maintain(cb, bank, rng);
    CHECK_FALSE(res.reinitialized);
    CHECK(res.warning.find("skipped") != std::string::npos);
    CHECK(res.warning.find("2") != std::string::npos);
    CHECK(cb.code(0)[0] == 0.0);  // untouched
  }

  TEST_CASE("dead_only scope replaces just the dead codes") {
    Codebook cb = make_codebook({{0.0}, {100.0}, {200.0}});
    cb.usage_age = {0, 300, 0};
    cb.iteration = 400;
    MemoryBank bank(3, 1);
    Rng rng(7);
    for (int i = 0; i < 30; ++i) {
      const double v = 50.0 + 0.001 * i;  // a tight cluster near 50
      bank.push(&v);
    }
    MaintainResult res = maintain(cb, bank, rng, ReinitScope::dead_only);
    CHECK(res.reinitialized);
    CHECK(cb.code(0)[0] == 0.0);
    CHECK(cb.code(2)[0] == 200.0);
    CHECK(cb.code(1)[0] == doctest::Approx(50.0 + 0.001 * 14.5).epsilon(1e-9));
    CHECK(cb.usage_age[1] == 0);
    CHECK(cb.usage_age[0] == 0);  // was already live
  }

  TEST_CASE("reinitialized codes sit within 1e-6 of the bank cluster means") {
    Codebook cb = make_codebook({{-99.0}, {99.0}});
    cb.usage_age = {256, 256};
    cb.iteration = 300;
    MemoryBank bank(2, 1);
    double sum_a = 0.0, sum_b = 0.0;
    Rng data(8);
    for (int i = 0; i < 10; ++i) {
      const double v = -3.0 + 1e-4 * data.normal();
      bank.push(&v);
      sum_a += v;
    }
    for (int i = 0; i < 10; ++i) {
      const double v = 7.0 + 1e-4 * data.normal();
      bank.push(&v);
      sum_b += v;
    }
    Rng rng(9);
    MaintainResult res = maintain(cb, bank, rng);
    REQUIRE(res.reinitialized);
    const double lo = std::min(cb.code(0)[0], cb.code(1)[0]);
    const double hi = std::max(cb.code(0)[0], cb.code(1)[0]);
    CHECK(lo == doctest::Approx(sum_a / 10).epsilon(1e-6));
    CHECK(hi == doctest::Approx(sum_b / 10).epsilon(1e-6));
  }
}

TEST_SUITE("codebook_checkpoint") {
  TEST_CASE("round trips codes, ages, and counters exactly") {
    Rng rng(10);
    Codebook cb(6, 3);
    for (double& v : cb.codes) v = rng.normal();
    cb.usage_age = {0, 5, 256, 1, 0, 77};
    cb.iteration = 1234;
    cb.last_reinit_iteration = 1000;
    const std::string path = "test_codebook_archive.bin";
    save_codebook(path, cb);
    Codebook back = load_codebook(path);
    CHECK(back.codes == cb.codes);
    CHECK(back.usage_age == cb.usage_age);
    CHECK(back.iteration == 1234);
    CHECK(back.last_reinit_iteration == 1000);
    CHECK(back.dim == 3);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
  }
}

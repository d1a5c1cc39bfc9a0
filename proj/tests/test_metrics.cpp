#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mspn/metrics.hpp"
#include "test_util.hpp"

using namespace mspn;
using test::random_tensor;

namespace {

// Naive per-window SSIM oracle written directly from the formula, kept separate
// from the library implementation. Returns luminance and contrast-structure
// factors so properties can be checked term by term.
struct WindowTerms {
  double luminance, contrast_structure;
};

std::vector<WindowTerms> oracle_windows(const Tensor<double>& x, const Tensor<double>& y, int win,
                                        double sigma) {
  const int half = win / 2;
  std::vector<double> k(std::size_t(win) * win);
  double ksum = 0;
  for (int a = 0; a < win; ++a)
    for (int b = 0; b < win; ++b) {
      const double v = std::exp(-((a - half) * double(a - half) + (b - half) * double(b - half)) /
                                (2.0 * sigma * sigma));
      k[std::size_t(a) * win + b] = v;
      ksum += v;
    }
  for (auto& v : k) v /= ksum;

  const double c1 = 1e-4, c2 = 9e-4;
  std::vector<WindowTerms> out;
  for (int ch = 0; ch < x.c; ++ch)
    for (int wy = 0; wy + win <= x.h; ++wy)
      for (int wx = 0; wx + win <= x.w; ++wx) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int a = 0; a < win; ++a)
          for (int b = 0; b < win; ++b) {
            const double wgt = k[std::size_t(a) * win + b];
            const double xv = x.at(0, ch, wy + a, wx + b), yv = y.at(0, ch, wy + a, wx + b);
            mx += wgt * xv;
            my += wgt * yv;
            sxx += wgt * xv * xv;
            syy += wgt * yv * yv;
            sxy += wgt * xv * yv;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, vxy = sxy - mx * my;
        out.push_back({(2 * mx * my + c1) / (mx * mx + my * my + c1),
                       (2 * vxy + c2) / (vx + vy + c2)});
      }
  return out;
}

double oracle_ssim(const Tensor<double>& x, const Tensor<double>& y, int win = 11, double sigma = 1.5) {
  auto terms = oracle_windows(x, y, win, sigma);
  double s = 0;
  for (auto& t : terms) s += t.luminance * t.contrast_structure;
  return s / double(terms.size());
}

}  // namespace

TEST_CASE("ssim of an image with itself is exactly 1") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor<double>(1, 3, 16, 16, rng, 0.0, 1.0);
    CHECK(ssim(x, x) == 1.0);
  }
}

TEST_CASE("constant-image ssim matches the closed form") {
  const double cases[][2] = {{0.25, 0.75}, {0.0, 1.0}, {0.5, 0.5}, {0.1, 0.9}};
  for (auto [a, b] : cases) {
    auto x = Tensor<double>::full(1, 3, 16, 16, a);
    auto y = Tensor<double>::full(1, 3, 16, 16, b);
    const double c1 = 1e-4;
    const double expect = (2 * a * b + c1) / (a * a + b * b + c1);
    CHECK(ssim(x, y) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("ssim is symmetric") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor<double>(1, 3, 14, 14, rng, 0.0, 1.0);
    auto y = random_tensor<double>(1, 3, 14, 14, rng, 0.0, 1.0);
    CHECK(ssim(x, y) == ssim(y, x));
  }
}

TEST_CASE("ssim agrees with the naive window oracle") {
  Rng rng(11);
  auto x = random_tensor<double>(1, 3, 16, 16, rng, 0.0, 1.0);
  auto y = random_tensor<double>(1, 3, 16, 16, rng, 0.0, 1.0);
  CHECK(ssim(x, y) == doctest::Approx(oracle_ssim(x, y)).epsilon(1e-12));
}

TEST_CASE("translating both images changes only the luminance term") {
  Rng rng(13);
  auto x = random_tensor<double>(1, 1, 16, 16, rng, 0.0, 0.4);
  auto y = random_tensor<double>(1, 1, 16, 16, rng, 0.0, 0.4);
  Tensor<double> xs = x, ys = y;
  xs.data += 0.3;
  ys.data += 0.3;
  auto before = oracle_windows(x, y, 11, 1.5);
  auto after = oracle_windows(xs, ys, 11, 1.5);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(after[i].contrast_structure == doctest::Approx(before[i].contrast_structure).epsilon(1e-9));
  CHECK(ssim(xs, ys) == doctest::Approx(oracle_ssim(xs, ys)).epsilon(1e-12));
}

TEST_CASE("small images shrink the window") {
  Rng rng(17);
  auto x = random_tensor<double>(1, 3, 8, 8, rng, 0.0, 1.0);
  CHECK(ssim(x, x) == 1.0);  // 7x7 window path
}

TEST_CASE("ssim shape mismatch throws") {
  auto a = Tensor<double>::zeros(1, 3, 8, 8);
  auto b = Tensor<double>::zeros(1, 3, 16, 16);
  CHECK_THROWS_AS(ssim(a, b), DimensionError);
}

TEST_CASE("psnr of a uniform 0.1 residual is exactly 20 dB") {
  auto x = Tensor<double>::full(1, 3, 8, 8, 0.5);
  auto y = Tensor<double>::full(1, 3, 8, 8, 0.6);
  CHECK(mse(x, y) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("identical images hit the psnr infinity sentinel") {
  Rng rng(19);
  auto x = random_tensor<double>(1, 3, 8, 8, rng, 0.0, 1.0);
  CHECK(std::isinf(psnr(x, x)));
}

TEST_CASE("doubling residuals lowers psnr by 20*log10(2)") {
  Rng rng(23);
  auto target = Tensor<double>::zeros(1, 3, 8, 8);
  auto r = random_tensor<double>(1, 3, 8, 8, rng, -0.2, 0.2);
  Tensor<double> r2 = r;
  r2.data *= 2.0;
  const double drop = psnr(target, r) - psnr(target, r2);
  CHECK(drop == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-6));
}

TEST_CASE("psnr is consistent with reported mse") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor<double>(1, 3, 8, 8, rng, 0.0, 1.0);
    auto y = random_tensor<double>(1, 3, 8, 8, rng, 0.0, 1.0);
    const double m = mse(x, y);
    CHECK(psnr(x, y) == doctest::Approx(10.0 * std::log10(1.0 / m)).epsilon(1e-9));
  }
}

TEST_CASE("evaluate produces a deterministic report with baseline fields") {
  MovingDigitsConfig dc;
  dc.count = 6;
  dc.digits_per_frame = 1;
  dc.canvas_h = 16;
  dc.canvas_w = 16;
  dc.seq_len = 8;
  dc.seed = 77;
  auto ds = generate_moving_digits(dc);

  ModelConfig mc;
  mc.levels = 2;
  mc.hidden_channels = 4;
  mc.bottleneck_channels = 8;
  MSPN<float> model(mc, 42);

  MetricProtocol proto;
  proto.context = 4;
  proto.horizon = 3;
  proto.batch = 4;
  auto rep = evaluate(model, ds, proto, 123);
  REQUIRE(int(rep.steps.size()) == 3);
  CHECK(rep.sequences == 6);
  CHECK(rep.config_fingerprint == 123);
  for (const auto& s : rep.steps) {
    CHECK(s.ssim >= -1.0);
    CHECK(s.ssim <= 1.0);
    CHECK(s.mse >= 0.0);
    CHECK(s.baseline_mse >= 0.0);
  }
  auto rep2 = evaluate(model, ds, proto, 123);
  for (std::size_t j = 0; j < rep.steps.size(); ++j) {
    CHECK(rep.steps[j].ssim == rep2.steps[j].ssim);
    CHECK(rep.steps[j].mse == rep2.steps[j].mse);
  }
  CHECK(rep.mean_ssim == rep2.mean_ssim);

  SUBCASE("horizon 1 collapses per-step list to the mean") {
    MetricProtocol p1 = proto;
    p1.horizon = 1;
    auto r1 = evaluate(model, ds, p1, 0);
    REQUIRE(int(r1.steps.size()) == 1);
    CHECK(r1.mean_ssim == r1.steps[0].ssim);
    CHECK(r1.mean_mse == r1.steps[0].mse);
  }

  SUBCASE("report file has one line per step plus a summary") {
    const auto path = std::filesystem::temp_directory_path() / "mspn_test_report.jsonl";
    rep.write(path);
    std::ifstream f(path);
    std::string line;
    int lines = 0;
    nlohmann::json last;
    while (std::getline(f, line)) {
      last = nlohmann::json::parse(line);
      ++lines;
    }
    CHECK(lines == 4);
    CHECK(last["kind"] == "summary");
    CHECK(last["mean_ssim"].get<double>() == doctest::Approx(rep.mean_ssim));
    std::filesystem::remove(path);
  }

  SUBCASE("external metric hook is recorded verbatim") {
    ExternalMetric ext = [](const Tensor<double>& a, const Tensor<double>& b) { return mse(a, b) * 2.0; };
    auto re = evaluate(model, ds, proto, 0, ext);
    REQUIRE(re.steps[0].external.has_value());
    CHECK(*re.steps[0].external == doctest::Approx(re.steps[0].mse * 2.0).epsilon(1e-12));
    REQUIRE(re.external_mean.has_value());
  }
}

TEST_CASE("evaluate rejects sequences shorter than context+horizon") {
  MovingDigitsConfig dc;
  dc.count = 2;
  dc.digits_per_frame = 1;
  dc.canvas_h = 16;
  dc.canvas_w = 16;
  dc.seq_len = 4;
  auto ds = generate_moving_digits(dc);
  ModelConfig mc;
  mc.levels = 1;
  mc.hidden_channels = 4;
  mc.bottleneck_channels = 4;
  MSPN<float> model(mc, 1);
  MetricProtocol proto;
  proto.context = 4;
  proto.horizon = 3;
  CHECK_THROWS_AS(evaluate(model, ds, proto), InputError);
}

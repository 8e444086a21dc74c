#include <gtest/gtest.h>

#include "exstyle/image.hpp"
#include "exstyle/layers.hpp"
#include "oracles.hpp"

using namespace exstyle;

namespace {

Conv3x3<double> make_conv(Rng& rng, int in_ch, int out_ch, int stride,
                          bool random_bias = true) {
  Conv3x3<double> conv("t", in_ch, out_ch, stride);
  conv.init(rng);
  if (random_bias) rng.fill_normal(conv.bias().value, 0.1);
  return conv;
}

TEST(Conv3x3, MatchesNaiveLoopOracle) {
  Rng rng(42);
  for (int stride : {1, 2}) {
    for (auto [h, w, ic, oc] : {std::tuple{5, 7, 3, 4}, {8, 8, 2, 5}, {4, 9, 1, 3}}) {
      auto conv = make_conv(rng, ic, oc, stride);
      auto in = oracles::random_map(rng, h, w, ic);
      auto out = conv.forward(in);
      auto ref = oracles::conv3x3(in, conv.weight().value, conv.bias().value.col(0),
                                  oc, stride);
      ASSERT_EQ(out.grid_h, ref.grid_h);
      ASSERT_EQ(out.grid_w, ref.grid_w);
      EXPECT_LT((out.data - ref.data).cwiseAbs().maxCoeff(), 1e-12)
          << "stride " << stride << " h " << h;
    }
  }
}

TEST(Conv3x3, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto conv = make_conv(rng, 2, 3, 1);
  auto in = oracles::random_map(rng, 4, 5, 2);
  // scalar loss: weighted sum of outputs with fixed random coefficients
  auto coeff = oracles::random_map(rng, 4, 5, 3);
  auto loss = [&] { return conv.forward(in).data.cwiseProduct(coeff.data).sum(); };

  conv.weight().zero_grad();
  conv.bias().zero_grad();
  FeatureMap<double> din;
  conv.backward(in, coeff, &din);

  int checked = 0;
  for (Index i = 0; i < conv.weight().value.size(); i += 3) {
    auto p = oracles::probe_gradient(loss, conv.weight().value.data() + i,
                                     conv.weight().grad.data()[i]);
    EXPECT_LT(p.err(), 1e-7);
    ++checked;
  }
  for (Index i = 0; i < conv.bias().value.size(); ++i) {
    auto p = oracles::probe_gradient(loss, conv.bias().value.data() + i,
                                     conv.bias().grad.data()[i]);
    EXPECT_LT(p.err(), 1e-7);
  }
  for (Index i = 0; i < in.data.size(); i += 4) {
    auto p = oracles::probe_gradient(loss, in.data.data() + i, din.data.data()[i]);
    EXPECT_LT(p.err(), 1e-7);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Conv3x3, BackwardDataAgreesWithBackward) {
  Rng rng(11);
  auto conv = make_conv(rng, 3, 2, 1);
  auto in = oracles::random_map(rng, 6, 6, 3);
  auto dout = oracles::random_map(rng, 6, 6, 2);
  FeatureMap<double> din;
  conv.backward(in, dout, &din, /*want_wgrad=*/false);
  auto din2 = conv.backward_data(dout, 6, 6);
  EXPECT_EQ((din.data - din2.data).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MaxPool2, ForwardAndBackward) {
  Rng rng(3);
  auto in = oracles::random_map(rng, 6, 8, 3);
  auto out = MaxPool2<double>::forward(in);
  ASSERT_EQ(out.grid_h, 3);
  ASSERT_EQ(out.grid_w, 4);
  for (Index ch = 0; ch < 3; ++ch)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 4; ++ox) {
        double m = -1e300;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            m = std::max(m, in.data(Index(2 * oy + dy) * 8 + 2 * ox + dx, ch));
        EXPECT_EQ(out.data(Index(oy) * 4 + ox, ch), m);
      }

  auto coeff = oracles::random_map(rng, 3, 4, 3);
  auto loss = [&] {
    return MaxPool2<double>::forward(in).data.cwiseProduct(coeff.data).sum();
  };
  auto din = MaxPool2<double>::backward(in, coeff);
  for (Index i = 0; i < in.data.size(); i += 3) {
    auto p = oracles::probe_gradient(loss, in.data.data() + i, din.data.data()[i], 1e-7);
    EXPECT_LT(p.err(), 1e-5);
  }
}

TEST(UpsampleNearest2, RoundTripGradient) {
  Rng rng(5);
  auto in = oracles::random_map(rng, 3, 4, 2);
  auto out = UpsampleNearest2<double>::forward(in);
  ASSERT_EQ(out.grid_h, 6);
  ASSERT_EQ(out.grid_w, 8);
  EXPECT_EQ(out.data(Index(1) * 8 + 1, 0), in.data(0, 0));
  EXPECT_EQ(out.data(Index(5) * 8 + 7, 1), in.data(Index(2) * 4 + 3, 1));

  auto coeff = oracles::random_map(rng, 6, 8, 2);
  auto loss = [&] {
    return UpsampleNearest2<double>::forward(in).data.cwiseProduct(coeff.data).sum();
  };
  auto din = UpsampleNearest2<double>::backward(3, 4, coeff);
  for (Index i = 0; i < in.data.size(); ++i) {
    auto p = oracles::probe_gradient(loss, in.data.data() + i, din.data.data()[i]);
    EXPECT_LT(p.err(), 1e-7);
  }
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  Dense<double> fc("t", 6, 4);
  fc.init(rng);
  rng.fill_normal(fc.bias().value, 0.2);
  Vec<double> x = oracles::random_vec(rng, 6);
  Vec<double> coeff = oracles::random_vec(rng, 4);
  auto loss = [&] { return fc.forward(x).dot(coeff); };
  Vec<double> dx = fc.backward(x, coeff);
  for (Index i = 0; i < 6; ++i) {
    auto p = oracles::probe_gradient(loss, x.data() + i, dx[i]);
    EXPECT_LT(p.err(), 1e-8);
  }
  for (Index i = 0; i < fc.weight().value.size(); ++i) {
    auto p = oracles::probe_gradient(loss, fc.weight().value.data() + i,
                                     fc.weight().grad.data()[i]);
    EXPECT_LT(p.err(), 1e-8);
  }
}

TEST(Resize, AspectPreservingArithmetic) {
  ImageTensor<float> img(600, 800);
  img.data.setConstant(0.5f);
  auto r = resize_smaller_dim(img, 512);
  EXPECT_EQ(r.height, 512);
  EXPECT_EQ(r.width, 683);  // 800 * 512 / 600 = 682.67, rounds half up

  ImageTensor<float> sq(512, 512);
  sq.data.setConstant(0.25f);
  auto r2 = resize_smaller_dim(sq, 512);
  EXPECT_EQ(r2.height, 512);
  EXPECT_EQ(r2.width, 512);
  EXPECT_EQ(r2.data(0, 0), 0.25f);  // untouched, no resampling

  ImageTensor<float> tall(800, 600);
  tall.data.setConstant(0.1f);
  auto r3 = resize_smaller_dim(tall, 512);
  EXPECT_EQ(r3.height, 683);
  EXPECT_EQ(r3.width, 512);
}

TEST(Resize, BilinearPreservesConstants) {
  ImageTensor<double> img(40, 30);
  img.data.setConstant(0.37);
  auto r = resize_bilinear(img, 17, 23);
  EXPECT_NEAR(r.data.minCoeff(), 0.37, 1e-12);
  EXPECT_NEAR(r.data.maxCoeff(), 0.37, 1e-12);
}

TEST(PadToStride, ReflectsAndCropsBack) {
  Rng rng(9);
  ImageTensor<double> img(37, 45);
  rng.fill_uniform(img.data, 0.0, 1.0);
  auto padded = pad_to_stride(img);
  EXPECT_EQ(padded.height, 40);
  EXPECT_EQ(padded.width, 48);
  auto back = crop(padded, 0, 0, 37, 45);
  EXPECT_EQ((back.data - img.data).cwiseAbs().maxCoeff(), 0.0);
  // reflected border: row 37 mirrors row 35
  for (int x = 0; x < 45; ++x)
    EXPECT_EQ(padded.data(Index(37) * 48 + x, 0), img.data(Index(35) * 45 + x, 0));
}

TEST(ReflectIndex, Borders) {
  EXPECT_EQ(reflect_index(-1, 5), 1);
  EXPECT_EQ(reflect_index(5, 5), 3);
  EXPECT_EQ(reflect_index(0, 1), 0);
  EXPECT_EQ(reflect_index(-1, 1), 0);
  EXPECT_EQ(reflect_index(1, 1), 0);
}

}  // namespace

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "permnet/deformable.hpp"
#include "permnet/error.hpp"
#include "permnet/perceptual.hpp"
#include "permnet/reference_ops.hpp"
#include "random_model.hpp"

namespace permnet {
namespace {

// (0,0) <-> (1,1) on a 3x3 grid.
PermKey corner_swap() { return PermKey(3, 3, {4, 1, 2, 3, 0, 5, 6, 7, 8}); }

std::vector<float> position(const OffsetVolume& v, std::size_t i, std::size_t j) {
  const std::size_t per = 2 * v.kernel() * v.kernel();
  const std::size_t first = (i * v.out_width() + j) * per;
  return {v.values().begin() + first, v.values().begin() + first + per};
}

TEST(BilinearSample, IntegralIsExactGather) {
  const Tensor plane({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(bilinear_sample(plane_view(plane), 1, 1, OutOfBounds::kZero), 4.0f);
}

TEST(BilinearSample, OutOfBoundsReadsPadValue) {
  const Tensor plane({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(bilinear_sample(plane_view(plane), -1, 0, OutOfBounds::kZero), 0.0f);
  EXPECT_EQ(bilinear_sample(plane_view(plane), 0, 2, OutOfBounds::kNegInf),
            -std::numeric_limits<float>::infinity());
}

TEST(BilinearSample, MidpointInterpolates) {
  const Tensor plane({2, 2}, {0, 2, 0, 0});
  EXPECT_EQ(bilinear_sample(plane_view(plane), 0, 0.5f, OutOfBounds::kZero), 1.0f);
}

TEST(BilinearSample, IntegralGatherKeepsNegativeZero) {
  const Tensor plane({1, 1}, {-0.0f});
  EXPECT_TRUE(std::signbit(bilinear_sample(plane_view(plane), 0, 0, OutOfBounds::kZero)));
}

TEST(BilinearSample, FractionalNearEdgeBlendsWithZero) {
  const Tensor plane({1, 1}, {4});
  EXPECT_EQ(bilinear_sample(plane_view(plane), 0.25f, 0, OutOfBounds::kZero), 3.0f);
}

TEST(BilinearSample, Errors) {
  const Tensor plane({2, 2}, {1, 2, 3, 4});
  EXPECT_THROW(bilinear_sample(plane_view(plane), NAN, 0, OutOfBounds::kZero), Error);
  EXPECT_THROW(bilinear_sample(plane_view(plane), 0, INFINITY, OutOfBounds::kZero), Error);
  EXPECT_THROW(bilinear_sample(plane_view(plane), 0.5f, 0, OutOfBounds::kNegInf), Error);
}

TEST(DeriveConvOffsets, IdentityKeysNoPaddingAreZero) {
  const OffsetVolume v =
      derive_conv_offsets(PermKey::identity(5, 6), PermKey::identity(3, 4), {3, 1, 0, 1, 1});
  for (float x : v.values()) EXPECT_EQ(x, 0.0f);
}

TEST(DeriveConvOffsets, CornerSwapExample) {
  const OffsetVolume v =
      derive_conv_offsets(corner_swap(), PermKey::identity(2, 2), {2, 1, 0, 1, 1});
  EXPECT_EQ(position(v, 0, 0), (std::vector<float>{1, 1, 0, 0, 0, 0, -1, -1}));
}

TEST(DeriveConvOffsets, ShapeFollowsOutputGridAndKernel) {
  testing::Rng rng(31);
  const OffsetVolume v = derive_conv_offsets(testing::random_key(rng, 32, 32),
                                             testing::random_key(rng, 32, 32), {3, 1, 1, 3, 8});
  EXPECT_EQ(v.shape(), (std::array<std::size_t, 3>{32, 32, 18}));
  EXPECT_EQ(v.values().size(), 32u * 32u * 18u);
}

TEST(DeriveConvOffsets, RejectsOutputKeyGridMismatch) {
  try {
    derive_conv_offsets(PermKey::identity(4, 4), PermKey::identity(4, 4), {2, 1, 0, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
  }
}

TEST(DerivePoolOffsets, IdentityKeysNoPaddingAreZero) {
  const OffsetVolume v =
      derive_pool_offsets(PermKey::identity(4, 4), PermKey::identity(2, 2), {2, 2, 0});
  for (float x : v.values()) EXPECT_EQ(x, 0.0f);
}

TEST(DerivePoolOffsets, ReversalExample) {
  const OffsetVolume v =
      derive_pool_offsets(PermKey(2, 2, {3, 2, 1, 0}), PermKey::identity(1, 1), {2, 2, 0});
  EXPECT_EQ(position(v, 0, 0), (std::vector<float>{1, 1, 1, -1, -1, 1, -1, -1}));
}

TEST(DerivePoolOffsets, ShapeForStrideTwoWindowTwo) {
  const OffsetVolume v =
      derive_pool_offsets(PermKey::identity(4, 4), PermKey::identity(2, 2), {2, 2, 0});
  EXPECT_EQ(v.shape(), (std::array<std::size_t, 3>{2, 2, 8}));
}

// Independent characterisation of the derivation: for every tap the sampled
// shuffled position must hold the plain target pixel (key_in[dest] == T), and
// out-of-grid targets must land exactly on the sentinel. Uses key_in directly
// rather than its inverse.
TEST(DeriveOffsetsProperty, SamplesLandOnPlainTargetsOrSentinel) {
  testing::Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = std::vector<std::size_t>{1, 2, 3, 5}[rng() % 4];
    const std::size_t stride = 1 + rng() % 2;
    const std::size_t pad = rng() % std::min<std::size_t>(n, 3);
    const WindowGeometry g{n, stride, pad};
    const std::size_t h = n + rng() % 10, w = n + rng() % 10;
    const PermKey in = testing::random_key(rng, h, w);
    const PermKey out = testing::random_key(rng, g.output_extent(h), g.output_extent(w));
    const bool pool = trial % 2 == 1 && n >= 2;
    const OffsetVolume v = pool ? derive_pool_offsets(in, out, {n, stride, pad})
                                : derive_conv_offsets(in, out, {n, stride, pad, 1, 1});
    ASSERT_TRUE(v.all_integral());
    for (std::size_t i = 0; i < v.out_height(); ++i) {
      for (std::size_t j = 0; j < v.out_width(); ++j) {
        const std::size_t u = out[i * v.out_width() + j] / v.out_width();
        const std::size_t vv = out[i * v.out_width() + j] % v.out_width();
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            const long ty = static_cast<long>(u * stride + a) - static_cast<long>(pad);
            const long tx = static_cast<long>(vv * stride + b) - static_cast<long>(pad);
            const long sy = static_cast<long>(i * stride + a) - static_cast<long>(pad) +
                            static_cast<long>(v.dy(i, j, a, b));
            const long sx = static_cast<long>(j * stride + b) - static_cast<long>(pad) +
                            static_cast<long>(v.dx(i, j, a, b));
            if (ty < 0 || tx < 0 || ty >= static_cast<long>(h) || tx >= static_cast<long>(w)) {
              ASSERT_EQ(sy, -1);
              ASSERT_EQ(sx, -1);
            } else {
              ASSERT_GE(sy, 0);
              ASSERT_GE(sx, 0);
              ASSERT_EQ(in[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)],
                        static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx));
            }
          }
        }
      }
    }
  }
}

TEST(DeformConv2d, ZeroOffsetsMatchPlainConv) {
  testing::Rng rng(33);
  const Tensor x = testing::random_tensor(rng, {2, 7, 6});
  const Tensor w = testing::random_tensor(rng, {3, 2, 3, 3});
  const Tensor b = testing::random_tensor(rng, {3});
  const ConvParams p{3, 2, 1, 2, 3};
  const OffsetVolume zero(4, 3, 3);
  EXPECT_TRUE(deform_conv2d(x, w, b, zero, p).bitwise_equal(conv2d_ref(x, w, b, 2, 1)));
}

TEST(DeformConv2d, CornerSwapReproducesPlainWindow) {
  const Tensor shuffled({1, 3, 3}, {5, 2, 3, 4, 1, 6, 7, 8, 9});
  const ConvParams p{2, 1, 0, 1, 1};
  const OffsetVolume v = derive_conv_offsets(corner_swap(), PermKey::identity(2, 2), p);
  const Tensor out = deform_conv2d(shuffled, Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}, 0.0f), v, p);
  EXPECT_EQ(out.at(0, 0, 0), 12.0f);
  const Tensor plain({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_TRUE(out.bitwise_equal(
      conv2d_ref(plain, Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}, 0.0f), 1, 0)));
}

TEST(DeformConv2d, FractionalOffsetsUseBilinearSampling) {
  const Tensor x({1, 1, 2}, {0, 2});
  OffsetVolume v(1, 2, 1);
  v.values()[1] = 0.5f;  // output (0,0) samples column 0.5
  const Tensor out = deform_conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}, 0.0f), v,
                                   {1, 1, 0, 1, 1});
  EXPECT_EQ(out, Tensor({1, 1, 2}, {1, 2}));
}

TEST(DeformConv2d, RejectsOffsetShapeMismatch) {
  const Tensor x({1, 4, 4});
  try {
    deform_conv2d(x, Tensor({1, 1, 3, 3}), Tensor({1}), OffsetVolume(4, 4, 3), {3, 1, 0, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
  }
  EXPECT_THROW(deform_conv2d(x, Tensor({1, 1, 3, 3}), Tensor({1}), OffsetVolume(2, 2, 3),
                             {3, 1, 0, 2, 1}),
               Error);
}

TEST(DeformConv2d, KeyedEquivalenceProperty) {
  testing::Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::vector<std::size_t>{1, 2, 3, 5}[rng() % 4];
    const std::size_t stride = 1 + rng() % 2;
    const std::size_t pad = rng() % std::min<std::size_t>(n, 3);
    const std::size_t h = std::max<std::size_t>(n, 1 + rng() % 16);
    const std::size_t w = std::max<std::size_t>(n, 1 + rng() % 16);
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3;
    const ConvParams p{n, stride, pad, cin, cout};
    const Tensor x = testing::random_tensor(rng, {cin, h, w});
    const Tensor wt = testing::random_tensor(rng, {cout, cin, n, n});
    const Tensor b = testing::random_tensor(rng, {cout});
    const PermKey kin = testing::random_key(rng, h, w);
    const PermKey kout =
        testing::random_key(rng, p.geometry().output_extent(h), p.geometry().output_extent(w));
    const Tensor keyed =
        deform_conv2d(shuffle(x, kin), wt, b, derive_conv_offsets(kin, kout, p), p);
    ASSERT_TRUE(keyed.bitwise_equal(gather_spatial(conv2d_ref(x, wt, b, stride, pad), kout)))
        << "trial " << trial;
  }
}

TEST(DeformMaxPool2d, ZeroOffsetsMatchPlainPool) {
  testing::Rng rng(35);
  const Tensor x = testing::random_tensor(rng, {2, 7, 7});
  EXPECT_TRUE(deform_maxpool2d(x, OffsetVolume(4, 4, 3), {3, 2, 1})
                  .bitwise_equal(maxpool2d_ref(x, 3, 2, 1)));
}

TEST(DeformMaxPool2d, ReversalExample) {
  const PoolParams p{2, 2, 0};
  const OffsetVolume v = derive_pool_offsets(PermKey(2, 2, {3, 2, 1, 0}), PermKey::identity(1, 1), p);
  EXPECT_EQ(deform_maxpool2d(Tensor({1, 2, 2}, {4, 3, 2, 1}), v, p), Tensor({1, 1, 1}, {4}));
}

TEST(DeformMaxPool2d, RejectsFractionalOffsets) {
  OffsetVolume v(1, 1, 2);
  v.values()[0] = 0.5f;
  EXPECT_THROW(deform_maxpool2d(Tensor({1, 2, 2}), v, {2, 2, 0}), Error);
}

TEST(DeformMaxPool2d, KeyedEquivalenceProperty) {
  testing::Rng rng(36);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::vector<std::size_t>{1, 2, 3, 5}[rng() % 4];
    const std::size_t stride = 1 + rng() % 2;
    const std::size_t pad = rng() % std::min<std::size_t>(n, 3);
    const std::size_t h = std::max<std::size_t>(n, 1 + rng() % 16);
    const std::size_t w = std::max<std::size_t>(n, 1 + rng() % 16);
    const PoolParams p{n, stride, pad};
    const Tensor x = testing::random_tensor(rng, {1 + rng() % 3, h, w});
    const PermKey kin = testing::random_key(rng, h, w);
    const PermKey kout =
        testing::random_key(rng, p.geometry().output_extent(h), p.geometry().output_extent(w));
    const Tensor keyed = deform_maxpool2d(shuffle(x, kin), derive_pool_offsets(kin, kout, p), p);
    ASSERT_TRUE(keyed.bitwise_equal(gather_spatial(maxpool2d_ref(x, n, stride, pad), kout)))
        << "trial " << trial;
  }
}

TEST(OffsetVolumeType, RejectsWrongValueCount) {
  EXPECT_THROW(OffsetVolume(2, 2, 2, std::vector<float>(5)), Error);
  EXPECT_FALSE(OffsetVolume(1, 1, 1, {0.5f, 0.0f}).all_integral());
}

}  // namespace
}  // namespace permnet

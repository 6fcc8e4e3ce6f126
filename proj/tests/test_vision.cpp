#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "dedtwin/vision.hpp"
#include "oracles.hpp"

using namespace dedtwin;
using namespace dedtwin::vision;

TEST(Binarize, StrictlyAboveCropMean) {
  GrayImage img(4, 1, 0);
  img.at(0, 0) = 10;
  img.at(1, 0) = 20;
  img.at(2, 0) = 30;
  img.at(3, 0) = 40;  // mean 25
  const auto m = binarize_mean(img, CropRect::full(img));
  EXPECT_FALSE(m.at(1, 0));
  EXPECT_TRUE(m.at(2, 0));
  EXPECT_TRUE(m.at(3, 0));
  EXPECT_THROW(binarize_mean(img, {2, 0, 3, 1}), InvalidArgument);
}

TEST(Binarize, CropIsRelativeToItsOrigin) {
  auto img = synthetic_ellipse(60, 40, 40.5, 20.5, 8, 5);
  const auto m = binarize_mean(img, {30, 10, 20, 20});
  EXPECT_EQ(m.width, 20);
  EXPECT_TRUE(m.at(10, 10));
  EXPECT_FALSE(m.at(0, 0));
}

TEST(ConnectedComponents, KeepsLargestFourConnected) {
  Mask m(6, 3);
  m.set(0, 0);
  m.set(1, 1);  // diagonal neighbor only: separate component
  for (int x = 3; x < 6; ++x) m.set(x, 2);
  const auto out = largest_connected_component(m);
  EXPECT_EQ(out.count(), 3u);
  EXPECT_FALSE(out.at(0, 0));
  EXPECT_THROW(largest_connected_component(Mask(3, 3)), EmptyPool);
}

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = oracle::random_mask(100 + s);
    const auto d2 = squared_distance_to_background(m);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int by = -1; by <= m.height; ++by)
          for (int bx = -1; bx <= m.width; ++bx) {
            const bool inside = bx >= 0 && by >= 0 && bx < m.width && by < m.height;
            if (inside && m.at(bx, by)) continue;
            best = std::min(best, double(bx - x) * (bx - x) + double(by - y) * (by - y));
          }
        EXPECT_DOUBLE_EQ(d2[static_cast<std::size_t>(y) * m.width + x], m.at(x, y) ? best : 0.0);
      }
  }
}

TEST(Circles, MatchBruteForceOracles) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const auto m = oracle::random_mask(s);
    if (m.empty()) continue;
    EXPECT_NEAR(largest_inscribed_circle(m), oracle::inscribed_diameter(m), 1e-9) << "seed " << s;
    EXPECT_NEAR(smallest_enclosing_circle(m), oracle::enclosing_diameter(m), 1e-6) << "seed " << s;
  }
}

TEST(Circles, EnclosingCircleCoversEveryPixel) {
  for (std::uint64_t s = 30; s < 40; ++s) {
    const auto m = oracle::random_mask(s);
    const auto c = minimum_enclosing_circle(m);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (m.at(x, y)) EXPECT_LE(std::hypot(x - c.cx, y - c.cy), c.r + 1e-9);
  }
}

TEST(Circles, InscribedNeverExceedsEnclosing) {
  for (std::uint64_t s = 50; s < 70; ++s) {
    const auto m = largest_connected_component(oracle::random_mask(s));
    EXPECT_LE(largest_inscribed_circle(m), smallest_enclosing_circle(m) + 2.0);
  }
}

TEST(Circles, SinglePixelAndEmptyMask) {
  Mask m(5, 5);
  EXPECT_THROW(largest_inscribed_circle(m), EmptyPool);
  EXPECT_THROW(smallest_enclosing_circle(m), EmptyPool);
  m.set(2, 2);
  EXPECT_DOUBLE_EQ(largest_inscribed_circle(m), 2.0);
  EXPECT_DOUBLE_EQ(smallest_enclosing_circle(m), 0.0);
}

TEST(Geometry, EllipseAxesWithinOnePixel) {
  const auto img = synthetic_ellipse(128, 96, 64.5, 48.5, 40, 20);
  const auto g = extract_geometry(img, CropRect::full(img), 1.0);
  ASSERT_TRUE(g.valid);
  EXPECT_NEAR(g.mpw, 40.0, 1.0);
  EXPECT_NEAR(g.mpl, 80.0, 1.0);
}

TEST(Geometry, ScaleIsLinear) {
  const auto img = synthetic_ellipse(100, 80, 50.5, 40.5, 30, 12);
  const auto a = extract_geometry(img, CropRect::full(img), 1.0);
  const auto b = extract_geometry(img, CropRect::full(img), 0.02);
  EXPECT_NEAR(b.mpw, 0.02 * a.mpw, 1e-12);
  EXPECT_NEAR(b.mpl, 0.02 * a.mpl, 1e-12);
  EXPECT_THROW(extract_geometry(img, CropRect::full(img), 0.0), InvalidArgument);
}

TEST(Geometry, UniformFrameIsInvalid) {
  const GrayImage img(20, 20, 77);
  const auto g = extract_geometry(img, CropRect::full(img), 1.0);
  EXPECT_FALSE(g.valid);
}

TEST(Pgm, RoundTripAndErrors) {
  const auto img = synthetic_ellipse(17, 9, 8.5, 4.5, 5, 3);
  const auto path = std::filesystem::temp_directory_path() / "dedtwin_test.pgm";
  write_pgm_file(path.string(), img);
  const auto back = read_pgm_file(path.string());
  EXPECT_EQ(back.width, 17);
  EXPECT_EQ(back.pixels, img.pixels);
  std::filesystem::remove(path);

  std::istringstream bad("P2\n2 2\n255\n0 0 0 0\n");
  EXPECT_THROW(read_pgm(bad), InvalidArgument);
  std::istringstream truncated(std::string("P5\n4 4\n255\n") + std::string(3, '\x10'));
  EXPECT_THROW(read_pgm(truncated), InvalidArgument);
}

// Writes elliptical melt-pool frames with known axes plus a truth CSV.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dedtwin/csv.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/vision.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic melt-pool frame generator"};
  std::string out = "frames";
  int count = 10, width = 160, height = 120;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Output directory");
  app.add_option("--count", count, "Number of frames")->check(CLI::Range(1, 100000));
  app.add_option("--width", width, "Frame width in pixels")->check(CLI::Range(16, 4096));
  app.add_option("--height", height, "Frame height in pixels")->check(CLI::Range(16, 4096));
  app.add_option("--seed", seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  fs::create_directories(out);
  const dedtwin::CounterRng rng(seed);
  std::ofstream truth(fs::path(out) / "truth.csv", std::ios::binary);
  truth << "file,cx,cy,semi_major_px,semi_minor_px\n";
  const double limit = 0.45 * std::min(width, height);
  for (int i = 0; i < count; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    // Half-integer centres keep the ellipse symmetric on the pixel grid.
    const double cx = std::floor(width / 2.0 + 5.0 * (rng.uniform(1, k) - 0.5)) + 0.5;
    const double cy = std::floor(height / 2.0 + 5.0 * (rng.uniform(2, k) - 0.5)) + 0.5;
    const double b = 8.0 + 0.3 * (limit - 8.0) * rng.uniform(3, k);
    const double a = std::min(limit, b * (1.2 + 0.8 * rng.uniform(4, k)));
    const auto img = dedtwin::vision::synthetic_ellipse(width, height, cx, cy, a, b);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.pgm", i);
    dedtwin::vision::write_pgm_file((fs::path(out) / name).string(), img);
    truth << name << ',' << dedtwin::csv::format_double(cx) << ',' << dedtwin::csv::format_double(cy) << ','
          << dedtwin::csv::format_double(a) << ',' << dedtwin::csv::format_double(b) << '\n';
  }
  std::cout << count << " frames written to " << out << "\n";
  return 0;
}

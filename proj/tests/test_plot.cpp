#include "testing.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

#include "condvc/errors.hpp"
#include "condvc/image_io.hpp"
#include "condvc/plot.hpp"

using namespace condvc;
namespace fs = std::filesystem;

namespace {

std::vector<RDCurve> two_curves() {
  return {{"anchor", {{0.05, 32, 0}, {0.1, 35, 0}, {0.2, 38, 0}, {0.4, 41, 0}}},
          {"test", {{0.04, 32.5, 0}, {0.08, 35.4, 0}, {0.17, 38.2, 0}, {0.33, 41.3, 0}}}};
}

size_t count(const std::string& haystack, const std::string& needle) {
  size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("svg has one legend entry per curve and the labels") {
  const auto svg = render_rd_svg(two_curves());
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count(svg, "class=\"legend-entry\"") == 2);
  CHECK(svg.find(">anchor<") != std::string::npos);
  CHECK(svg.find(">test<") != std::string::npos);
  CHECK(svg.find("PSNR") != std::string::npos);
}

TEST_CASE("svg escapes labels") {
  auto curves = two_curves();
  curves[0].label = "a<b&c";
  const auto svg = render_rd_svg(curves);
  CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
}

TEST_CASE("raster has the requested size and draws something") {
  PlotOptions options;
  options.width = 320;
  options.height = 240;
  const auto pixels = render_rd_raster(two_curves(), options);
  REQUIRE(pixels.size() == 320u * 240u * 3u);
  size_t non_white = 0;
  for (auto v : pixels) non_white += v != 255;
  CHECK(non_white > 1000);
}

TEST_CASE("plot files are deterministic and chosen by extension") {
  const auto dir = fs::temp_directory_path() / "condvc_test_plot";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* name : {"a.svg", "b.svg", "a.png", "b.png"}) plot_rd(two_curves(), dir / name);
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  const auto png = read_png(dir / "a.png");
  CHECK(png.size(1) == 520);
  CHECK(png.size(2) == 800);
  CHECK_THROWS_AS(plot_rd(two_curves(), dir / "a.pdf"), Error);
}

TEST_CASE("empty input is rejected") {
  CHECK_THROWS_AS(render_rd_svg({}), Error);
  std::vector<RDCurve> empty_curve{{"x", {}}};
  CHECK_THROWS_AS(render_rd_svg(empty_curve), Error);
}

// Desk-scale examples whose outcome depends on training dynamics or on the
// sign of the evidence's log-determinant term. Kept apart from the unit tests
// because some of them do not hold under the exact evidence or the default
// diversity weight; see the README.

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "nlm/data.hpp"
#include "nlm/objectives.hpp"
#include "nlm/trainer.hpp"

using namespace nlm;
namespace fs = std::filesystem;

TEST_CASE("LUNA fit loss is within 20% of the MAP fit loss on cubic-gap with defaults") {
  const GapDataset d = gen_cubic_gap(100, 100, 3.0, 0);
  TrainConfig c;
  const TrainedModel luna = train(c, d);
  c.objective = Objective::Map;
  const TrainedModel map = train(c, d);
  const double a = luna.history.back().fit_loss, b = map.history.back().fit_loss;
  INFO("LUNA fit " << a << ", MAP fit " << b);
  CHECK(std::abs(a - b) <= 0.2 * std::abs(b));
}

TEST_CASE("marginal_loss strictly decreases along c in {1, 10, 100} for a ReLU net") {
  const GapDataset data = gen_cubic_gap(100, 100, 3.0, 0);
  std::mt19937_64 rng(32);
  const FeatureMap net = FeatureMap::initialize({1, 50, 20}, Activation::ReLU, rng);
  double previous = std::numeric_limits<double>::infinity();
  for (double c : {1.0, 10.0, 100.0}) {
    const double loss =
        marginal_loss(scale_last_layer(net, c), data.train.x, data.train.y, 0.0, 9.0, 1.0).loss;
    INFO("c = " << c << ", loss " << loss);
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("blowup emits increasing marginal LL for the largest scalings") {
  const fs::path dir = fs::temp_directory_path() / "nlm_desk_blowup";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = std::string("\"") + NLM_CLI_PATH + "\" --output-dir \"" + dir.string() + "\" ";
  REQUIRE(std::system((cli + "gen-data cubic >/dev/null").c_str()) == 0);
  REQUIRE(std::system((cli + "blowup --data \"" + (dir / "data").string() + "\" >/dev/null").c_str()) == 0);
  std::ifstream in(dir / "blowup.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<double> ll;
  while (std::getline(in, line)) ll.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(ll.size() == 4);
  INFO("marginal LL at c = 100, 1000: " << ll[2] << ", " << ll[3]);
  CHECK(ll[3] > ll[2]);
}

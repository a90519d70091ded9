#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mote/router.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace mote;

namespace {

VecX to_vec(const std::vector<double>& v) {
  return Eigen::Map<const VecX>(v.data(), v.size());
}

GateDecision make_decision(std::vector<std::pair<int, Real>> entries,
                           int layer = 0) {
  GateDecision d;
  d.layer_id = layer;
  for (auto [e, w] : entries) d.entries.push_back({e, w});
  return d;
}

std::set<int> selected_ids(const GateDecision& d) {
  std::set<int> s;
  for (const auto& e : d.entries) s.insert(e.expert_id);
  return s;
}

}  // namespace

TEST_CASE("route selects top scores and renormalizes") {
  GateDecision d = route(to_vec({0.1, 0.9, 0.9, 0.0}), 2);
  CHECK(selected_ids(d) == std::set<int>{1, 2});
  CHECK(d.weight_sum() == doctest::Approx(1.0).epsilon(1e-9));
  // equal raw scores -> equal renormalized weights
  CHECK(d.entries[0].weight == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("route with uniform scores picks lowest ids at 1/k each") {
  const int e = 8, k = 3;
  GateDecision d = route(VecX::Constant(e, 0.42), k);
  CHECK(selected_ids(d) == std::set<int>{0, 1, 2});
  for (const auto& entry : d.entries)
    CHECK(entry.weight == doctest::Approx(1.0 / k).epsilon(1e-12));
}

TEST_CASE("route with k = E selects every expert with softmax weights") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist;
  std::vector<double> scores(6);
  for (auto& s : scores) s = dist(rng);
  GateDecision d = route(to_vec(scores), 6);
  CHECK(d.entries.size() == 6);
  auto ref = oracles::softmax_ref(scores);
  for (const auto& entry : d.entries)
    CHECK(entry.weight ==
          doctest::Approx(ref[entry.expert_id]).epsilon(1e-12));
}

TEST_CASE("route matches the full-sort oracle on random scores") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 100; ++trial) {
    const int e = 32;
    const int k = 1 + static_cast<int>(rng() % e);
    std::vector<double> scores(e);
    for (auto& s : scores) s = dist(rng);
    GateDecision d = route(to_vec(scores), k);
    std::set<int> got = selected_ids(d);
    auto want = oracles::topk_full_sort(scores, k);
    CHECK(got == std::set<int>(want.begin(), want.end()));
    CHECK(d.weight_sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("route rejects bad input") {
  CHECK_THROWS_AS(route(to_vec({1.0, 2.0}), 3), ConfigError);
  CHECK_THROWS_AS(route(to_vec({1.0, 2.0}), 0), ConfigError);
  std::vector<double> bad = {1.0, std::nan("")};
  CHECK_THROWS_AS(route(to_vec(bad), 1), NumericError);
}

TEST_CASE("suppression removes and renormalizes: (0.5,0.3,0.2) -> (0.6,0.4)") {
  GateDecision d = make_decision({{0, 0.5}, {1, 0.3}, {2, 0.2}});
  GateDecision out = apply_suppression(d, {0});
  REQUIRE(out.entries.size() == 2);
  CHECK(out.entries[0].expert_id == 1);
  CHECK(out.entries[0].weight == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out.entries[1].expert_id == 2);
  CHECK(out.entries[1].weight == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("suppressing nothing or an unselected expert is the identity") {
  GateDecision d = make_decision({{3, 0.7}, {5, 0.3}});
  GateDecision same = apply_suppression(d, {});
  CHECK(same.entries.size() == 2);
  CHECK(same.entries[0].weight == 0.7);
  GateDecision unsel = apply_suppression(d, {9});
  CHECK(unsel.entries.size() == 2);
  CHECK(unsel.entries[0].weight == 0.7);
  CHECK(unsel.entries[1].weight == 0.3);
}

TEST_CASE("suppressing all selected experts leaves an empty decision") {
  GateDecision d = make_decision({{1, 0.6}, {2, 0.4}});
  GateDecision out = apply_suppression(d, {1, 2});
  CHECK(out.entries.empty());
}

TEST_CASE("stimulation worked example: evict lowest, insert at max weight") {
  // entries (a,b,c) = (0:0.4, 1:0.35, 2:0.25), stimulate expert 3, k=3.
  // Evict 2; new raw weights (0.4, 0.35, 0.4) renormalize by 1.15.
  GateDecision d = make_decision({{0, 0.4}, {1, 0.35}, {2, 0.25}});
  GateDecision out = apply_stimulation(d, {3}, 3);
  REQUIRE(out.entries.size() == 3);
  CHECK(selected_ids(out) == std::set<int>{0, 1, 3});
  auto weight_of = [&](int id) {
    for (const auto& e : out.entries)
      if (e.expert_id == id) return e.weight;
    return -1.0;
  };
  CHECK(weight_of(0) == doctest::Approx(0.4 / 1.15).epsilon(1e-9));
  CHECK(weight_of(1) == doctest::Approx(0.35 / 1.15).epsilon(1e-9));
  CHECK(weight_of(3) == doctest::Approx(0.4 / 1.15).epsilon(1e-9));
  // the published three-decimal figures
  CHECK(weight_of(0) == doctest::Approx(0.348).epsilon(1e-3));
  CHECK(weight_of(1) == doctest::Approx(0.304).epsilon(1e-3));
  CHECK(weight_of(3) == doctest::Approx(0.348).epsilon(1e-3));
}

TEST_CASE("stimulating an already selected expert raises it to the max") {
  GateDecision d = make_decision({{0, 0.5}, {1, 0.3}, {2, 0.2}});
  GateDecision out = apply_stimulation(d, {2}, 3);
  REQUIRE(out.entries.size() == 3);
  // raw weights become (0.5, 0.3, 0.5), sum 1.3
  CHECK(out.entries[0].weight == doctest::Approx(0.5 / 1.3).epsilon(1e-9));
  CHECK(out.entries[1].weight == doctest::Approx(0.3 / 1.3).epsilon(1e-9));
  CHECK(out.entries[2].weight == doctest::Approx(0.5 / 1.3).epsilon(1e-9));
}

TEST_CASE("stimulating nothing is the identity") {
  GateDecision d = make_decision({{0, 0.6}, {1, 0.4}});
  GateDecision out = apply_stimulation(d, {}, 2);
  CHECK(out.entries.size() == 2);
  CHECK(out.entries[0].weight == 0.6);
}

TEST_CASE("stimulation rejects more experts than slots") {
  GateDecision d = make_decision({{0, 1.0}});
  CHECK_THROWS_AS(apply_stimulation(d, {1, 2}, 1), ConfigError);
}

TEST_CASE("override properties over randomized decisions") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  const int e_total = 16;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 4);
    std::vector<double> scores(e_total);
    for (auto& s : scores) s = unif(rng);
    GateDecision d = route(to_vec(scores), k);

    // pick random suppression / stimulation sets
    std::vector<int> sup, stim;
    for (int e = 0; e < e_total; ++e) {
      const auto r = rng() % 8;
      if (r == 0) sup.push_back(e);
      else if (r == 1 && static_cast<int>(stim.size()) < k) stim.push_back(e);
    }

    GateDecision s1 = apply_suppression(d, sup);
    // no suppressed expert present, weights normalized (or empty)
    for (int e : sup) CHECK(!s1.contains(e));
    if (!s1.entries.empty())
      CHECK(s1.weight_sum() == doctest::Approx(1.0).epsilon(1e-6));
    // idempotence
    GateDecision s2 = apply_suppression(s1, sup);
    REQUIRE(s2.entries.size() == s1.entries.size());
    for (std::size_t i = 0; i < s1.entries.size(); ++i) {
      CHECK(s2.entries[i].expert_id == s1.entries[i].expert_id);
      CHECK(s2.entries[i].weight ==
            doctest::Approx(s1.entries[i].weight).epsilon(1e-12));
    }

    GateDecision t1 = apply_stimulation(d, stim, k);
    for (int e : stim) CHECK(t1.contains(e));
    CHECK(t1.entries.size() == d.entries.size());
    CHECK(t1.weight_sum() == doctest::Approx(1.0).epsilon(1e-6));
    // stimulation idempotence
    GateDecision t2 = apply_stimulation(t1, stim, k);
    REQUIRE(t2.entries.size() == t1.entries.size());
    for (std::size_t i = 0; i < t1.entries.size(); ++i)
      CHECK(t2.entries[i].weight ==
            doctest::Approx(t1.entries[i].weight).epsilon(1e-9));

    // empty overrides are exact identities
    GateDecision id1 = apply_suppression(d, {});
    GateDecision id2 = apply_stimulation(d, {}, k);
    REQUIRE(id1.entries.size() == d.entries.size());
    REQUIRE(id2.entries.size() == d.entries.size());
    for (std::size_t i = 0; i < d.entries.size(); ++i) {
      CHECK(id1.entries[i].weight == d.entries[i].weight);
      CHECK(id2.entries[i].weight == d.entries[i].weight);
    }
  }
}

TEST_CASE("split_by_layer validates bounds and disjointness") {
  TuningConfig t;
  t.suppressed = {{0, 1}, {2, 3}};
  t.stimulated = {{1, 4}};
  LayerTuning lt = split_by_layer(t, 3, 8, 2);
  CHECK(lt.suppressed[0] == std::vector<int>{1});
  CHECK(lt.suppressed[2] == std::vector<int>{3});
  CHECK(lt.stimulated[1] == std::vector<int>{4});

  TuningConfig bad_bounds;
  bad_bounds.suppressed = {{3, 0}};
  CHECK_THROWS_AS(split_by_layer(bad_bounds, 3, 8, 2), ConfigError);

  TuningConfig overlap;
  overlap.suppressed = {{0, 1}};
  overlap.stimulated = {{0, 1}};
  CHECK_THROWS_AS(split_by_layer(overlap, 3, 8, 2), ConfigError);

  TuningConfig too_many;
  too_many.stimulated = {{0, 1}, {0, 2}, {0, 3}};
  CHECK_THROWS_AS(split_by_layer(too_many, 3, 8, 2), ConfigError);
}

TEST_CASE("expert tuple list parses the published coordinate list") {
  const std::string text =
      "# list of (layer id, routed expert id)\n"
      "[(48, 176), (52, 222), (39, 98), (25, 21), (46, 41), (53, 102), "
      "(36, 141), (14, 215), (20, 225), (25, 63)]\n";
  auto addrs = parse_expert_tuples(text);
  REQUIRE(addrs.size() == 10);
  CHECK(addrs[0].layer_id == 48);
  CHECK(addrs[0].expert_id == 176);
  CHECK(addrs[9].layer_id == 25);
  CHECK(addrs[9].expert_id == 63);

  // canonical serialization round-trips
  const std::string canon = format_expert_tuples(addrs);
  CHECK(canon ==
        "[(48, 176), (52, 222), (39, 98), (25, 21), (46, 41), (53, 102), "
        "(36, 141), (14, 215), (20, 225), (25, 63)]\n");
  auto again = parse_expert_tuples(canon);
  CHECK(format_expert_tuples(again) == canon);
}

TEST_CASE("expert tuple list accepts bare pairs and rejects junk") {
  auto bare = parse_expert_tuples("(1, 2)\n(3, 4)\n");
  REQUIRE(bare.size() == 2);
  CHECK(bare[1].layer_id == 3);

  CHECK(parse_expert_tuples("").empty());
  CHECK(parse_expert_tuples("[]").empty());
  CHECK_THROWS_AS(parse_expert_tuples("[(1, 2"), DataError);
  CHECK_THROWS_AS(parse_expert_tuples("[(1, -2)]"), DataError);
  CHECK_THROWS_AS(parse_expert_tuples("[(1, 2)] trailing"), DataError);
}

TEST_CASE("tuple file save/load round-trip") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "mote_tuples_test.txt";
  std::vector<ExpertAddr> addrs = {{0, 5}, {3, 7}};
  save_expert_tuples(addrs, path.string());
  auto loaded = load_expert_tuples(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0] == addrs[0]);
  CHECK(loaded[1] == addrs[1]);
  fs::remove(path);
}

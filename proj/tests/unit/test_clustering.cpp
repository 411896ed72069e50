#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "builders.hpp"
#include "cagemap/clustering.hpp"
#include "oracles.hpp"

using namespace cagemap;
using cagemap::test::det;
using cagemap::test::det_at;

namespace {

using IdSets = std::set<std::set<std::string>>;

IdSets id_sets(const std::vector<CageCluster>& clusters) {
  IdSets out;
  for (const auto& c : clusters) {
    std::set<std::string> ids;
    for (const auto& m : c.members) ids.insert(m.id);
    out.insert(ids);
  }
  return out;
}

IdSets brute_clusters(const std::vector<Detection>& ds, double dist, std::size_t min_size) {
  IdSets out;
  for (Period p : kAllPeriods) {
    std::vector<const Detection*> group;
    std::vector<Point> pts;
    for (const auto& d : ds) {
      if (d.period != p) continue;
      group.push_back(&d);
      pts.push_back(d.box.centroid());
    }
    for (const auto& comp : cagemap::test::brute_components(pts, dist)) {
      if (comp.size() < min_size) continue;
      std::set<std::string> ids;
      for (std::size_t i : comp) ids.insert(group[i]->id);
      out.insert(ids);
    }
  }
  return out;
}

std::vector<Detection> random_detections(std::mt19937_64& gen, std::size_t n, double extent) {
  std::uniform_real_distribution<double> coord(0.0, extent);
  const int years[] = {2003, 2011, 2020};
  std::vector<Detection> ds;
  for (std::size_t i = 0; i < n; ++i) {
    ds.push_back(det_at("d" + std::to_string(i), coord(gen), coord(gen), 8.0, "img", years[gen() % 3]));
  }
  return ds;
}

}  // namespace

TEST(Clustering, ChainOfFiveAtFortyMetres) {
  std::vector<Detection> ds;
  for (int i = 0; i < 5; ++i) ds.push_back(det_at("c" + std::to_string(i), 40.0 * i, 0.0));
  const auto clusters = cluster_detections(ds, 50.0, 5);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].members.size(), 5u);
}

TEST(Clustering, SizeFilterDropsSmallComponents) {
  std::vector<Detection> ds;
  for (int i = 0; i < 4; ++i) ds.push_back(det_at("c" + std::to_string(i), 10.0 * i, 5.0 * i));
  EXPECT_TRUE(cluster_detections(ds, 50.0, 5).empty());
  EXPECT_EQ(cluster_detections(ds, 50.0, 4).size(), 1u);
}

TEST(Clustering, TieAtThresholdConnects) {
  const std::vector<Detection> ds = {det_at("a", 0, 0), det_at("b", 50, 0)};
  EXPECT_EQ(cluster_detections(ds, 50.0, 2).size(), 1u);
  EXPECT_TRUE(cluster_detections(ds, 49.999, 2).empty());
}

TEST(Clustering, PeriodsNeverMix) {
  const std::vector<Detection> ds = {det_at("a", 0, 0, 10, "i", 2020), det_at("b", 10, 0, 10, "i", 2003)};
  const auto clusters = cluster_detections(ds, 50.0, 1);
  ASSERT_EQ(clusters.size(), 2u);
  EXPECT_EQ(clusters[0].period, Period::p2000_2004);
  EXPECT_EQ(clusters[1].period, Period::p2019_2021);
}

TEST(Clustering, EmptyInputGivesNoClusters) { EXPECT_TRUE(cluster_detections({}, 50.0, 1).empty()); }

TEST(Clustering, ClusterFieldsAreConsistent) {
  const std::vector<Detection> ds = {det("a", 0, 0, 2, 2), det("b", 4, 4, 6, 8)};
  const auto clusters = cluster_detections(ds, 10.0, 1);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].union_box, (GeoRect{0, 0, 6, 8}));
  EXPECT_DOUBLE_EQ(clusters[0].centroid.x, 3.0);
  EXPECT_DOUBLE_EQ(clusters[0].centroid.y, 3.5);
}

TEST(Clustering, MatchesBruteForceUnionFind) {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ds = random_detections(gen, 200, 1500.0);
    const std::size_t min_size = 1 + gen() % 6;
    const double dist = trial % 10 == 0 ? 50.0 : 10.0 + static_cast<double>(gen() % 140);
    ASSERT_EQ(id_sets(cluster_detections(ds, dist, min_size)), brute_clusters(ds, dist, min_size)) << trial;
  }
}

TEST(Clustering, RadiusComponentsMatchBruteForce) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> coord(-300.0, 300.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point> pts(1 + gen() % 150);
    for (auto& p : pts) p = {coord(gen), coord(gen)};
    const double dist = static_cast<double>(gen() % 60);
    auto want = cagemap::test::brute_components(pts, dist);
    std::sort(want.begin(), want.end());
    ASSERT_EQ(radius_components(pts, dist), want);
  }
}

TEST(Clustering, UnionBoxExamples) {
  const std::vector<Detection> two = {det("a", 0, 0, 1, 1), det("b", 2, 2, 3, 3)};
  EXPECT_EQ(union_bbox(two), (GeoRect{0, 0, 3, 3}));
  const std::vector<Detection> one = {det("a", 1, 2, 3, 4)};
  EXPECT_EQ(union_bbox(one), (GeoRect{1, 2, 3, 4}));
}

TEST(Clustering, UnionBoxContainsExactlyTheMemberExtent) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> ms;
    for (int i = 0; i < 1 + static_cast<int>(gen() % 6); ++i) {
      const double x = coord(gen), y = coord(gen);
      ms.push_back(det("m" + std::to_string(i), x, y, x + coord(gen) / 10, y + coord(gen) / 10));
    }
    const GeoRect u = union_bbox(ms);
    // Every member corner is inside; each side of u is attained by some member.
    bool lo_x = false, lo_y = false, hi_x = false, hi_y = false;
    for (const auto& m : ms) {
      ASSERT_TRUE(u.contains({m.box.min_x, m.box.min_y}) && u.contains({m.box.max_x, m.box.max_y}));
      lo_x |= m.box.min_x == u.min_x;
      lo_y |= m.box.min_y == u.min_y;
      hi_x |= m.box.max_x == u.max_x;
      hi_y |= m.box.max_y == u.max_y;
    }
    ASSERT_TRUE(lo_x && lo_y && hi_x && hi_y);
  }
}

TEST(Clustering, PermutationInvariant) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto ds = random_detections(gen, 120, 600.0);
    const auto before = cluster_detections(ds, 40.0, 3);
    std::shuffle(ds.begin(), ds.end(), gen);
    const auto after = cluster_detections(ds, 40.0, 3);
    ASSERT_EQ(id_sets(before), id_sets(after));
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      EXPECT_EQ(before[i].union_box, after[i].union_box);  // canonical output order
    }
  }
}

TEST(Clustering, MonotoneInSizeAndDistance) {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ds = random_detections(gen, 150, 800.0);
    // Larger min size: every surviving cluster already existed.
    const auto small = id_sets(cluster_detections(ds, 50.0, 2));
    for (const auto& c : id_sets(cluster_detections(ds, 50.0, 4))) EXPECT_TRUE(small.contains(c));
    // Larger distance: each component is contained in one component.
    const auto fine = id_sets(cluster_detections(ds, 30.0, 1));
    const auto coarse = id_sets(cluster_detections(ds, 60.0, 1));
    for (const auto& f : fine) {
      EXPECT_EQ(std::count_if(coarse.begin(), coarse.end(),
                              [&](const auto& c) { return std::includes(c.begin(), c.end(), f.begin(), f.end()); }),
                1);
    }
  }
}

TEST(Clustering, ScoreThresholdKeepsAnnotations) {
  std::vector<Detection> ds = {det("a", 0, 0, 1, 1, "i", 2020, 0.5), det("b", 0, 0, 1, 1, "i", 2020, 0.8),
                               det("c", 0, 0, 1, 1, "i", 2020, std::nullopt)};
  const auto kept = apply_score_threshold(ds, 0.8);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].id, "b");
  EXPECT_EQ(kept[1].id, "c");
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sftmn/errors.hpp"
#include "sftmn/featureio.hpp"
#include "sftmn/metrics.hpp"

namespace sftmn {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sftmn_featureio_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  void write(const fs::path& rel, const std::string& text) {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel, std::ios::binary) << text;
  }
  fs::path dir_;
};

SyntheticSpec small_spec(std::uint64_t seed = 7) {
  SyntheticSpec s;
  s.num_videos = 3;
  s.num_classes = 4;
  s.feature_dim = 6;
  s.min_length = 30;
  s.max_length = 60;
  s.mean_segment = 10;
  s.noise = 0.3;
  s.seed = seed;
  return s;
}

TEST(ClassMapping, ParsesIndexNameLines) {
  EXPECT_EQ(parse_mapping_text("0 background\n1 take").size(), 2u);
  const ClassMapping m = parse_mapping_text("1 b\n0 a\n2 action start\n");
  EXPECT_EQ(m.name(0), "a");
  EXPECT_EQ(m.name(2), "action start");
  EXPECT_EQ(m.index_of("b"), 1);
  EXPECT_FALSE(m.index_of("zzz").has_value());
  std::string seven;
  for (int i = 0; i < 7; ++i) seven += std::to_string(i) + " P" + std::to_string(i + 1) + "\n";
  EXPECT_EQ(parse_mapping_text(seven).size(), 7u);
}

TEST(ClassMapping, RejectsGapsAndDuplicates) {
  EXPECT_THROW(parse_mapping_text("0 a\n2 b"), ValidationError);
  EXPECT_THROW(parse_mapping_text("0 a\n0 b"), ValidationError);
  EXPECT_THROW(parse_mapping_text("0 a\n1 a"), ValidationError);
  EXPECT_THROW(parse_mapping_text("x a"), ParseError);
}

TEST_F(TempDir, NpyRoundTripBothLayouts) {
  const auto data = generate_synthetic(small_spec());
  const FeatureSequence& f = data.videos[0].features;
  for (auto layout : {FeatureLayout::DxT, FeatureLayout::TxD}) {
    write_features(dir_ / "x.npy", f, FeatureFormat::Npy, layout);
    EXPECT_EQ(read_features(dir_ / "x.npy", layout).values, f.values);
  }
  write_features(dir_ / "x.sftmn", f, FeatureFormat::Raw, FeatureLayout::TxD);
  EXPECT_EQ(read_features(dir_ / "x.sftmn", FeatureLayout::TxD).values, f.values);
}

TEST_F(TempDir, ReadsFloat64FortranOrderNpy) {
  // 2x3 float64 Fortran-order array [[1,2,3],[4,5,6]].
  std::string header = "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 3), }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::string bytes = "\x93NUMPY";
  bytes += '\x01';
  bytes += '\x00';
  bytes += static_cast<char>(header.size() & 0xff);
  bytes += static_cast<char>(header.size() >> 8);
  bytes += header;
  for (double v : {1.0, 4.0, 2.0, 5.0, 3.0, 6.0}) bytes.append(reinterpret_cast<const char*>(&v), 8);
  write("f.npy", bytes);
  EXPECT_EQ(read_features(dir_ / "f.npy", FeatureLayout::DxT).values, Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(read_features(dir_ / "f.npy", FeatureLayout::TxD).values,
            Tensor::from_rows({{1, 4}, {2, 5}, {3, 6}}));
}

TEST_F(TempDir, RejectsMalformedFeatureFiles) {
  write("bad.npy", "not an npy file");
  EXPECT_THROW(read_features(dir_ / "bad.npy", FeatureLayout::DxT), ParseError);
  write("bad.sftmn", "SFTMN1 2 3\n\x01\x02");
  EXPECT_THROW(read_features(dir_ / "bad.sftmn", FeatureLayout::DxT), ParseError);
  EXPECT_THROW(read_features(dir_ / "missing.npy", FeatureLayout::DxT), LoadError);
}

TEST_F(TempDir, DatasetRoundTripIsBitwise) {
  const auto data = generate_synthetic(small_spec());
  write_dataset(dir_, data.videos, data.mapping, "all", FeatureFormat::Npy, FeatureLayout::TxD);
  const auto loaded = load_dataset(dir_, dir_ / "splits" / "all.bundle", parse_mapping(dir_ / "mapping.txt"),
                                   FeatureLayout::TxD);
  ASSERT_EQ(loaded.size(), data.videos.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].id, data.videos[i].id);
    EXPECT_EQ(loaded[i].features.values, data.videos[i].features.values);
    EXPECT_EQ(loaded[i].labels.labels, data.videos[i].labels.labels);
  }
}

TEST_F(TempDir, DatasetOrderFollowsSplitFile) {
  const auto data = generate_synthetic(small_spec());
  write_dataset(dir_, data.videos, data.mapping, "all", FeatureFormat::Raw, FeatureLayout::DxT);
  write("splits/rev.bundle", "video003.txt\nvideo001\n");
  const auto loaded = load_dataset(dir_, dir_ / "splits" / "rev.bundle", data.mapping, FeatureLayout::DxT);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].id, "video003");
  EXPECT_EQ(loaded[1].id, "video001");
}

TEST_F(TempDir, DatasetErrorsNameTheVideo) {
  const auto data = generate_synthetic(small_spec());
  write_dataset(dir_, data.videos, data.mapping, "all", FeatureFormat::Npy, FeatureLayout::DxT);
  const fs::path split = dir_ / "splits" / "all.bundle";

  // One label line short.
  std::ifstream in(dir_ / "groundTruth" / "video002.txt");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  text.erase(text.rfind('\n', text.size() - 2) + 1);
  write("groundTruth/video002.txt", text);
  try {
    load_dataset(dir_, split, data.mapping, FeatureLayout::DxT);
    FAIL() << "expected a length mismatch";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("video002"), std::string::npos);
  }

  write("groundTruth/video002.txt", "class_0\nnot_a_class\n");
  EXPECT_THROW(load_dataset(dir_, split, data.mapping, FeatureLayout::DxT), ValidationError);

  fs::remove(dir_ / "features" / "video003.npy");
  write("splits/three.bundle", "video003\n");
  try {
    load_dataset(dir_, dir_ / "splits" / "three.bundle", data.mapping, FeatureLayout::DxT);
    FAIL() << "expected a missing-file error";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("video003"), std::string::npos);
  }
}

TEST(Synthetic, SameSeedSameDataset) {
  const auto a = generate_synthetic(small_spec(7)), b = generate_synthetic(small_spec(7));
  ASSERT_EQ(a.videos.size(), b.videos.size());
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    EXPECT_EQ(a.videos[i].features.values, b.videos[i].features.values);
    EXPECT_EQ(a.videos[i].labels.labels, b.videos[i].labels.labels);
  }
  EXPECT_NE(generate_synthetic(small_spec(8)).videos[0].features.values, a.videos[0].features.values);
}

TEST(Synthetic, ReferenceSpecStructure) {
  SyntheticSpec s;
  s.num_videos = 10;
  s.seed = 3;
  const auto data = generate_synthetic(s);
  ASSERT_EQ(data.videos.size(), 10u);
  for (const auto& v : data.videos) {
    EXPECT_GE(v.labels.size(), 200u);
    EXPECT_LE(v.labels.size(), 400u);
    EXPECT_EQ(v.features.frames(), v.labels.size());
    for (int l : v.labels.labels) EXPECT_LT(l, 7);
    // Piecewise constant: far fewer runs than frames.
    EXPECT_LT(labels_to_segments(v.labels.labels).size(), v.labels.size() / 10);
  }
}

TEST(Synthetic, NoiselessDataIsNearestPrototypeSeparable) {
  SyntheticSpec s = small_spec();
  s.noise = 0;
  const auto data = generate_synthetic(s);
  // Recover one prototype per class, then classify every frame.
  std::vector<std::vector<double>> proto(4);
  for (const auto& v : data.videos)
    for (std::size_t t = 0; t < v.labels.size(); ++t) {
      auto& p = proto[v.labels.labels[t]];
      if (p.empty())
        for (std::size_t d = 0; d < v.features.dim(); ++d) p.push_back(v.features.values(d, t));
    }
  for (const auto& v : data.videos)
    for (std::size_t t = 0; t < v.labels.size(); ++t) {
      int best = -1;
      double best_d = 1e300;
      for (int c = 0; c < 4; ++c) {
        if (proto[c].empty()) continue;
        double d2 = 0;
        for (std::size_t d = 0; d < v.features.dim(); ++d) d2 += std::pow(v.features.values(d, t) - proto[c][d], 2);
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      EXPECT_EQ(best, v.labels.labels[t]);
    }
}

TEST(Synthetic, RejectsInconsistentSpec) {
  SyntheticSpec s = small_spec();
  s.mean_segment = 1000;
  EXPECT_THROW(generate_synthetic(s), ValidationError);
  s = small_spec();
  s.min_length = 80;
  EXPECT_THROW(generate_synthetic(s), ValidationError);
}

}  // namespace
}  // namespace sftmn

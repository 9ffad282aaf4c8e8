#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "stdb/checkpoint.hpp"
#include "stdb/config.hpp"
#include "stdb/dataset.hpp"
#include "stdb/heatmap.hpp"
#include "stdb/image.hpp"
#include "stdb/schedule.hpp"
#include "support/test_util.hpp"

using namespace stdb;
using testutil::max_abs_diff;
using testutil::TempDir;

// --------------------------------------------------------------------------
// lr schedule
// --------------------------------------------------------------------------

TEST_CASE("lr schedule anchor values") {
  CHECK(lr_schedule(0, 1e-4) == 1e-4);
  CHECK(lr_schedule(5, 1e-4) == 2e-4);
  CHECK(lr_schedule(350, 1e-4) == 1e-5);
  CHECK(lr_schedule(300, 1e-4) == 1e-5);
  CHECK(lr_schedule(200, 1e-4) == 1e-4);
  CHECK(lr_schedule(49, 1e-4) == 10e-4);
  CHECK(lr_schedule(50, 1e-4) == lr_schedule(49, 1e-4));  // warm value held
  CHECK(lr_schedule(199, 1e-4) == lr_schedule(49, 1e-4));
}

TEST_CASE("lr schedule is a staircase: up before 50, down after") {
  for (std::size_t ep = 1; ep < 50; ++ep) {
    CHECK(lr_schedule(ep, 1e-4) >= lr_schedule(ep - 1, 1e-4));
  }
  for (std::size_t ep = 51; ep < 400; ++ep) {
    CHECK(lr_schedule(ep, 1e-4) <= lr_schedule(ep - 1, 1e-4));
    CHECK(lr_schedule(ep, 1e-4) > 0.0);
  }
}

TEST_CASE("lr schedule rescales with the base") {
  CHECK(lr_schedule(0, 2e-3) == 2e-3);
  CHECK(lr_schedule(350, 2e-3) == 2e-4);
}

// --------------------------------------------------------------------------
// config
// --------------------------------------------------------------------------

TEST_CASE("config parses values and keeps defaults for missing keys") {
  Config c = parse_config("alpha = 0.8\n");
  CHECK(c.alpha == 0.8);
  CHECK(c.rho == 0.25);  // default

  Config empty = parse_config("");
  CHECK(empty.rho == 0.25);
  CHECK(empty.alpha == 0.8);
  CHECK(empty.p == 8);
  CHECK(empty.n_per == 4);
}

TEST_CASE("config rejects out-of-range values naming the line") {
  try {
    parse_config("# comment\nrho = 1.5\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("rho") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("alpha = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("p = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("spatial_kernel = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("drop_mode = sometimes\n"), ConfigError);
}

TEST_CASE("config rejects unknown keys, duplicates and malformed lines") {
  CHECK_THROWS_AS(parse_config("alhpa = 0.8\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rho = 0.5\nrho = 0.25\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rho 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rho = \n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rho = 0.5.3\n"), ConfigError);
}

TEST_CASE("config ignores comments and blank lines") {
  Config c = parse_config("\n# full line comment\n  alpha = 0.9  # trailing\n\n");
  CHECK(c.alpha == 0.9);
}

TEST_CASE("config text round trip preserves every field") {
  Config c;
  c.alpha = 0.65;
  c.rho = 0.4;
  c.reduction = 8;
  c.p = 4;
  c.n_per = 3;
  c.image_h = 32;
  c.image_w = 16;
  c.dim_hidden = 48;
  c.dim_embed = 24;
  c.epochs = 17;
  c.iters_per_epoch = 9;
  c.seed = 123456789012345ULL;
  c.drop_mode = DropMode::Quantile;
  c.drop_quantile = 0.3;
  c.base_lr = 3.25e-4;
  c.spatial_kernel = 5;
  c.checkpoint_interval = 4;
  c.drop_pool = DropPool::Gap;
  c.attn_map_pool = AttnMapPool::Max;
  c.branches = BranchSet::GlobalAttention;

  Config back = parse_config(config_to_text(c));
  CHECK(back.alpha == c.alpha);
  CHECK(back.rho == c.rho);
  CHECK(back.reduction == c.reduction);
  CHECK(back.p == c.p);
  CHECK(back.n_per == c.n_per);
  CHECK(back.image_h == c.image_h);
  CHECK(back.image_w == c.image_w);
  CHECK(back.dim_hidden == c.dim_hidden);
  CHECK(back.dim_embed == c.dim_embed);
  CHECK(back.epochs == c.epochs);
  CHECK(back.iters_per_epoch == c.iters_per_epoch);
  CHECK(back.seed == c.seed);
  CHECK(back.drop_mode == c.drop_mode);
  CHECK(back.drop_quantile == c.drop_quantile);
  CHECK(back.base_lr == c.base_lr);
  CHECK(back.spatial_kernel == c.spatial_kernel);
  CHECK(back.checkpoint_interval == c.checkpoint_interval);
  CHECK(back.drop_pool == c.drop_pool);
  CHECK(back.attn_map_pool == c.attn_map_pool);
  CHECK(back.branches == c.branches);
}

TEST_CASE("load_config reads files and reports missing ones") {
  TempDir dir("config");
  {
    std::ofstream out(dir.file("c.cfg"));
    out << "alpha = 0.7\nseed = 9\n";
  }
  Config c = load_config(dir.file("c.cfg"));
  CHECK(c.alpha == 0.7);
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(load_config(dir.file("missing.cfg")), ConfigError);
}

// --------------------------------------------------------------------------
// ppm
// --------------------------------------------------------------------------

TEST_CASE("ppm encode/decode round trip is exact after quantization") {
  Rng rng(211);
  Image image;
  image.h = 5;
  image.w = 7;
  image.rgb.resize(3 * 5 * 7);
  for (double& v : image.rgb) v = rng.uniform();
  const std::vector<unsigned char> bytes = encode_ppm(image);
  Image back = decode_ppm(bytes, "mem");
  CHECK(back.h == 5);
  CHECK(back.w == 7);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) {
    CHECK(std::abs(back.rgb[i] - image.rgb[i]) <= 0.5 / 255.0 + 1e-12);
  }
  // a second round trip is bit exact
  CHECK(encode_ppm(back) == bytes);
}

TEST_CASE("ppm reader accepts the minimal header form") {
  std::vector<unsigned char> bytes{'P', '6', '\n', '2', ' ', '2', '\n',
                                   '2', '5', '5', '\n'};
  for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<unsigned char>(10 * i));
  Image image = decode_ppm(bytes, "mem");
  CHECK(image.h == 2);
  CHECK(image.w == 2);
  CHECK(image.at(0, 0, 0) == 0.0);
  CHECK(image.at(2, 1, 1) == doctest::Approx(110.0 / 255.0));
}

TEST_CASE("ppm reader rejects bad files") {
  std::vector<unsigned char> p5{'P', '5', '\n', '1', ' ', '1', '\n', '2', '5',
                                '5', '\n', 0, 0, 0};
  CHECK_THROWS_AS(decode_ppm(p5, "p5file"), IngestError);

  std::vector<unsigned char> short_raster{'P', '6', '\n', '2', ' ', '2', '\n',
                                          '2', '5', '5', '\n', 0, 0, 0};
  CHECK_THROWS_AS(decode_ppm(short_raster, "short"), IngestError);

  std::vector<unsigned char> deep{'P', '6', '\n', '1', ' ', '1', '\n', '6',
                                  '5', '5', '3', '5', '\n', 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(decode_ppm(deep, "deep"), IngestError);
}

// --------------------------------------------------------------------------
// synthetic dataset
// --------------------------------------------------------------------------

TEST_CASE("synthetic dataset has n_ids * per_id items") {
  DatasetIndex index = generate_synthetic_dataset(20, 8, 2, 7);
  CHECK(index.size() == 160);
  std::set<int> ids;
  for (const DatasetItem& item : index.items) {
    ids.insert(item.identity);
    CHECK(item.image.h == 64);
    CHECK(item.image.w == 32);
    CHECK(item.camera == item.instance % 2);
  }
  CHECK(ids.size() == 20);
}

TEST_CASE("synthetic dataset is byte identical under the same seed") {
  DatasetIndex a = generate_synthetic_dataset(5, 4, 2, 99);
  DatasetIndex b = generate_synthetic_dataset(5, 4, 2, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(encode_ppm(a.items[i].image) == encode_ppm(b.items[i].image));
  }
  DatasetIndex c = generate_synthetic_dataset(5, 4, 2, 100);
  CHECK(encode_ppm(a.items[0].image) != encode_ppm(c.items[0].image));
}

TEST_CASE("different identities render at positive pixel distance") {
  DatasetIndex index = generate_synthetic_dataset(6, 2, 2, 3);
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (std::size_t j = i + 1; j < index.size(); ++j) {
      if (index.items[i].identity == index.items[j].identity) continue;
      double sq = 0.0;
      for (std::size_t k = 0; k < index.items[i].image.rgb.size(); ++k) {
        const double d = index.items[i].image.rgb[k] - index.items[j].image.rgb[k];
        sq += d * d;
      }
      CHECK(sq > 0.0);
    }
  }
}

TEST_CASE("split assigns half to train and alternates query/gallery") {
  DatasetIndex full = generate_synthetic_dataset(10, 8, 2, 13);
  DatasetIndex train = split_of(full, Split::Train);
  DatasetIndex query = split_of(full, Split::Query);
  DatasetIndex gallery = split_of(full, Split::Gallery);
  CHECK(train.size() == 40);
  CHECK(query.size() == 20);
  CHECK(gallery.size() == 20);
  CHECK(train.size() + query.size() + gallery.size() == full.size());

  std::set<int> query_ids, gallery_ids;
  for (const DatasetItem& item : query.items) query_ids.insert(item.identity);
  for (const DatasetItem& item : gallery.items) gallery_ids.insert(item.identity);
  for (int id : query_ids) CHECK(gallery_ids.count(id) == 1);

  // query and gallery instances never share a camera for n_cams == 2
  for (const DatasetItem& q : query.items) {
    for (const DatasetItem& g : gallery.items) {
      if (q.identity == g.identity) CHECK(q.camera != g.camera);
    }
  }
}

TEST_CASE("dataset write/load round trip preserves pixels and metadata") {
  TempDir dir("dataset");
  DatasetIndex index = generate_synthetic_dataset(4, 3, 2, 17);
  write_dataset(index, dir.path().string());
  DatasetIndex loaded = load_dataset(dir.path().string(), 64, 32);
  REQUIRE(loaded.size() == index.size());
  for (const DatasetItem& item : loaded.items) {
    bool found = false;
    for (const DatasetItem& orig : index.items) {
      if (orig.identity == item.identity && orig.instance == item.instance) {
        CHECK(orig.camera == item.camera);
        CHECK(encode_ppm(orig.image) == encode_ppm(item.image));
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("load_dataset parses ids and cameras from filenames") {
  TempDir dir("names");
  Image tiny;
  tiny.h = 8;
  tiny.w = 8;
  tiny.rgb.assign(3 * 64, 0.5);
  write_ppm(dir.file("0003_c1_07.ppm"), tiny);
  DatasetIndex index = load_dataset(dir.path().string(), 8, 8);
  REQUIRE(index.size() == 1);
  CHECK(index.items[0].identity == 3);
  CHECK(index.items[0].camera == 1);
  CHECK(index.items[0].instance == 7);
}

TEST_CASE("load_dataset rejects malformed names and wrong sizes") {
  TempDir dir("bad");
  Image tiny;
  tiny.h = 8;
  tiny.w = 8;
  tiny.rgb.assign(3 * 64, 0.5);
  write_ppm(dir.file("persona_c1_01.ppm"), tiny);
  CHECK_THROWS_AS(load_dataset(dir.path().string(), 8, 8), IngestError);
  std::filesystem::remove(dir.file("persona_c1_01.ppm"));

  write_ppm(dir.file("0001_c1_01.ppm"), tiny);
  CHECK_THROWS_AS(load_dataset(dir.path().string(), 16, 8), IngestError);

  CHECK_THROWS_AS(load_dataset(dir.file("nowhere"), 8, 8), IngestError);
}

TEST_CASE("label map assigns contiguous classes in identity order") {
  DatasetIndex index;
  for (int id : {7, 3, 7, 11, 3}) {
    DatasetItem item;
    item.identity = id;
    index.items.push_back(item);
  }
  LabelMap map = build_label_map(index);
  CHECK(map.num_classes() == 3);
  CHECK(map.to_class.at(3) == 0);
  CHECK(map.to_class.at(7) == 1);
  CHECK(map.to_class.at(11) == 2);
  CHECK(map.to_identity == std::vector<int>{3, 7, 11});
}

TEST_CASE("make_batch assembles images and mapped labels") {
  DatasetIndex index = generate_synthetic_dataset(3, 2, 2, 23, 16, 8);
  LabelMap map = build_label_map(index);
  Batch batch = make_batch(index, {0, 3, 5}, map);
  CHECK(batch.images.shape() == Shape{3, 3, 16, 8});
  CHECK(batch.labels == std::vector<int>{0, 1, 2});
  CHECK(batch.images.at(0) == index.items[0].image.rgb[0]);
}

// --------------------------------------------------------------------------
// checkpoint
// --------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, Tensor>> sample_tensors(Rng& rng) {
  return {
      {"alpha", testutil::random_tensor({3, 4}, rng)},
      {"beta", testutil::random_tensor({2, 2, 2, 2}, rng)},
      {"gamma", testutil::random_tensor({5}, rng)},
  };
}

void corrupt_byte(const std::string& path, std::size_t offset_from_start) {
  std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
  file.seekg(0, std::ios::end);
  REQUIRE(static_cast<std::size_t>(file.tellg()) > offset_from_start);
  file.seekp(static_cast<std::streamoff>(offset_from_start));
  char byte;
  file.seekg(static_cast<std::streamoff>(offset_from_start));
  file.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0xFF);
  file.seekp(static_cast<std::streamoff>(offset_from_start));
  file.write(&byte, 1);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  Rng rng(307);
  auto tensors = sample_tensors(rng);
  const std::string config_text = "alpha = 0.8\nseed = 11\n";
  checkpoint_save(dir.file("m.stdb"), tensors, config_text);
  CheckpointData data = checkpoint_load(dir.file("m.stdb"));
  CHECK(data.config_text == config_text);
  CHECK(data.version == kCheckpointVersion);
  REQUIRE(data.tensors.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(data.tensors[i].first == tensors[i].first);
    CHECK(data.tensors[i].second.shape() == tensors[i].second.shape());
    CHECK(max_abs_diff(data.tensors[i].second.data(),
                       tensors[i].second.data()) == 0.0);
  }
}

TEST_CASE("checkpoint detects magic, crc, version and truncation damage") {
  TempDir dir("ckpt_err");
  Rng rng(311);
  const std::string path = dir.file("m.stdb");
  checkpoint_save(path, sample_tensors(rng), "seed = 1\n");

  auto kind_of = [&]() {
    try {
      checkpoint_load(path);
      return std::string("none");
    } catch (const PersistError& e) {
      switch (e.kind()) {
        case PersistError::Kind::BadMagic: return std::string("magic");
        case PersistError::Kind::BadVersion: return std::string("version");
        case PersistError::Kind::BadCrc: return std::string("crc");
        case PersistError::Kind::Truncated: return std::string("truncated");
        default: return std::string("other");
      }
    }
  };

  corrupt_byte(path, 0);
  CHECK(kind_of() == "magic");
  corrupt_byte(path, 0);  // restore

  // flip the last byte: the stored CRC no longer matches
  const auto size = std::filesystem::file_size(path);
  corrupt_byte(path, size - 1);
  CHECK(kind_of() == "crc");
  corrupt_byte(path, size - 1);

  // flipping a payload byte also lands in the CRC check
  corrupt_byte(path, 20);
  CHECK(kind_of() == "crc");
  corrupt_byte(path, 20);

  CHECK(kind_of() == "none");  // restored file loads again

  std::filesystem::resize_file(path, 6);
  CHECK(kind_of() == "truncated");

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "AB";
  }
  CHECK(kind_of() == "magic");
}

TEST_CASE("checkpoint version mismatch is its own failure") {
  TempDir dir("ckpt_ver");
  Rng rng(313);
  const std::string path = dir.file("m.stdb");
  // write a file with version 2 by patching and re-fixing the CRC by hand:
  // simpler: write bytes manually through the public writer then rewrite
  // version and recompute nothing -> expect BadCrc first; so instead build
  // a file from scratch with the right CRC.
  checkpoint_save(path, {{"t", Tensor::scalar(1.5)}}, "");
  std::vector<unsigned char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
  }
  bytes[4] = 2;  // version field
  // recompute trailing crc
  std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<unsigned>(bytes.size() - 4)));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  try {
    checkpoint_load(path);
    FAIL("expected PersistError");
  } catch (const PersistError& e) {
    CHECK(e.kind() == PersistError::Kind::BadVersion);
  }
}

// --------------------------------------------------------------------------
// heatmap
// --------------------------------------------------------------------------

TEST_CASE("constant maps render at the midpoint color") {
  const std::vector<unsigned char> bytes = render_heatmap({0.3, 0.3, 0.3, 0.3}, 2, 2);
  // header P6\n2 2\n255\n then 4 pixels of (128, 0, 128)
  const std::string header(bytes.begin(), bytes.begin() + 11);
  CHECK(header == "P6\n2 2\n255\n");
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(bytes[11 + p * 3 + 0] == 128);
    CHECK(bytes[11 + p * 3 + 1] == 0);
    CHECK(bytes[11 + p * 3 + 2] == 128);
  }
}

TEST_CASE("heatmap endpoints are pure blue and pure red") {
  const std::vector<unsigned char> bytes = render_heatmap({0.0, 1.0}, 1, 2);
  CHECK(bytes[11 + 0] == 0);
  CHECK(bytes[11 + 1] == 0);
  CHECK(bytes[11 + 2] == 255);
  CHECK(bytes[11 + 3] == 255);
  CHECK(bytes[11 + 4] == 0);
  CHECK(bytes[11 + 5] == 0);
}

TEST_CASE("fixed 2x2 map matches its golden bytes") {
  const std::vector<unsigned char> golden{
      'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n',
      0,   0,   255,            // 0.00 -> t = 0
      255, 0,   0,              // 1.00 -> t = 1
      128, 0,   128,            // 0.50 -> t = 0.5
      64,  0,   191,            // 0.25 -> t = 0.25
  };
  CHECK(render_heatmap({0.0, 1.0, 0.5, 0.25}, 2, 2) == golden);
  // byte-identical across repeated renders
  CHECK(render_heatmap({0.0, 1.0, 0.5, 0.25}, 2, 2) == golden);
}

TEST_CASE("upscaling repeats pixels with nearest neighbor") {
  const std::vector<unsigned char> bytes = render_heatmap({0.0, 1.0}, 1, 2, 2, 4);
  CHECK(bytes.size() == 11 + 2 * 4 * 3);
  // left half blue, right half red, both rows identical
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) {
      CHECK(bytes[11 + (y * 4 + x) * 3 + 2] == 255);
      CHECK(bytes[11 + (y * 4 + 2 + x) * 3 + 0] == 255);
    }
  }
}

TEST_CASE("heatmap export writes the rendered bytes and slices tensors") {
  TempDir dir("heat");
  Tensor maps = Tensor::from_data({2, 1, 2, 2},
                                  {0.0, 1.0, 0.5, 0.25, 1.0, 1.0, 1.0, 1.0});
  export_heatmap(maps, 0, dir.file("a.ppm"));
  std::ifstream in(dir.file("a.ppm"), std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  CHECK(bytes == render_heatmap({0.0, 1.0, 0.5, 0.25}, 2, 2));
  CHECK_THROWS_AS(export_heatmap(maps, 2, dir.file("b.ppm")), ContractError);
  const std::vector<double> bad{0.0, std::nan("")};
  CHECK_THROWS_AS(render_heatmap(bad, 1, 2), ContractError);
}

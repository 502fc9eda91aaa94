#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "fixtures.hpp"
#include "jam/checkpoint.hpp"

namespace jam {
namespace {

using testing::TempDir;

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

ErrorKind load_error(const std::filesystem::path& p) {
  try {
    load_checkpoint(p);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "loaded a corrupt checkpoint";
  return ErrorKind::Usage;
}

const std::vector<std::string> kNames{"audio", "text", "cf"};

JamParams params_for(const MixerKind& m, bool bias, std::uint64_t seed) {
  SeededRng rng(seed);
  return init_params(ModelShape{6, 4, 5, 3, {2, 7, 4}, bias}, m, rng);
}

TEST(Checkpoint, JamRoundTripForEveryMixer) {
  TempDir dir("ckpt");
  for (auto m : {MixerKind::avg(), MixerKind::cross(), MixerKind::moe(1), MixerKind::moe(2, false)}) {
    for (bool bias : {false, true}) {
      const auto p = params_for(m, bias, 4);
      const auto path = dir / (m.name() + (bias ? "-b" : "") + ".ckpt");
      save_jam_checkpoint(path, p, kNames);
      const auto back = load_jam_checkpoint(path);
      EXPECT_EQ(back, p) << m.name();
      const auto raw = load_checkpoint(path);
      EXPECT_EQ(raw.kind, "jam");
      EXPECT_EQ(raw.meta_at("mixer"), m.name());
    }
  }
}

TEST(Checkpoint, BytesAreAFunctionOfParams) {
  TempDir dir("ckpt-bytes");
  const auto p = params_for(MixerKind::cross(), false, 9);
  save_jam_checkpoint(dir / "a.ckpt", p, kNames);
  save_jam_checkpoint(dir / "b.ckpt", p, kNames);
  EXPECT_EQ(read_all(dir / "a.ckpt"), read_all(dir / "b.ckpt"));
  EXPECT_EQ(checkpoint_id(dir / "a.ckpt"), checkpoint_id(dir / "b.ckpt"));
  EXPECT_EQ(checkpoint_id(dir / "a.ckpt").size(), 16u);

  auto q = p;
  q.user(0, 0) = std::nextafter(q.user(0, 0), 1.0f);
  save_jam_checkpoint(dir / "c.ckpt", q, kNames);
  EXPECT_NE(checkpoint_id(dir / "a.ckpt"), checkpoint_id(dir / "c.ckpt"));
}

TEST(Checkpoint, ContainerLayout) {
  TempDir dir("ckpt-layout");
  save_jam_checkpoint(dir / "a.ckpt", params_for(MixerKind::avg(), false, 1), kNames);
  const auto b = read_all(dir / "a.ckpt");
  EXPECT_EQ(b.substr(0, 4), "JAMC");
  EXPECT_EQ(b[4], 1);
  const std::uint32_t header_len = std::uint8_t(b[8]) | std::uint8_t(b[9]) << 8 |
                                   std::uint8_t(b[10]) << 16 | std::uint32_t(std::uint8_t(b[11])) << 24;
  EXPECT_EQ(b[12], '{');
  EXPECT_EQ(b.substr(12 + header_len, 4), "JAMB");
}

TEST(Checkpoint, CorruptFilesAreFormatErrors) {
  TempDir dir("ckpt-bad");
  save_jam_checkpoint(dir / "good.ckpt", params_for(MixerKind::moe(2), true, 2), kNames);
  const auto good = read_all(dir / "good.ckpt");

  auto bad = good;
  bad[1] = 'X';
  write_all(dir / "magic.ckpt", bad);
  EXPECT_EQ(load_error(dir / "magic.ckpt"), ErrorKind::Format);

  write_all(dir / "trunc.ckpt", good.substr(0, good.size() - 3));
  EXPECT_EQ(load_error(dir / "trunc.ckpt"), ErrorKind::Format);

  write_all(dir / "tail.ckpt", good + "zz");
  EXPECT_EQ(load_error(dir / "tail.ckpt"), ErrorKind::Format);

  bad = good;
  bad[13] = '#';
  write_all(dir / "header.ckpt", bad);
  EXPECT_EQ(load_error(dir / "header.ckpt"), ErrorKind::Format);

  write_all(dir / "tiny.ckpt", "JAM");
  EXPECT_EQ(load_error(dir / "tiny.ckpt"), ErrorKind::Format);
  EXPECT_EQ(load_error(dir / "absent.ckpt"), ErrorKind::Data);
}

TEST(Checkpoint, KindMismatchAndMissingTensor) {
  Checkpoint c;
  c.kind = "pop";
  EXPECT_THROW(jam_params_from(c), Error);
  auto jc = jam_checkpoint(params_for(MixerKind::cross(), false, 3), kNames);
  EXPECT_NO_THROW(jam_params_from(jc));
  jc.tensor_names.pop_back();
  jc.tensors.pop_back();
  try {
    jam_params_from(jc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
  EXPECT_THROW(jam_checkpoint(params_for(MixerKind::avg(), false, 3), {"only-one"}), Error);
}

}  // namespace
}  // namespace jam

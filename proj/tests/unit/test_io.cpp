#include <doctest.h>

#include "adjd/checkpoint.hpp"
#include "adjd/config.hpp"
#include "adjd/errors.hpp"
#include "adjd/rng.hpp"
#include "../support/toy.hpp"

using namespace adjd;

namespace {

std::string validation_path(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.key_path();
  }
  return "<accepted>";
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("checkpoint bytes follow the documented layout") {
  Checkpoint c;
  c.arrays.push_back({"w", {2}, {1.5, -2.0}});
  const std::string b = encode_checkpoint(c);
  const std::string sched = nlohmann::json(c.schedule).dump();
  // magic, version, schedule, count, name, ndim, dim, data
  CHECK(b.size() == 4 + 4 + 4 + sched.size() + 4 + (4 + 1) + 4 + 8 + 2 * 8);
  CHECK(b.substr(0, 4) == "ADJD");
  CHECK(b.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
  CHECK(b.substr(12, sched.size()) == sched);
  // 1.5 = 0x3FF8000000000000, little-endian
  const std::size_t data = b.size() - 16;
  CHECK(b.substr(data, 8) == std::string("\x00\x00\x00\x00\x00\x00\xf8\x3f", 8));
}

TEST_CASE("denoiser and classifier round trip bitwise") {
  const Denoiser& m = testing::trained_toy();
  Checkpoint c;
  c.schedule = NoiseSchedule{ScheduleKind::cosine, 0.1, 20, 0.99, 1e-3};
  put_denoiser(c, m);
  put_classifier(c, testing::trained_classifier());
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  CHECK(back == c);
  const Denoiser m2 = get_denoiser(back);
  CHECK(m2.config() == m.config());
  CHECK(m2.flatten() == m.flatten());
  CHECK(m2.cond_table() == m.cond_table());
  CHECK(m2.freqs() == m.freqs());
  CHECK(get_classifier(back).net().params() == testing::trained_classifier().net().params());
  CHECK(back.schedule == c.schedule);

  const std::string path = "io_roundtrip.ckpt";
  save_checkpoint(path, c);
  CHECK(load_checkpoint(path) == c);
  std::remove(path.c_str());
}

TEST_CASE("corrupted checkpoints are rejected") {
  Checkpoint c;
  put_denoiser(c, testing::constant_model(Eigen::VectorXd::Ones(2)));
  const std::string good = encode_checkpoint(c);

  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(decode_checkpoint(good.substr(0, cut)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(good + "x"), FormatError);
  CHECK_THROWS_AS(get_classifier(c), FormatError);
}

TEST_CASE("schedule mismatch is reported") {
  CHECK_FALSE(schedule_mismatch(NoiseSchedule{}, NoiseSchedule{}).has_value());
  NoiseSchedule other;
  other.beta_max = 10.0;
  const auto w = schedule_mismatch(NoiseSchedule{}, other);
  REQUIRE(w.has_value());
  CHECK(w->find("schedule mismatch") == 0);
}

TEST_CASE("config: empty document gives every default") {
  const RunConfig c = parse_config("{}");
  CHECK(c == RunConfig{});
  CHECK(c.solver.spec.kind == SolverKind::rk4);
  CHECK(c.solver.steps == 50);
  CHECK(c.task.solver == SolverKind::euler);
  CHECK(c.task.steps == 31);
  CHECK(c.task.audit.tau == 0.8);
  const nlohmann::json j = to_json(c);
  CHECK(j["schedule"]["beta_max"] == 20.0);
  CHECK(j["task"]["guide"]["epochs"] == 30);
}

TEST_CASE("config: round trip") {
  RunConfig c;
  c.seed = 18446744073709551615ull;
  c.output_dir = "runs/a";
  c.schedule.kind = ScheduleKind::cosine;
  c.schedule.t_end = 0.99;
  c.solver.spec.kind = SolverKind::ab4;
  c.solver.grid = GridScheme::logsnr;
  c.solver.cfg_scale = 0.1 + 0.2;
  c.task.gradcheck.targets = {GradTarget::time, GradTarget::noise};
  c.task.bench.nfe = {7, 9};
  c.task.audit.loss = AuditLoss::cross_entropy;
  c.model.denoiser.hidden = {3, 5, 7};
  c.model.denoiser.activation = Activation::tanh;
  CHECK(parse_config(serialize(c)) == c);
  CHECK(serialize(parse_config(serialize(c))) == serialize(c));
}

TEST_CASE("config: errors name the key path or byte offset") {
  CHECK(validation_path(R"({"solver": {"kind": "rk9"}})") == "solver.kind");
  CHECK(validation_path(R"({"solver": {"knd": "rk4"}})") == "solver.knd");
  CHECK(validation_path(R"({"task": {"audit": {"tau": "big"}}})") == "task.audit.tau");
  CHECK(validation_path(R"({"task": {"bench": {"solver": "ab5"}}})") == "task.bench.solver");
  CHECK(validation_path(R"({"task": {"gradcheck": {"targets": ["noise", "eta"]}}})") == "task.gradcheck.targets[1]");
  CHECK(validation_path(R"({"model": {"hidden": [4, -1]}})") == "model.hidden[1]");
  CHECK(validation_path(R"({"schedule": {"t_start": 0}})") == "schedule.t_start");
  CHECK(validation_path(R"({"bogus": 1})") == "bogus");
  CHECK(validation_path(R"({"seed": -3})") == "seed");
  CHECK(validation_path(R"({"solver": 3})") == "solver");
  CHECK(validation_path(R"([])") == "<root>");
  CHECK_THROWS_AS(parse_config(R"({"schedule": {"kind": "discrete"}})"), UnsupportedError);

  try {
    parse_config("{\"seed\": 1,, }");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.byte() == 11);
  }
  try {
    parse_config("");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.byte() == 0);
  }
}

}

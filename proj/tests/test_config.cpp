#include "ctap/config.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace ctap;

TEST_CASE("defaults are present and typed") {
  const Config c;
  CHECK(c.get_int("corpus.n_utterances") == 10);
  CHECK(c.get_double("split.pretrain") == doctest::Approx(0.8));
  CHECK(c.get_bool("loss.l2_normalize"));
  CHECK(c.get("loss.variant") == "full");
  CHECK(c.values().size() == Config::defaults().size());
}

TEST_CASE("parse handles comments, blanks and whitespace") {
  const auto c = Config::parse("# header\n\n  corpus.n_utterances = 30   # inline\nloss.variant=no_decoder\r\n");
  CHECK(c.get_int("corpus.n_utterances") == 30);
  CHECK(c.get("loss.variant") == "no_decoder");
  CHECK(c.get_int("corpus.n_speakers") == 2);
}

TEST_CASE("unknown keys and bad syntax are rejected") {
  CHECK_THROWS_AS(Config::parse("corpus.n_utterance = 3"), ConfigError);
  CHECK_THROWS_AS(Config::parse("just words"), ConfigError);
  Config c;
  CHECK_THROWS_AS(c.set("nope=1"), ConfigError);
  CHECK_THROWS_AS(c.get("nope"), ConfigError);
  try {
    Config::parse("corpus.seed = 1\n\nbogus = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("typed getters validate values") {
  Config c;
  c.set("corpus.seed", "12x");
  CHECK_THROWS_AS(c.get_int("corpus.seed"), ConfigError);
  c.set("corpus.seed", "99999999999");
  CHECK_THROWS_AS(c.get_int("corpus.seed"), ConfigError);
  CHECK(c.get_int64("corpus.seed") == 99999999999LL);
  c.set("train.lr", "abc");
  CHECK_THROWS_AS(c.get_double("train.lr"), ConfigError);
  c.set("train.lr = 1e-3 ");
  CHECK(c.get_double("train.lr") == doctest::Approx(1e-3));
  c.set("train.lr=2.5x");
  CHECK_THROWS_AS(c.get_double("train.lr"), ConfigError);
  for (const char* t : {"true", "1", "yes", "on"}) {
    c.set("loss.l2_normalize", t);
    CHECK(c.get_bool("loss.l2_normalize"));
  }
  for (const char* f : {"false", "0", "no", "off"}) {
    c.set("loss.l2_normalize", f);
    CHECK_FALSE(c.get_bool("loss.l2_normalize"));
  }
  c.set("loss.l2_normalize", "maybe");
  CHECK_THROWS_AS(c.get_bool("loss.l2_normalize"), ConfigError);
}

TEST_CASE("dump round-trips through parse") {
  Config c;
  c.set("corpus.n_utterances", "17");
  c.set("train.lr", "0.01");
  const auto back = Config::parse(c.dump());
  CHECK(back.values() == c.values());
}

TEST_CASE("from_file") {
  ctap::test::TempDir dir("config");
  std::ofstream(dir.path() / "a.cfg") << "train.max_steps = 5\n";
  CHECK(Config::from_file((dir.path() / "a.cfg").string()).get_int("train.max_steps") == 5);
  CHECK_THROWS_AS(Config::from_file((dir.path() / "missing.cfg").string()), ConfigError);
}

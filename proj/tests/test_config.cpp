#include <doctest.h>

#include <optional>

#include "deqsci/config.hpp"
#include "deqsci/error.hpp"

using namespace deqsci;

namespace {

std::optional<ErrorKind> kind_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("defaults and typed reads") {
  const RunConfig c;
  CHECK(c.real("solver.tol") == 1e-6);
  CHECK(c.integer("solver.max_iter") == 150);
  CHECK(c.str("solver.kind") == "anderson");
  CHECK(c.flag("timing"));
  CHECK(c.list("bench.methods") == std::vector<std::string>{"pnp_gap", "de_gap"});
  for (const ConfigKey &k : RunConfig::keys()) {
    CHECK(RunConfig::known(k.name));
    CHECK_FALSE(k.help.empty());
  }
  c.validate();
}

TEST_CASE("dump and load round trip") {
  RunConfig a;
  a.set("solver.tol", "1e-9");
  a.set("pnp.schedule", "0.1/0.05/0.02");
  a.set("io.output", "out dir/x.vsci");
  a.set("train.momentum", "0.5");
  RunConfig b;
  b.load_text(a.dump());
  CHECK(b.dump() == a.dump());
  CHECK(b.reals("pnp.schedule") == std::vector<double>{0.1, 0.05, 0.02});
  CHECK(b.str("io.output") == "out dir/x.vsci");
}

TEST_CASE("comments and whitespace") {
  RunConfig c;
  c.load_text("# header\n\n  solver.max_iter =  40   # trailing\nmethod=pnp-gap\n");
  CHECK(c.integer("solver.max_iter") == 40);
  CHECK(c.str("method") == "pnp-gap");
}

TEST_CASE("errors name the offending key") {
  RunConfig c;
  try {
    c.load_text("solver.tol = 1e-6\nsolver.tolerance = 3\n", "run.conf");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("solver.tolerance") != std::string::npos);
    CHECK(std::string(e.what()).find("run.conf:2") != std::string::npos);
  }
  CHECK(kind_of([&] { c.set("solver.max_iter", "many"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.set("solver.kind", "newton"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.set("timing", "maybe"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.set("seed", "-1"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.load_text("no equals sign\n"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.load_file("/nonexistent/run.conf"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { (void)c.get("nope"); }) == ErrorKind::Config);
}

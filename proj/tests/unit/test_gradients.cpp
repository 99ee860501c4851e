#include <doctest.h>

#include "gradient_suite.hpp"

TEST_SUITE("numerics") {
  TEST_CASE("every differentiable operation matches central differences") {
    for (const auto& r : partwise::testing::run_gradient_suite()) {
      INFO(r.name << " checked=" << r.checked << " failed=" << r.failed << " worst=" << r.worst_rel << " at "
                  << r.worst_at);
      CHECK(r.ok());
    }
  }
}

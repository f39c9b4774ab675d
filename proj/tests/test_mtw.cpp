#include <doctest.h>
#include "testutil.hpp"

TEST_CASE("placeholder test_mtw") { CHECK(true); }

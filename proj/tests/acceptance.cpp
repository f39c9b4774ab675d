#include <doctest.h>
#include "testutil.hpp"

TEST_CASE("placeholder acceptance") { CHECK(true); }

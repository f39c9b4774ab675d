#include <doctest.h>
#include "testutil.hpp"

TEST_CASE("placeholder test_io_config") { CHECK(true); }

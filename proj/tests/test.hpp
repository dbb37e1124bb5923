#pragma once

// The library has its own toString overloads for enums; keep doctest from
// picking them up through argument-dependent lookup.
#define DOCTEST_STRINGIFY(...) ::doctest::toString(__VA_ARGS__)
#include <doctest.h>

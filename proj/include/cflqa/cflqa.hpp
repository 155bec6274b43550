#pragma once

#include "cflqa/bench.hpp"
#include "cflqa/hybrid.hpp"
#include "cflqa/instance.hpp"
#include "cflqa/qubo.hpp"
#include "cflqa/qubo_io.hpp"
#include "cflqa/solvers.hpp"

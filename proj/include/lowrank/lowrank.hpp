#pragma once

#include "lowrank/bench.hpp"
#include "lowrank/cascade.hpp"
#include "lowrank/io.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/matfun.hpp"
#include "lowrank/rank_dynamics.hpp"
#include "lowrank/rng.hpp"
#include "lowrank/segtree.hpp"
#include "lowrank/tensor_segtree.hpp"
